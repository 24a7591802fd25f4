//! Secrecy-rate maximization for a UAV that carries an integrated sensing and
//! communication (ISAC) transmitter.
//!
//! The UAV serves one ground IoT device while tracking an untrusted target
//! that may eavesdrop. Transmit beamformers, the planar trajectory and the
//! receive combiners are optimized in turn ([`orchestrate::run`]) to maximize
//! the slot-averaged secrecy rate subject to a minimum echo SNR.
//!
//! Module map:
//!
//! * [`scenario`] configuration, unit conversions, timeline
//! * [`channel`] path loss, Rician fading, ULA steering
//! * [`metrics`] SNRs and secrecy rates
//! * [`cvxcore`] first-order surrogates and a small barrier solver
//! * [`txbf`], [`trajopt`], [`rxbf`] the three block subproblems
//! * [`orchestrate`] alternating loop and baseline schemes
//! * [`cli`] run/sweep drivers and CSV artifacts

// `!(x >= 0.0)` style checks are used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod cvxcore;
pub mod error;
pub mod metrics;
pub mod orchestrate;
pub mod rxbf;
pub mod scenario;
pub mod trajopt;
pub mod txbf;

pub use error::{Error, Result};

pub type Complex = nalgebra::Complex<f64>;

/// Locale-independent scientific formatting with 9 significant digits.
pub fn fmt_sig(v: f64) -> String {
    format!("{v:.8e}")
}

#[cfg(test)]
mod tests {
    use super::fmt_sig;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig(1.0), "1.00000000e0");
        assert_eq!(fmt_sig(-0.000123456789123), "-1.23456789e-4");
    }
}
