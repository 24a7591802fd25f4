//! Device, eavesdropper and echo SNRs, and the resulting secrecy rates.
//!
//! Each SNR uses its own receiver's noise power. The `[.]^+` clamp is only
//! applied to reported secrecy; optimizers work on the unclamped difference
//! ([`secrecy_unclamped`]).

use serde::Serialize;

use crate::channel::{CVector, ChannelSlot};
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

const UNIT_NORM_TOL: f64 = 1e-9;

pub fn snr_device(slot: &ChannelSlot, w: &CVector, sigma2: f64) -> f64 {
    slot.l_ud * slot.l_ud * slot.h_ud.dotc(w).norm_sqr() / sigma2
}

pub fn snr_eve(slot: &ChannelSlot, w: &CVector, sigma2: f64) -> f64 {
    slot.l_ut * slot.l_ut * slot.h_ut.dotc(w).norm_sqr() / sigma2
}

/// Round-trip echo SNR after receive combining with unit-norm `u`.
pub fn snr_echo(slot: &ChannelSlot, w: &CVector, u: &CVector, sigma2: f64) -> Result<f64> {
    let unorm2 = u.norm_squared();
    if (unorm2.sqrt() - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::NonUnitBeamformer(unorm2.sqrt()));
    }
    Ok(echo_power(slot, w, u) / (unorm2 * sigma2))
}

/// `|u^H L_rt^2 g_rt h_ut^H w|^2` without noise normalization.
pub fn echo_power(slot: &ChannelSlot, w: &CVector, u: &CVector) -> f64 {
    let l2 = slot.l_rt * slot.l_rt;
    (u.dotc(&slot.g_rt) * slot.h_ut.dotc(w)).norm_sqr() * l2 * l2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotMetrics {
    pub snr_ud: f64,
    pub snr_ut: f64,
    pub snr_echo: f64,
    pub rate_ud: f64,
    pub rate_ut: f64,
    pub secrecy: f64,
}

impl SlotMetrics {
    pub fn from_snrs(snr_ud: f64, snr_ut: f64, snr_echo: f64) -> Self {
        let mut m = SlotMetrics {
            snr_ud,
            snr_ut,
            snr_echo,
            rate_ud: snr_ud.ln_1p() / std::f64::consts::LN_2,
            rate_ut: snr_ut.ln_1p() / std::f64::consts::LN_2,
            secrecy: 0.0,
        };
        m.secrecy = secrecy_rate(&m);
        m
    }
}

/// `[log2(1+snr_ud) - log2(1+snr_ut)]^+`.
pub fn secrecy_rate(m: &SlotMetrics) -> f64 {
    secrecy_unclamped(m.snr_ud, m.snr_ut).max(0.0)
}

pub fn secrecy_unclamped(snr_ud: f64, snr_ut: f64) -> f64 {
    (snr_ud.ln_1p() - snr_ut.ln_1p()) / std::f64::consts::LN_2
}

pub fn average_secrecy(per_slot: &[f64]) -> Result<f64> {
    if per_slot.is_empty() {
        return Err(Error::EmptySlots);
    }
    Ok(per_slot.iter().sum::<f64>() / per_slot.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissionMetrics {
    pub slots: Vec<SlotMetrics>,
    pub r_sum: f64,
}

pub fn slot_metrics(cfg: &ScenarioConfig, slot: &ChannelSlot, w: &CVector, u: &CVector) -> Result<SlotMetrics> {
    let lin = &cfg.linear;
    Ok(SlotMetrics::from_snrs(
        snr_device(slot, w, lin.noise_dev_w),
        snr_eve(slot, w, lin.noise_eve_w),
        snr_echo(slot, w, u, lin.noise_echo_w)?,
    ))
}

pub fn mission_metrics(
    cfg: &ScenarioConfig,
    channels: &[ChannelSlot],
    w: &[CVector],
    u: &[CVector],
) -> Result<MissionMetrics> {
    let slots = channels
        .iter()
        .zip(w)
        .zip(u)
        .map(|((ch, w), u)| slot_metrics(cfg, ch, w, u))
        .collect::<Result<Vec<_>>>()?;
    let secrecy: Vec<f64> = slots.iter().map(|m| m.secrecy).collect();
    let r_sum = average_secrecy(&secrecy)?;
    Ok(MissionMetrics { slots, r_sum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Complex;
    use proptest::prelude::*;

    fn cv(v: &[(f64, f64)]) -> CVector {
        CVector::from_iterator(v.len(), v.iter().map(|&(a, b)| Complex::new(a, b)))
    }

    fn toy_slot() -> ChannelSlot {
        ChannelSlot {
            slot: 1,
            h_ud: cv(&[(1.0, 0.5), (-0.3, 0.8)]),
            h_ut: cv(&[(0.2, -1.0), (0.7, 0.1)]),
            g_rt: cv(&[(1.0, 0.0), (0.0, 1.0)]),
            l_ud: 0.5,
            l_ut: 0.25,
            l_rt: 0.75,
        }
    }

    #[test]
    fn orthogonal_beam_gives_zero() {
        let ch = toy_slot();
        let perp = |h: &CVector| CVector::from_vec(vec![h[1].conj(), -h[0].conj()]);
        let w = perp(&ch.h_ud);
        assert!(ch.h_ud.dotc(&w).norm() < 1e-15);
        assert!(snr_device(&ch, &w, 1.0) < 1e-30);
        assert!(snr_eve(&ch, &perp(&ch.h_ut), 1.0) < 1e-30);
    }

    #[test]
    fn matched_filter_device_snr() {
        let ch = toy_slot();
        let c = 1.7;
        let w = ch.h_ud.normalize() * Complex::from(c);
        let expected = ch.l_ud.powi(2) * ch.h_ud.norm_squared() * c * c / 2.0;
        assert!((snr_device(&ch, &w, 2.0) / expected - 1.0).abs() < 1e-13);
    }

    #[test]
    fn scalar_hand_evaluation() {
        let ch = toy_slot();
        let w = cv(&[(0.3, -0.4), (0.9, 0.2)]);
        // conj(h0) w0 + conj(h1) w1 with h0=(1+0.5j), h1=(-0.3+0.8j)
        let (h0r, h0i, h1r, h1i) = (1.0, 0.5, -0.3, 0.8);
        let (w0r, w0i, w1r, w1i) = (0.3, -0.4, 0.9, 0.2);
        let re = h0r * w0r + h0i * w0i + h1r * w1r + h1i * w1i;
        let im = h0r * w0i - h0i * w0r + h1r * w1i - h1i * w1r;
        let expected = 0.25 * (re * re + im * im) / 0.1;
        assert!((snr_device(&ch, &w, 0.1) - expected).abs() < 1e-12);
    }

    #[test]
    fn symmetric_channels_match() {
        let mut ch = toy_slot();
        ch.h_ut = ch.h_ud.clone();
        ch.l_ut = ch.l_ud;
        let w = cv(&[(0.3, -0.4), (0.9, 0.2)]);
        assert_eq!(snr_device(&ch, &w, 0.3), snr_eve(&ch, &w, 0.3));
        let w2 = &w * Complex::from(2.0);
        assert!((snr_eve(&ch, &w2, 0.3) / snr_eve(&ch, &w, 0.3) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn echo_snr_orthogonal_and_matched() {
        let ch = toy_slot();
        let w = cv(&[(0.3, -0.4), (0.9, 0.2)]);
        // g_rt = (1, j) and u = (1, -j)/sqrt2 give u^H g = (1 + j*j)/sqrt2 = 0
        let u_perp = cv(&[(1.0, 0.0), (0.0, -1.0)]).normalize();
        assert!(u_perp.dotc(&ch.g_rt).norm() < 1e-15);
        assert!(snr_echo(&ch, &w, &u_perp, 1.0).unwrap() < 1e-30);

        let c = 0.8;
        let u = ch.g_rt.normalize();
        let wm = ch.h_ut.normalize() * Complex::from(c);
        let expected = ch.l_rt.powi(4) * ch.g_rt.norm_squared() * ch.h_ut.norm_squared() * c * c / 0.5;
        let got = snr_echo(&ch, &wm, &u, 0.5).unwrap();
        assert!((got / expected - 1.0).abs() < 1e-13);
    }

    #[test]
    fn echo_scalar_oracle() {
        let ch = toy_slot();
        let w = cv(&[(0.3, -0.4), (0.9, 0.2)]);
        let u = cv(&[(0.6, 0.0), (0.0, 0.8)]);
        // u^H g = 0.6*1 + conj(0.8j)*j = 0.6 + 0.8 = 1.4
        let ug = 1.4f64;
        // h_ut^H w with h0 = 0.2-1.0j, h1 = 0.7+0.1j
        let (h0r, h0i, h1r, h1i) = (0.2, -1.0, 0.7, 0.1);
        let (w0r, w0i, w1r, w1i) = (0.3, -0.4, 0.9, 0.2);
        let re = h0r * w0r + h0i * w0i + h1r * w1r + h1i * w1i;
        let im = h0r * w0i - h0i * w0r + h1r * w1i - h1i * w1r;
        let expected = 0.75f64.powi(4) * ug * ug * (re * re + im * im) / 0.01;
        let got = snr_echo(&ch, &w, &u, 0.01).unwrap();
        assert!((got / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_unit_combiner_rejected() {
        let ch = toy_slot();
        let w = cv(&[(1.0, 0.0), (0.0, 0.0)]);
        let u = cv(&[(1.0, 0.0), (1.0, 0.0)]);
        assert!(matches!(snr_echo(&ch, &w, &u, 1.0), Err(Error::NonUnitBeamformer(_))));
    }

    #[test]
    fn secrecy_examples() {
        assert_eq!(SlotMetrics::from_snrs(2.0, 2.0, 0.0).secrecy, 0.0);
        assert!((SlotMetrics::from_snrs(3.0, 1.0, 0.0).secrecy - 1.0).abs() < 1e-15);
        assert_eq!(SlotMetrics::from_snrs(0.0, 7.0, 0.0).secrecy, 0.0);
    }

    #[test]
    fn averages() {
        assert_eq!(average_secrecy(&[1.5; 7]).unwrap(), 1.5);
        assert_eq!(average_secrecy(&[0.0, 2.0]).unwrap(), 1.0);
        assert!(matches!(average_secrecy(&[]), Err(Error::EmptySlots)));
    }

    proptest! {
        #[test]
        fn secrecy_nonnegative_and_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6, d in 0.0f64..1e3) {
            let base = SlotMetrics::from_snrs(a, b, 0.0).secrecy;
            prop_assert!(base >= 0.0);
            prop_assert!(SlotMetrics::from_snrs(a + d, b, 0.0).secrecy >= base);
            prop_assert!(SlotMetrics::from_snrs(a, b + d, 0.0).secrecy <= base);
        }

        #[test]
        fn snr_homogeneity(c in 0.01f64..10.0, wr in prop::array::uniform4(-1.0f64..1.0)) {
            let ch = toy_slot();
            let w = cv(&[(wr[0], wr[1]), (wr[2], wr[3])]);
            let ws = &w * Complex::from(c);
            let u = ch.g_rt.normalize();
            let r = |f: f64, g: f64| if f == 0.0 { g == 0.0 } else { (g / f - c * c).abs() < 1e-9 * c * c };
            prop_assert!(r(snr_device(&ch, &w, 1.0), snr_device(&ch, &ws, 1.0)));
            prop_assert!(r(snr_eve(&ch, &w, 1.0), snr_eve(&ch, &ws, 1.0)));
            prop_assert!(r(snr_echo(&ch, &w, &u, 1.0).unwrap(), snr_echo(&ch, &ws, &u, 1.0).unwrap()));
        }

        #[test]
        fn average_is_permutation_invariant(mut v in prop::collection::vec(0.0f64..20.0, 1..30), seed in 0usize..1000) {
            let a = average_secrecy(&v).unwrap();
            let n = v.len();
            v.rotate_left(seed % n);
            v.reverse();
            prop_assert!((average_secrecy(&v).unwrap() - a).abs() < 1e-12);
        }
    }
}
