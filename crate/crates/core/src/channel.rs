//! Per-slot channel synthesis: distance path loss, Rician fading with ULA
//! line-of-sight components, and the receive-side echo steering vector.
//!
//! Arrays lie along the global x-axis with half-wavelength spacing. The
//! steering phase uses the direction cosine of the UAV-to-node vector with
//! respect to that axis, so `sin(angle) = (x_node - x_uav) / d`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scenario::{Position3, ScenarioConfig};
use crate::Complex;

pub type CVector = DVector<Complex>;

/// Link identifiers used to derive independent fading streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Device = 0,
    Target = 1,
}

/// Amplitude path loss `L` with `L^2 = rho * d^(-exponent)`.
pub fn path_loss_amplitude(p_uav: &Position3, p_ground: &Position3, rho: f64, exponent: f64) -> Result<f64> {
    let d2 = squared_distance(p_uav, p_ground);
    if d2 <= 0.0 {
        return Err(Error::ZeroDistance);
    }
    Ok((rho * d2.powf(-exponent / 2.0)).sqrt())
}

fn squared_distance(a: &Position3, b: &Position3) -> f64 {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    let dz = a.z - b.z;
    dz * dz + dx * dx + dy * dy
}

/// Half-wavelength ULA response, entry `k = exp(j*pi*k*sin(angle))`.
pub fn ula_steering(angle: f64, n: usize) -> CVector {
    steering_from_sine(angle.sin(), n)
}

pub fn steering_from_sine(sine: f64, n: usize) -> CVector {
    CVector::from_fn(n, |k, _| Complex::from_polar(1.0, PI * k as f64 * sine))
}

/// Direction cosine of `node` seen from `uav` along the array axis.
pub fn direction_sine(uav: &Position3, node: &Position3) -> f64 {
    let d = squared_distance(uav, node).sqrt();
    if d == 0.0 {
        0.0
    } else {
        (node.x - uav.x) / d
    }
}

/// Angle (radians from broadside) of `node` seen from `uav`.
pub fn steering_angle(uav: &Position3, node: &Position3) -> f64 {
    direction_sine(uav, node).asin()
}

/// NLoS samples for every slot and communication link, fixed for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingDraw {
    pub seed: u64,
    device: Vec<CVector>,
    target: Vec<CVector>,
}

impl FadingDraw {
    /// Draws `slots` i.i.d. CN(0, I) vectors per link.
    ///
    /// Slot `s` (1-based) of link `l` comes from its own ChaCha stream
    /// keyed by `(seed, s, l)`, so draws do not depend on evaluation order.
    pub fn generate(seed: u64, slots: usize, n_tx: usize) -> Self {
        let gen = |link: Link| {
            (1..=slots)
                .map(|s| nlos_sample(seed, s, link, n_tx))
                .collect::<Vec<_>>()
        };
        Self {
            seed,
            device: gen(Link::Device),
            target: gen(Link::Target),
        }
    }

    pub fn for_config(cfg: &ScenarioConfig) -> Self {
        Self::generate(cfg.rng_seed, cfg.slots, cfg.n_tx)
    }

    pub fn slots(&self) -> usize {
        self.device.len()
    }

    /// NLoS vector of `link` in 1-based slot `s`.
    pub fn nlos(&self, s: usize, link: Link) -> &CVector {
        match link {
            Link::Device => &self.device[s - 1],
            Link::Target => &self.target[s - 1],
        }
    }
}

pub fn nlos_sample(seed: u64, slot: usize, link: Link, n: usize) -> CVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((slot as u64) << 8) | link as u64);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex::new(re * scale, im * scale)
    })
}

/// `sqrt(beta/(1+beta)) * los + sqrt(1/(1+beta)) * nlos`.
pub fn rician_mix(beta: f64, los: &CVector, nlos: &CVector) -> CVector {
    let (a, b) = if beta.is_infinite() {
        (1.0, 0.0)
    } else {
        ((beta / (1.0 + beta)).sqrt(), (1.0 / (1.0 + beta)).sqrt())
    };
    los * Complex::from(a) + nlos * Complex::from(b)
}

/// Channel state of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSlot {
    pub slot: usize,
    pub h_ud: CVector,
    pub h_ut: CVector,
    /// Receive-side steering toward the target, length `n_rx`.
    pub g_rt: CVector,
    /// Device path-loss amplitude (communication exponent).
    pub l_ud: f64,
    /// Target path-loss amplitude (communication exponent).
    pub l_ut: f64,
    /// Echo path-loss amplitude (sensing exponent); the round trip gain
    /// is `l_rt^4`.
    pub l_rt: f64,
}

pub fn realize_slot(cfg: &ScenarioConfig, p_uav: &Position3, slot: usize, draw: &FadingDraw) -> Result<ChannelSlot> {
    if slot == 0 || slot > draw.slots() {
        return Err(Error::Dimension {
            expected: draw.slots(),
            got: slot,
        });
    }
    let rho = cfg.linear.pathloss_ref;
    let l_ud = path_loss_amplitude(p_uav, &cfg.iot, rho, cfg.pathloss_exp_comm)?;
    let l_ut = path_loss_amplitude(p_uav, &cfg.ut, rho, cfg.pathloss_exp_comm)?;
    let l_rt = path_loss_amplitude(p_uav, &cfg.ut, rho, cfg.pathloss_exp_sense)?;

    let sin_d = direction_sine(p_uav, &cfg.iot);
    let sin_t = direction_sine(p_uav, &cfg.ut);
    let h_ud = rician_mix(
        cfg.linear.rician_ud,
        &steering_from_sine(sin_d, cfg.n_tx),
        draw.nlos(slot, Link::Device),
    );
    let h_ut = rician_mix(
        cfg.linear.rician_ut,
        &steering_from_sine(sin_t, cfg.n_tx),
        draw.nlos(slot, Link::Target),
    );
    Ok(ChannelSlot {
        slot,
        h_ud,
        h_ut,
        g_rt: steering_from_sine(sin_t, cfg.n_rx),
        l_ud,
        l_ut,
        l_rt,
    })
}

/// Realizes every slot along a trajectory (one position per slot).
pub fn realize_all(cfg: &ScenarioConfig, positions: &[Position3], draw: &FadingDraw) -> Result<Vec<ChannelSlot>> {
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| realize_slot(cfg, p, i + 1, draw))
        .collect()
}

/// Debug dump: `slot,link,index,re,im` rows for every channel vector.
pub fn write_channel_dump<W: Write>(out: &mut W, slots: &[ChannelSlot]) -> std::io::Result<()> {
    writeln!(out, "slot,link,index,re,im")?;
    for ch in slots {
        for (name, v) in [("ud", &ch.h_ud), ("ut", &ch.h_ut), ("rt", &ch.g_rt)] {
            for (k, z) in v.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    ch.slot,
                    name,
                    k,
                    crate::fmt_sig(z.re),
                    crate::fmt_sig(z.im)
                )?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_scenario;
    use proptest::prelude::*;

    #[test]
    fn unit_reference_path_loss() {
        let l = path_loss_amplitude(&Position3::new(0.0, 0.0, 1.0), &Position3::ground(0.0, 0.0), 1.0, 2.0).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
    }

    #[test]
    fn default_geometry_path_loss() {
        let l = path_loss_amplitude(
            &Position3::new(0.0, 0.0, 15.0),
            &Position3::ground(10.0, 20.0),
            1e-3,
            3.1,
        )
        .unwrap();
        // d^2 = 100 + 400 + 225
        let expected = (1e-3 * 725f64.powf(-1.55)).sqrt();
        assert!((l / expected - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_square_law() {
        let g = Position3::ground(0.0, 0.0);
        let l1 = path_loss_amplitude(&Position3::new(3.0, 0.0, 4.0), &g, 1.0, 2.0).unwrap();
        let l2 = path_loss_amplitude(&Position3::new(6.0, 0.0, 8.0), &g, 1.0, 2.0).unwrap();
        assert!((l2 * l2 / (l1 * l1) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn colocated_nodes_rejected() {
        let p = Position3::ground(1.0, 1.0);
        assert!(matches!(
            path_loss_amplitude(&p, &p, 1.0, 2.0),
            Err(Error::ZeroDistance)
        ));
    }

    #[test]
    fn steering_vectors() {
        let a = ula_steering(0.0, 4);
        assert!(a.iter().all(|z| (*z - Complex::new(1.0, 0.0)).norm() < 1e-15));
        let b = ula_steering(PI / 2.0, 2);
        assert!((b[0] - Complex::new(1.0, 0.0)).norm() < 1e-15);
        assert!((b[1] - Complex::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rician_limits() {
        let los = ula_steering(0.3, 8);
        let nlos = nlos_sample(7, 3, Link::Device, 8);
        let strong = rician_mix(1e12, &los, &nlos);
        for (h, l) in strong.iter().zip(los.iter()) {
            assert!((h - l).norm() < 1e-5);
        }
        assert_eq!(rician_mix(0.0, &los, &nlos), nlos);
    }

    #[test]
    fn realize_is_deterministic() {
        let cfg = default_scenario();
        let draw = FadingDraw::for_config(&cfg);
        let p = Position3::new(5.0, 5.0, 15.0);
        let a = realize_slot(&cfg, &p, 4, &draw).unwrap();
        let b = realize_slot(&cfg, &p, 4, &FadingDraw::for_config(&cfg)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.h_ud.len(), 16);
        assert_eq!(a.g_rt.len(), 8);
        assert!(a.l_ud > 0.0 && a.l_ut > 0.0 && a.l_rt > 0.0);
    }

    #[test]
    fn streams_differ_across_slots_and_links() {
        let a = nlos_sample(0, 1, Link::Device, 4);
        assert_ne!(a, nlos_sample(0, 2, Link::Device, 4));
        assert_ne!(a, nlos_sample(0, 1, Link::Target, 4));
        assert_ne!(a, nlos_sample(1, 1, Link::Device, 4));
    }

    #[test]
    fn out_of_range_slot_rejected() {
        let cfg = default_scenario();
        let draw = FadingDraw::for_config(&cfg);
        assert!(realize_slot(&cfg, &cfg.uav_start, 0, &draw).is_err());
        assert!(realize_slot(&cfg, &cfg.uav_start, 51, &draw).is_err());
    }

    #[test]
    fn dump_has_header_and_rows() {
        let cfg = default_scenario();
        let draw = FadingDraw::for_config(&cfg);
        let ch = realize_slot(&cfg, &cfg.uav_start, 1, &draw).unwrap();
        let mut buf = Vec::new();
        write_channel_dump(&mut buf, &[ch]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("slot,link,index,re,im\n"));
        assert_eq!(text.lines().count(), 1 + 16 + 16 + 8);
    }

    proptest! {
        #[test]
        fn steering_has_unit_modulus(angle in -PI..PI, n in 1usize..32) {
            let a = ula_steering(angle, n);
            prop_assert!((a.norm_squared() - n as f64).abs() < 1e-9);
        }

        #[test]
        fn path_loss_decreasing_in_distance(d in 1.0f64..200.0, extra in 0.01f64..50.0, e in 1.0f64..4.0) {
            let g = Position3::ground(0.0, 0.0);
            let near = path_loss_amplitude(&Position3::new(0.0, 0.0, d), &g, 1e-3, e).unwrap();
            let far = path_loss_amplitude(&Position3::new(0.0, 0.0, d + extra), &g, 1e-3, e).unwrap();
            prop_assert!(far < near);
        }
    }
}
