//! Trajectory block.
//!
//! Beamformer-channel products are frozen at the previous trajectory, so
//! the per-slot SNRs become `a_ud d_ud^-kappa` and `a_ut d_ut^-kappa` and
//! the echo SNR becomes `b d_ut^-2alpha`. Each free waypoint carries four
//! slacks, expressed relative to their values at the expansion point
//! (`t = 1` there):
//!
//! ```text
//! t1 <= 2 t3 - 1                                device SNR  <= a_ud zeta3^2
//! d_ud^2 <= d0^2 (1 + e (t3 - 1))               zeta3^(4/-kappa) >= d_ud^2, tangent
//! t4^2 <= t2                                    eavesdropper SNR <= a_ut zeta4^2
//! t4^e <= 1 + 2 (p0 - p_t).(p - p0) / d0^2      zeta4^(4/-kappa) <= d_ut^2, tangent
//! ```
//!
//! with `e = -4/kappa`. The eavesdropper rate enters the objective through
//! its tangent majorant in `t2`. The echo requirement is a ball around the
//! target. Every tangent is tight at the expansion trajectory, which is
//! therefore feasible for the new subproblem.

use std::f64::consts::LN_2;
use std::io::Write;

use nalgebra::DMatrix;

use crate::channel::{realize_all, CVector, ChannelSlot, FadingDraw};
use crate::cvxcore::{self, ConvexExpr, ConvexSubproblem, SolveOptions, SolveStatus, Term};
use crate::error::{Error, Result};
use crate::metrics::mission_metrics;
use crate::scenario::{Position3, ScenarioConfig};
use crate::txbf;
use crate::{fmt_sig, Complex};

/// Tolerance on step lengths of a returned trajectory.
pub const MOBILITY_TOL: f64 = 1e-6;
/// Trust-region halvings tried before the block gives up.
const MAX_TRUST_HALVINGS: usize = 8;

/// Planar waypoints at a fixed altitude; `waypoints[0]` is the start.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start: Position3,
    pub end: Position3,
    pub altitude: f64,
    pub waypoints: Vec<[f64; 2]>,
}

impl Trajectory {
    /// Uniform straight line; the last waypoint lands on the end point when
    /// the per-slot step allows it, otherwise one step short.
    pub fn straight_line(cfg: &ScenarioConfig) -> Result<Self> {
        let s = cfg.slots;
        let dist = cfg.uav_start.planar_distance(&cfg.uav_end);
        let denom = if s > 1 && dist / (s - 1) as f64 <= cfg.max_step + 1e-12 {
            (s - 1) as f64
        } else {
            s as f64
        };
        if dist / denom > cfg.max_step + 1e-12 {
            return Err(Error::Validation(format!(
                "straight line needs steps of {:.3} m but max_step is {}",
                dist / denom,
                cfg.max_step
            )));
        }
        let [x0, y0] = cfg.uav_start.planar();
        let [x1, y1] = cfg.uav_end.planar();
        let waypoints = (0..s)
            .map(|k| {
                let f = k as f64 / denom;
                [x0 + f * (x1 - x0), y0 + f * (y1 - y0)]
            })
            .collect();
        Ok(Self {
            start: cfg.uav_start,
            end: cfg.uav_end,
            altitude: cfg.altitude(),
            waypoints,
        })
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn position(&self, idx: usize) -> Position3 {
        let [x, y] = self.waypoints[idx];
        Position3::new(x, y, self.altitude)
    }

    pub fn positions(&self) -> Vec<Position3> {
        (0..self.len()).map(|i| self.position(i)).collect()
    }

    /// Longest of the inter-waypoint steps and the final gap to the end.
    pub fn max_step(&self) -> f64 {
        let steps = self
            .waypoints
            .windows(2)
            .map(|w| planar(w[0], w[1]))
            .fold(0.0, f64::max);
        steps.max(self.end_gap())
    }

    pub fn end_gap(&self) -> f64 {
        self.waypoints
            .last()
            .map(|&p| planar(p, self.end.planar()))
            .unwrap_or(0.0)
    }

    /// Largest violation of the mobility, endpoint and start constraints.
    pub fn mobility_residual(&self, max_step: f64) -> f64 {
        let start_gap = self
            .waypoints
            .first()
            .map(|&p| planar(p, self.start.planar()))
            .unwrap_or(0.0);
        (self.max_step() - max_step).max(0.0).max(start_gap)
    }

    pub fn min_distance_to(&self, node: &Position3) -> f64 {
        self.positions()
            .iter()
            .map(|p| p.distance(node))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mean_distance_to(&self, node: &Position3) -> f64 {
        let ps = self.positions();
        ps.iter().map(|p| p.distance(node)).sum::<f64>() / ps.len() as f64
    }

    /// `slot,x,y,z` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "slot,x,y,z")?;
        for (i, p) in self.positions().iter().enumerate() {
            writeln!(out, "{},{},{},{}", i + 1, fmt_sig(p.x), fmt_sig(p.y), fmt_sig(p.z))?;
        }
        Ok(())
    }
}

fn planar(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// 3-D distances from waypoint `slot` (1-based) to the device and target.
pub fn distance_factors(traj: &Trajectory, cfg: &ScenarioConfig, slot: usize) -> Result<(f64, f64)> {
    if slot == 0 || slot > traj.len() {
        return Err(Error::Dimension {
            expected: traj.len(),
            got: slot,
        });
    }
    let p = traj.position(slot - 1);
    Ok((p.distance(&cfg.iot), p.distance(&cfg.ut)))
}

/// Beamformer-channel products held fixed during one trajectory solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenGains {
    /// `h_ud^H w`
    pub psi_ud: Complex,
    /// `h_ut^H w`
    pub psi_ut: Complex,
    /// `(u^H g_rt)(h_ut^H w)`
    pub psi_echo: Complex,
}

pub fn freeze_gains(channels: &[ChannelSlot], w: &[CVector], u: &[CVector]) -> Vec<FrozenGains> {
    channels
        .iter()
        .zip(w)
        .zip(u)
        .map(|((ch, w), u)| {
            let psi_ut = ch.h_ut.dotc(w);
            FrozenGains {
                psi_ud: ch.h_ud.dotc(w),
                psi_ut,
                psi_echo: u.dotc(&ch.g_rt) * psi_ut,
            }
        })
        .collect()
}

/// Geometry and thresholds of the trajectory subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajParams {
    pub kappa: f64,
    pub alpha: f64,
    /// Linear echo SNR threshold; 0 disables the sensing ball.
    pub sense_snr: f64,
    pub max_step: f64,
    pub trust_radius: f64,
    pub iot: Position3,
    pub ut: Position3,
}

impl TrajParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            kappa: cfg.pathloss_exp_comm,
            alpha: cfg.pathloss_exp_sense,
            sense_snr: cfg.linear.sense_snr_min,
            max_step: cfg.max_step,
            trust_radius: cfg.trust_region,
            iot: cfg.iot,
            ut: cfg.ut,
        }
    }
}

/// Per-slot SNR coefficients: device SNR `a_ud d^-kappa`, eavesdropper
/// SNR `a_ut d^-kappa`, echo SNR `echo d^-2alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajExpansion {
    pub a_ud: Vec<f64>,
    pub a_ut: Vec<f64>,
    pub echo: Vec<f64>,
}

impl TrajExpansion {
    pub fn from_gains(cfg: &ScenarioConfig, gains: &[FrozenGains]) -> Self {
        let lin = &cfg.linear;
        let rho = lin.pathloss_ref;
        Self {
            a_ud: gains
                .iter()
                .map(|g| rho * g.psi_ud.norm_sqr() / lin.noise_dev_w)
                .collect(),
            a_ut: gains
                .iter()
                .map(|g| rho * g.psi_ut.norm_sqr() / lin.noise_eve_w)
                .collect(),
            echo: gains
                .iter()
                .map(|g| rho * rho * g.psi_echo.norm_sqr() / lin.noise_echo_w)
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.a_ud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_ud.is_empty()
    }
}

/// Slot-averaged unclamped secrecy under frozen gains.
pub fn frozen_objective(params: &TrajParams, exp: &TrajExpansion, traj: &Trajectory) -> f64 {
    let s = traj.len() as f64;
    traj.positions()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let dd = p.distance(&params.iot).powf(-params.kappa);
            let dt = p.distance(&params.ut).powf(-params.kappa);
            ((exp.a_ud[i] * dd).ln_1p() - (exp.a_ut[i] * dt).ln_1p()) / LN_2
        })
        .sum::<f64>()
        / s
}

/// Largest distance to the target that still meets the echo threshold.
pub fn sensing_radius(params: &TrajParams, echo: f64) -> f64 {
    if params.sense_snr <= 0.0 {
        f64::INFINITY
    } else {
        (echo / params.sense_snr).powf(1.0 / (2.0 * params.alpha))
    }
}

#[derive(Debug, Clone)]
pub struct TrajProblem {
    pub problem: ConvexSubproblem,
    pub start: Vec<f64>,
    /// Number of optimized waypoints (all but the first).
    pub n_free: usize,
}

const PER_SLOT: usize = 6;

fn var(k: usize, field: usize) -> usize {
    PER_SLOT * k + field
}

const X: usize = 0;
const Y: usize = 1;
const T1: usize = 2;
const T2: usize = 3;
const T3: usize = 4;
const T4: usize = 5;

pub fn build_traj_subproblem(params: &TrajParams, exp: &TrajExpansion, prev: &Trajectory) -> Result<TrajProblem> {
    let s = prev.len();
    if s < 2 {
        return Err(Error::Validation("trajectory needs at least two slots".into()));
    }
    if exp.len() != s {
        return Err(Error::Dimension {
            expected: s,
            got: exp.len(),
        });
    }
    if exp.a_ud.iter().chain(&exp.a_ut).chain(&exp.echo).any(|v| !(*v >= 0.0)) {
        return Err(Error::Expansion("frozen SNR coefficients must be >= 0".into()));
    }
    let n_free = s - 1;
    let e = -4.0 / params.kappa;
    let z2 = prev.altitude * prev.altitude;
    let mut p = ConvexSubproblem::new(PER_SLOT * n_free);
    let mut start = vec![0.0; PER_SLOT * n_free];
    let inv_s = 1.0 / s as f64;

    for k in 0..n_free {
        let slot = k + 1; // index into waypoints
        let pos = prev.position(slot);
        let [x0, y0] = prev.waypoints[slot];
        let (x, y, t1, t2, t3, t4) = (var(k, X), var(k, Y), var(k, T1), var(k, T2), var(k, T3), var(k, T4));
        let dud0 = pos.distance(&params.iot);
        let dut0 = pos.distance(&params.ut);
        if dud0 <= 0.0 || dut0 <= 0.0 {
            return Err(Error::ZeroDistance);
        }
        let z_ud = exp.a_ud[slot] * dud0.powf(-params.kappa);
        let z_ut = exp.a_ut[slot] * dut0.powf(-params.kappa);

        p.minimize(Term::NegLog1p {
            var: t1,
            coef: z_ud,
            scale: inv_s / LN_2,
        })?;
        p.minimize(Term::Linear {
            idx: vec![t2],
            coef: vec![inv_s * z_ut / (LN_2 * (1.0 + z_ut))],
        })?;

        p.affine_le(
            format!("slot {} device slack", slot + 1),
            vec![t1, t3],
            vec![1.0, -2.0],
            -1.0,
        )?;
        let d2 = dud0 * dud0;
        p.constrain(
            format!("slot {} device distance", slot + 1),
            ConvexExpr::new()
                .with(Term::SqDist {
                    idx: vec![x, y],
                    center: vec![params.iot.x, params.iot.y],
                    scale: 1.0 / d2,
                })
                .constant((z2 + params.iot.z * params.iot.z - 2.0 * prev.altitude * params.iot.z) / d2 - (1.0 - e))
                .linear(vec![t3], vec![-e]),
        )?;
        p.constrain(
            format!("slot {} eavesdropper slack", slot + 1),
            ConvexExpr::new()
                .with(Term::Quadratic {
                    idx: vec![t4],
                    p: DMatrix::from_element(1, 1, 2.0),
                    q: vec![0.0],
                })
                .linear(vec![t2], vec![-1.0]),
        )?;
        let dt2 = dut0 * dut0;
        let cx = 2.0 * (x0 - params.ut.x) / dt2;
        let cy = 2.0 * (y0 - params.ut.y) / dt2;
        p.constrain(
            format!("slot {} eavesdropper distance", slot + 1),
            ConvexExpr::new()
                .with(Term::Power {
                    var: t4,
                    exponent: e,
                    scale: 1.0,
                })
                .linear(vec![x, y], vec![-cx, -cy])
                .constant(-1.0 + cx * x0 + cy * y0),
        )?;

        let radius = sensing_radius(params, exp.echo[slot]);
        if radius.is_finite() {
            let dz = prev.altitude - params.ut.z;
            let r2 = radius * radius - dz * dz;
            p.constrain(
                format!("slot {} sensing", slot + 1),
                ConvexExpr::new()
                    .with(Term::SqDist {
                        idx: vec![x, y],
                        center: vec![params.ut.x, params.ut.y],
                        scale: 1.0 / (radius * radius),
                    })
                    .constant(-r2 / (radius * radius)),
            )?;
        }

        let dmax2 = params.max_step * params.max_step;
        if k == 0 {
            p.constrain(
                "step 2",
                ConvexExpr::new()
                    .with(Term::SqDist {
                        idx: vec![x, y],
                        center: prev.start.planar().to_vec(),
                        scale: 1.0 / dmax2,
                    })
                    .constant(-1.0),
            )?;
        } else {
            let (xp, yp) = (var(k - 1, X), var(k - 1, Y));
            let mut q = DMatrix::zeros(4, 4);
            for i in 0..2 {
                q[(i, i)] = 2.0 / dmax2;
                q[(i + 2, i + 2)] = 2.0 / dmax2;
                q[(i, i + 2)] = -2.0 / dmax2;
                q[(i + 2, i)] = -2.0 / dmax2;
            }
            p.constrain(
                format!("step {}", slot + 1),
                ConvexExpr::new()
                    .with(Term::Quadratic {
                        idx: vec![xp, yp, x, y],
                        p: q,
                        q: vec![0.0; 4],
                    })
                    .constant(-1.0),
            )?;
        }
        if k == n_free - 1 {
            p.constrain(
                "end point",
                ConvexExpr::new()
                    .with(Term::SqDist {
                        idx: vec![x, y],
                        center: prev.end.planar().to_vec(),
                        scale: 1.0 / dmax2,
                    })
                    .constant(-1.0),
            )?;
        }
        if params.trust_radius.is_finite() {
            p.ball(
                format!("slot {} trust region", slot + 1),
                vec![x, y],
                vec![x0, y0],
                params.trust_radius,
            )?;
        }

        start[x] = x0;
        start[y] = y0;
        start[t1] = 1.0;
        start[t2] = 1.0;
        start[t3] = 1.0;
        start[t4] = 1.0;
    }
    Ok(TrajProblem {
        problem: p,
        start,
        n_free,
    })
}

/// Solves one subproblem and returns the new trajectory (unchanged when
/// the solver cannot improve on `prev`).
pub fn solve_traj_subproblem(params: &TrajParams, exp: &TrajExpansion, prev: &Trajectory) -> Result<Trajectory> {
    let tp = build_traj_subproblem(params, exp, prev)?;
    let rep = cvxcore::solve(&tp.problem, &tp.start, &SolveOptions::default())?;
    if rep.status == SolveStatus::Infeasible {
        let reason = tp
            .problem
            .worst_constraint(&rep.x)
            .map(|(l, v)| format!("{l} violated by {v:.3e}"))
            .unwrap_or_default();
        return Err(Error::Infeasible {
            block: "trajopt",
            slot: 0,
            reason,
        });
    }
    let mut next = prev.clone();
    for k in 0..tp.n_free {
        next.waypoints[k + 1] = [rep.x[var(k, X)], rep.x[var(k, Y)]];
    }
    if next.mobility_residual(params.max_step) > MOBILITY_TOL {
        return Ok(prev.clone());
    }
    Ok(next)
}

/// Result of one trajectory block.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajOutcome {
    pub trajectory: Trajectory,
    /// Channels on the returned trajectory.
    pub channels: Vec<ChannelSlot>,
    /// Beams re-adapted to `channels` (the input beams if rejected).
    pub w: Vec<CVector>,
    /// Matched combiners on `channels`.
    pub u: Vec<CVector>,
    pub accepted: bool,
    /// Trust radius of the accepted step (or the last one tried).
    pub trust_radius: f64,
    pub r_sum: f64,
}

/// Unit-norm matched combiner toward the target.
pub fn matched_combiner(ch: &ChannelSlot) -> CVector {
    let n = ch.g_rt.norm();
    &ch.g_rt * Complex::from(1.0 / n)
}

struct Refreshed {
    w: Vec<CVector>,
    u: Vec<CVector>,
    r_sum: f64,
}

/// Re-adapts `w` to new channels: matched combiners, sensing repair and one
/// transmit SCA pass. `None` when some slot cannot meet the echo threshold.
fn refresh_beams(cfg: &ScenarioConfig, channels: &[ChannelSlot], w: &[CVector]) -> Result<Option<Refreshed>> {
    let lin = &cfg.linear;
    let u: Vec<CVector> = channels.iter().map(matched_combiner).collect();
    let mut repaired = Vec::with_capacity(w.len());
    for ((ch, w), u) in channels.iter().zip(w).zip(&u) {
        match txbf::repair_sensing(ch, w, u, lin.tx_power_w, lin.sense_snr_min, lin.noise_echo_w) {
            Ok(v) => repaired.push(v),
            Err(e) if e.is_infeasible() => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    let w = txbf::solve_tx(&txbf::TxSubproblemInput::from_config(cfg, channels, &repaired, &u))?.w;
    let r_sum = mission_metrics(cfg, channels, &w, &u)?.r_sum;
    Ok(Some(Refreshed { w, u, r_sum }))
}

/// One trajectory block: freeze gains at `prev`, solve, re-adapt the beams
/// on the candidate channels and accept only if the true average secrecy
/// does not drop. A rejected step is retried with half the trust radius.
pub fn solve_traj(
    cfg: &ScenarioConfig,
    draw: &FadingDraw,
    prev: &Trajectory,
    w: &[CVector],
    u: &[CVector],
) -> Result<TrajOutcome> {
    let channels = realize_all(cfg, &prev.positions(), draw)?;
    let r_prev = mission_metrics(cfg, &channels, w, u)?.r_sum;
    let gains = freeze_gains(&channels, w, u);
    let exp = TrajExpansion::from_gains(cfg, &gains);
    let mut params = TrajParams::from_config(cfg);
    for _ in 0..MAX_TRUST_HALVINGS {
        let next = solve_traj_subproblem(&params, &exp, prev)?;
        if next == *prev {
            break;
        }
        let ch_new = realize_all(cfg, &next.positions(), draw)?;
        if let Some(fresh) = refresh_beams(cfg, &ch_new, w)? {
            if fresh.r_sum >= r_prev {
                return Ok(TrajOutcome {
                    trajectory: next,
                    channels: ch_new,
                    w: fresh.w,
                    u: fresh.u,
                    accepted: true,
                    trust_radius: params.trust_radius,
                    r_sum: fresh.r_sum,
                });
            }
        }
        params.trust_radius *= 0.5;
    }
    Ok(TrajOutcome {
        trajectory: prev.clone(),
        channels,
        w: w.to_vec(),
        u: u.to_vec(),
        accepted: false,
        trust_radius: params.trust_radius,
        r_sum: r_prev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_scenario;
    use proptest::prelude::*;

    #[test]
    fn distances_at_known_points() {
        let cfg = default_scenario();
        let traj = Trajectory::straight_line(&cfg).unwrap();
        let (_, d_ut) = distance_factors(&traj, &cfg, 1).unwrap();
        assert!((d_ut - 45.0).abs() < 1e-12);
        let mut above = traj.clone();
        above.waypoints[0] = [10.0, 20.0];
        let (d_ud, _) = distance_factors(&above, &cfg, 1).unwrap();
        assert!((d_ud - 15.0).abs() < 1e-12);
        assert!(distance_factors(&traj, &cfg, 0).is_err());
    }

    #[test]
    fn straight_line_initialization() {
        let cfg = default_scenario();
        let traj = Trajectory::straight_line(&cfg).unwrap();
        assert_eq!(traj.len(), 50);
        let step = 5.0f64.sqrt() * 30.0 / 49.0;
        assert!((traj.max_step() - step).abs() < 1e-9);
        assert!(traj.end_gap() < 1e-9);
        let mut short = cfg.clone().with_slots(2);
        short.uav_end = Position3::new(20.0, 10.0, 15.0);
        let two = Trajectory::straight_line(&short).unwrap();
        assert_eq!(two.waypoints, vec![[0.0, 0.0], [20.0, 10.0]]);
    }

    #[test]
    fn orthogonal_beams_freeze_to_zero() {
        let ch = ChannelSlot {
            slot: 1,
            h_ud: CVector::from_vec(vec![Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)]),
            h_ut: CVector::from_vec(vec![Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)]),
            g_rt: CVector::from_vec(vec![Complex::new(1.0, 0.0)]),
            l_ud: 1.0,
            l_ut: 1.0,
            l_rt: 1.0,
        };
        let w = CVector::from_vec(vec![Complex::new(0.0, 0.0), Complex::new(1.0, 1.0)]);
        let u = CVector::from_vec(vec![Complex::new(1.0, 0.0)]);
        let g = freeze_gains(
            std::slice::from_ref(&ch),
            std::slice::from_ref(&w),
            std::slice::from_ref(&u),
        );
        assert_eq!(g[0].psi_ud.norm(), 0.0);
        assert_eq!(g[0].psi_ut.norm(), 0.0);
        let w2 = CVector::from_vec(vec![Complex::new(0.5, 0.5), Complex::new(0.0, 0.0)]);
        let a = freeze_gains(
            std::slice::from_ref(&ch),
            std::slice::from_ref(&w2),
            std::slice::from_ref(&u),
        )[0]
        .psi_ud
        .norm_sqr();
        let b = freeze_gains(&[ch], &[w2 * Complex::from(3.0)], &[u])[0]
            .psi_ud
            .norm_sqr();
        assert!((b - 9.0 * a).abs() < 1e-12);
    }

    #[test]
    fn frozen_gain_matches_metrics() {
        let cfg = default_scenario().with_slots(4);
        let traj = Trajectory::straight_line(&cfg).unwrap();
        let draw = FadingDraw::for_config(&cfg);
        let ch = realize_all(&cfg, &traj.positions(), &draw).unwrap();
        let w: Vec<CVector> = ch.iter().map(|c| crate::txbf::mrt(c, cfg.linear.tx_power_w)).collect();
        let u: Vec<CVector> = ch.iter().map(matched_combiner).collect();
        let exp = TrajExpansion::from_gains(&cfg, &freeze_gains(&ch, &w, &u));
        for (i, c) in ch.iter().enumerate() {
            let d = traj.position(i).distance(&cfg.iot);
            let snr = crate::metrics::snr_device(c, &w[i], cfg.linear.noise_dev_w);
            let frozen = exp.a_ud[i] * d.powf(-cfg.pathloss_exp_comm);
            assert!((frozen - snr).abs() <= 1e-9 * snr);
            let echo = crate::metrics::snr_echo(c, &w[i], &u[i], cfg.linear.noise_echo_w).unwrap();
            let dt = traj.position(i).distance(&cfg.ut);
            assert!((exp.echo[i] * dt.powf(-2.0 * cfg.pathloss_exp_sense) - echo).abs() <= 1e-9 * echo);
        }
    }

    /// Toy 1-D instance: everything on the x axis.
    fn line_setup() -> (TrajParams, TrajExpansion, Trajectory) {
        let params = TrajParams {
            kappa: 2.0,
            alpha: 1.5,
            sense_snr: 0.0,
            max_step: 15.0,
            trust_radius: f64::INFINITY,
            iot: Position3::ground(5.0, 0.0),
            ut: Position3::ground(-12.0, 0.0),
        };
        let exp = TrajExpansion {
            a_ud: vec![400.0, 400.0],
            a_ut: vec![900.0, 900.0],
            echo: vec![1.0, 1.0],
        };
        let traj = Trajectory {
            start: Position3::new(0.0, 0.0, 5.0),
            end: Position3::new(10.0, 0.0, 5.0),
            altitude: 5.0,
            waypoints: vec![[0.0, 0.0], [-2.0, 0.0]],
        };
        (params, exp, traj)
    }

    #[test]
    fn two_slot_line_matches_exhaustive_search() {
        let (params, exp, mut traj) = line_setup();
        for _ in 0..60 {
            traj = solve_traj_subproblem(&params, &exp, &traj).unwrap();
        }
        // exhaustive search over the feasible segment [-5, 15] on a 1 mm grid
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut probe = traj.clone();
        for i in 0..=20_000 {
            let x = -5.0 + i as f64 * 1e-3;
            probe.waypoints[1] = [x, 0.0];
            let v = frozen_objective(&params, &exp, &probe);
            if v > best.0 {
                best = (v, x);
            }
        }
        let got = traj.waypoints[1];
        assert!((got[0] - best.1).abs() < 0.05, "got {got:?}, grid {}", best.1);
        assert!(got[1].abs() < 0.05);
    }

    #[test]
    fn expansion_point_stays_feasible_and_objective_ascends() {
        let (params, exp, traj) = line_setup();
        let tp = build_traj_subproblem(&params, &exp, &traj).unwrap();
        assert!(tp.problem.max_violation(&tp.start) < 1e-12);
        let next = solve_traj_subproblem(&params, &exp, &traj).unwrap();
        assert!(frozen_objective(&params, &exp, &next) >= frozen_objective(&params, &exp, &traj) - 1e-12);
    }

    #[test]
    fn surrogate_is_tight_at_expansion() {
        let (params, exp, traj) = line_setup();
        let tp = build_traj_subproblem(&params, &exp, &traj).unwrap();
        // objective at t = 1 reproduces the frozen objective of the free slots
        let s = traj.len() as f64;
        let p1 = traj.position(0);
        let fixed = ((exp.a_ud[0] * p1.distance(&params.iot).powf(-params.kappa)).ln_1p()
            - (exp.a_ut[0] * p1.distance(&params.ut).powf(-params.kappa)).ln_1p())
            / LN_2
            / s;
        let p2 = traj.position(1);
        let z_ut = exp.a_ut[1] * p2.distance(&params.ut).powf(-params.kappa);
        let constant = (z_ut.ln_1p() / LN_2 - z_ut / (LN_2 * (1.0 + z_ut))) / s;
        let surrogate = -tp.problem.objective_value(&tp.start) - constant + fixed;
        assert!((surrogate - frozen_objective(&params, &exp, &traj)).abs() < 1e-9);
    }

    #[test]
    fn sensing_ball_pulls_toward_target() {
        let (mut params, mut exp, traj) = line_setup();
        exp.echo = vec![1e4, 1e4];
        params.sense_snr = 1e4 / 9.0f64.powf(3.0); // radius 9 m around x = -12
        let r = sensing_radius(&params, exp.echo[1]);
        assert!((r - 9.0).abs() < 1e-9);
        let mut t = traj.clone();
        t.waypoints[1] = [-5.0, 0.0];
        for _ in 0..30 {
            t = solve_traj_subproblem(&params, &exp, &t).unwrap();
        }
        let d = t.position(1).distance(&params.ut);
        assert!(d <= 9.0 + 1e-6, "{d}");
    }

    #[test]
    fn rejects_mismatched_expansion() {
        let (params, mut exp, traj) = line_setup();
        exp.a_ud.pop();
        assert!(build_traj_subproblem(&params, &exp, &traj).is_err());
    }

    #[test]
    fn default_scenario_step_respects_mobility_and_ascends() {
        let mut cfg = default_scenario().with_slots(10);
        cfg.sense_rate_min = 0.0;
        cfg.refresh_linear();
        let draw = FadingDraw::for_config(&cfg);
        let traj = Trajectory::straight_line(&cfg).unwrap();
        let ch = realize_all(&cfg, &traj.positions(), &draw).unwrap();
        let w: Vec<CVector> = ch.iter().map(|c| crate::txbf::mrt(c, cfg.linear.tx_power_w)).collect();
        let u: Vec<CVector> = ch.iter().map(matched_combiner).collect();
        let before = mission_metrics(&cfg, &ch, &w, &u).unwrap().r_sum;
        let out = solve_traj(&cfg, &draw, &traj, &w, &u).unwrap();
        assert!(out.trajectory.mobility_residual(cfg.max_step) <= MOBILITY_TOL);
        assert!(out.r_sum >= before);
        assert_eq!(out.trajectory.waypoints[0], traj.waypoints[0]);
    }

    proptest! {
        #[test]
        fn tangent_bounds_one_sided(d0 in 1.0f64..100.0, d in 1.0f64..100.0, kappa in 2.0f64..4.0, t in 0.05f64..3.0) {
            let e = -4.0 / kappa;
            // zeta^e >= its tangent at 1, scaled by d0^2
            prop_assert!(d0 * d0 * t.powf(e) >= d0 * d0 * (1.0 + e * (t - 1.0)) - 1e-9);
            // t^2 >= 2t - 1
            prop_assert!(t * t >= 2.0 * t - 1.0 - 1e-12);
            // squared distance above its tangent
            let p0 = d0; let p = d;
            prop_assert!(p * p >= p0 * p0 + 2.0 * p0 * (p - p0) - 1e-9);
        }
    }
}
