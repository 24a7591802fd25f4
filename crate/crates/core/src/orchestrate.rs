//! Alternating optimization loop and the baseline schemes.
//!
//! One outer iteration runs transmit beamforming, then the trajectory, then
//! receive combining. Fading draws are fixed for the whole run, so the
//! average secrecy is a deterministic function of the design and every
//! block can be checked for ascent.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::channel::{realize_all, CVector, ChannelSlot, FadingDraw};
use crate::error::{Error, Result};
use crate::metrics::{mission_metrics, snr_echo, MissionMetrics};
use crate::rxbf::solve_rx_all;
use crate::scenario::ScenarioConfig;
use crate::trajopt::{matched_combiner, solve_traj, Trajectory};
use crate::txbf::{mrt, repair_sensing, solve_tx, TxSubproblemInput};

/// Allowed drop of the average secrecy across one block.
pub const ASCENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// MRT beams on the straight line, no optimization.
    MrtFixedTraj,
    /// Beamforming blocks only, straight line.
    OptBfFixedTraj,
    /// All three blocks.
    Proposed,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::MrtFixedTraj, Scheme::OptBfFixedTraj, Scheme::Proposed];

    pub fn label(&self) -> &'static str {
        match self {
            Scheme::MrtFixedTraj => "mrt-fixed-traj",
            Scheme::OptBfFixedTraj => "opt-bf-fixed-traj",
            Scheme::Proposed => "proposed",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::UnknownScheme(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    pub trajectory: Trajectory,
    pub w: Vec<CVector>,
    pub u: Vec<CVector>,
    /// Channels realized on `trajectory`.
    pub channels: Vec<ChannelSlot>,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub r_sum: f64,
    pub delta: f64,
    pub feas_residual: f64,
    /// Secrecy change contributed by each block.
    pub delta_txbf: f64,
    pub delta_traj: f64,
    pub delta_rxbf: f64,
    pub ms_txbf: f64,
    pub ms_traj: f64,
    pub ms_rxbf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIters,
    /// A block lost secrecy beyond tolerance; the previous state was kept.
    RolledBack,
    /// No optimization requested (fixed baseline).
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scheme: Scheme,
    pub initial_r_sum: f64,
    pub initial_feas_residual: f64,
    pub final_r_sum: f64,
    pub iterations: Vec<IterationRecord>,
    pub status: RunStatus,
}

impl RunRecord {
    /// Average secrecy before the first and after every iteration.
    pub fn r_sum_history(&self) -> Vec<f64> {
        std::iter::once(self.initial_r_sum)
            .chain(self.iterations.iter().map(|r| r.r_sum))
            .collect()
    }
}

pub fn evaluate(cfg: &ScenarioConfig, state: &DesignState) -> Result<MissionMetrics> {
    mission_metrics(cfg, &state.channels, &state.w, &state.u)
}

/// Largest violation among mobility, power, unit norm and (relative) echo
/// SNR constraints.
pub fn feasibility_residual(cfg: &ScenarioConfig, state: &DesignState) -> Result<f64> {
    let lin = &cfg.linear;
    let mut worst = state.trajectory.mobility_residual(cfg.max_step);
    for ((ch, w), u) in state.channels.iter().zip(&state.w).zip(&state.u) {
        worst = worst.max(w.norm_squared() - lin.tx_power_w).max((u.norm() - 1.0).abs());
        if lin.sense_snr_min > 0.0 {
            let snr = snr_echo(ch, w, u, lin.noise_echo_w)?;
            worst = worst.max((lin.sense_snr_min - snr) / lin.sense_snr_min);
        }
    }
    Ok(worst.max(0.0))
}

/// Straight line, MRT beams pulled toward the target as far as sensing
/// requires, matched receive combiners.
pub fn initialize(cfg: &ScenarioConfig) -> Result<DesignState> {
    cfg.validate()?;
    let draw = FadingDraw::for_config(cfg);
    initialize_with(cfg, &draw)
}

fn initialize_with(cfg: &ScenarioConfig, draw: &FadingDraw) -> Result<DesignState> {
    let trajectory = Trajectory::straight_line(cfg)?;
    let channels = realize_all(cfg, &trajectory.positions(), draw)?;
    let lin = &cfg.linear;
    let u: Vec<CVector> = channels.iter().map(matched_combiner).collect();
    let w = channels
        .iter()
        .zip(&u)
        .map(|(ch, u)| {
            let w0 = mrt(ch, lin.tx_power_w);
            if lin.sense_snr_min > 0.0 {
                repair_sensing(ch, &w0, u, lin.tx_power_w, lin.sense_snr_min, lin.noise_echo_w)
            } else {
                Ok(w0)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DesignState {
        trajectory,
        w,
        u,
        channels,
        iteration: 0,
    })
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Full alternating optimization.
pub fn run(cfg: &ScenarioConfig) -> Result<(DesignState, RunRecord)> {
    run_baseline(cfg, Scheme::Proposed)
}

pub fn run_baseline(cfg: &ScenarioConfig, scheme: Scheme) -> Result<(DesignState, RunRecord)> {
    cfg.validate()?;
    let draw = FadingDraw::for_config(cfg);
    let mut state = initialize_with(cfg, &draw)?;
    let r0 = evaluate(cfg, &state)?.r_sum;
    let mut record = RunRecord {
        scheme,
        initial_r_sum: r0,
        initial_feas_residual: feasibility_residual(cfg, &state)?,
        final_r_sum: r0,
        iterations: Vec::new(),
        status: RunStatus::Fixed,
    };
    if scheme == Scheme::MrtFixedTraj {
        return Ok((state, record));
    }
    record.status = RunStatus::MaxIters;
    let mut r_prev = r0;
    for it in 1..=cfg.max_outer_iters {
        let before = state.clone();

        let t = Instant::now();
        let tx = solve_tx(&TxSubproblemInput::from_config(
            cfg,
            &state.channels,
            &state.w,
            &state.u,
        ))?;
        state.w = tx.w;
        let ms_txbf = ms_since(t);
        let r_tx = evaluate(cfg, &state)?.r_sum;

        let t = Instant::now();
        if scheme == Scheme::Proposed {
            let out = solve_traj(cfg, &draw, &state.trajectory, &state.w, &state.u)?;
            if out.accepted {
                state.w = out.w;
                state.u = out.u;
                state.trajectory = out.trajectory;
                state.channels = out.channels;
            }
        }
        let ms_traj = ms_since(t);
        let r_traj = evaluate(cfg, &state)?.r_sum;

        let t = Instant::now();
        let rx = solve_rx_all(cfg, &state.channels, &state.w, &state.u)?;
        state.u = rx.into_iter().map(|s| s.u).collect();
        let ms_rxbf = ms_since(t);
        let r_new = evaluate(cfg, &state)?.r_sum;
        state.iteration = it;

        if r_new < r_prev - ASCENT_TOL {
            state = before;
            record.status = RunStatus::RolledBack;
            break;
        }
        let delta = r_new - r_prev;
        record.iterations.push(IterationRecord {
            iteration: it,
            r_sum: r_new,
            delta,
            feas_residual: feasibility_residual(cfg, &state)?,
            delta_txbf: r_tx - r_prev,
            delta_traj: r_traj - r_tx,
            delta_rxbf: r_new - r_traj,
            ms_txbf,
            ms_traj,
            ms_rxbf,
        });
        r_prev = r_new;
        if delta.abs() <= cfg.conv_tol {
            record.status = RunStatus::Converged;
            break;
        }
    }
    record.final_r_sum = r_prev;
    Ok((state, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_scenario;

    fn small() -> ScenarioConfig {
        let mut cfg = default_scenario().with_slots(8);
        cfg.max_outer_iters = 6;
        cfg
    }

    #[test]
    fn scheme_labels_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.label().parse::<Scheme>().unwrap(), s);
        }
        assert!(matches!("sdr".parse::<Scheme>(), Err(Error::UnknownScheme(_))));
    }

    #[test]
    fn initialization_is_feasible() {
        let cfg = default_scenario();
        let st = initialize(&cfg).unwrap();
        assert_eq!(st.trajectory.len(), 50);
        assert!((st.trajectory.max_step() - 67.08203932499369 / 49.0).abs() < 1e-9);
        assert!(feasibility_residual(&cfg, &st).unwrap() <= 1e-6);
    }

    #[test]
    fn infinite_tolerance_stops_after_one_iteration() {
        let mut cfg = small();
        cfg.conv_tol = f64::INFINITY;
        let (_, rec) = run(&cfg).unwrap();
        assert_eq!(rec.iterations.len(), 1);
        assert_eq!(rec.status, RunStatus::Converged);
    }

    #[test]
    fn ascent_and_feasibility_on_small_scenario() {
        let cfg = small();
        let (st, rec) = run(&cfg).unwrap();
        for pair in rec.r_sum_history().windows(2) {
            assert!(pair[1] >= pair[0] - ASCENT_TOL, "{pair:?}");
        }
        assert!(rec.final_r_sum > rec.initial_r_sum);
        assert!(feasibility_residual(&cfg, &st).unwrap() <= 1e-6);
        assert!((evaluate(&cfg, &st).unwrap().r_sum - rec.final_r_sum).abs() < 1e-12);
    }

    #[test]
    fn mrt_baseline_is_deterministic_and_unoptimized() {
        let cfg = small();
        let (a, ra) = run_baseline(&cfg, Scheme::MrtFixedTraj).unwrap();
        let (b, rb) = run_baseline(&cfg, Scheme::MrtFixedTraj).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert!(ra.iterations.is_empty());
        assert_eq!(ra.status, RunStatus::Fixed);
    }

    #[test]
    fn fixed_trajectory_scheme_keeps_the_line() {
        let cfg = small();
        let (st, rec) = run_baseline(&cfg, Scheme::OptBfFixedTraj).unwrap();
        assert_eq!(st.trajectory, Trajectory::straight_line(&cfg).unwrap());
        assert!(rec.final_r_sum >= rec.initial_r_sum);
    }

    #[test]
    fn unattainable_sensing_is_reported() {
        let cfg = small().with_sense_rate(60.0);
        let err = run(&cfg).unwrap_err();
        assert!(err.is_infeasible(), "{err}");
    }
}
