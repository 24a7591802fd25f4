//! Transmit beamforming block.
//!
//! For fixed trajectory and receive combiners every slot is an independent
//! convex program in `(w, gamma)`:
//!
//! ```text
//! maximize    gamma - [slope * snr_ut(w) + intercept]
//! subject to  2^gamma - 1 <= lin_ud(w) / k_ud        (device rate)
//!             lin_ut(w) >= theta                     (echo SNR)
//!             ||w||^2 <= P
//! ```
//!
//! where `lin_*` are tangent minorants of `|h^H w|^2` at `w0` and the
//! eavesdropper rate is replaced by its tangent majorant at `snr_ut(w0)`.
//! Both replacements are tight at `w0`, so the true secrecy of the new
//! beamformer is never below that of `w0`.

use rayon::prelude::*;

use crate::channel::{CVector, ChannelSlot};
use crate::cvxcore::{
    self, hermitian_real_form, re_inner_coeffs, stack, taylor_lower_quadratic, taylor_upper_logistic, ConvexExpr,
    ConvexSubproblem, SolveOptions, SolveStatus, Term,
};
use crate::error::{Error, Result};
use crate::metrics::{secrecy_unclamped, snr_device, snr_eve};
use crate::scenario::ScenarioConfig;
use crate::Complex;

/// Relative tolerance on the echo constraint at an expansion point.
pub const SENSE_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct TxSubproblemInput<'a> {
    pub channels: &'a [ChannelSlot],
    /// Expansion points, one per slot.
    pub w0: &'a [CVector],
    /// Receive combiners (unit norm), one per slot.
    pub u: &'a [CVector],
    pub power: f64,
    /// Linear echo SNR threshold; 0 disables the echo constraint.
    pub sense_snr: f64,
    pub noise_dev: f64,
    pub noise_eve: f64,
    pub noise_echo: f64,
}

impl<'a> TxSubproblemInput<'a> {
    pub fn from_config(cfg: &ScenarioConfig, channels: &'a [ChannelSlot], w0: &'a [CVector], u: &'a [CVector]) -> Self {
        let lin = &cfg.linear;
        Self {
            channels,
            w0,
            u,
            power: lin.tx_power_w,
            sense_snr: lin.sense_snr_min,
            noise_dev: lin.noise_dev_w,
            noise_eve: lin.noise_eve_w,
            noise_echo: lin.noise_echo_w,
        }
    }

    fn check(&self) -> Result<()> {
        let s = self.channels.len();
        if s == 0 {
            return Err(Error::EmptySlots);
        }
        for len in [self.w0.len(), self.u.len()] {
            if len != s {
                return Err(Error::Dimension { expected: s, got: len });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxSolution {
    pub w: Vec<CVector>,
    /// Per-slot device-rate slack at the solution.
    pub gamma_bar: Vec<f64>,
    /// Per-slot surrogate secrecy at the solution.
    pub surrogate: Vec<f64>,
}

impl TxSolution {
    /// Smallest slack over slots (the shared max-min value).
    pub fn min_gamma_bar(&self) -> f64 {
        self.gamma_bar.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Required `|h_ut^H w|^2` for the echo SNR to reach the threshold with
/// combiner `u`.
pub fn echo_threshold(slot: &ChannelSlot, u: &CVector, sense_snr: f64, noise_echo: f64) -> f64 {
    let l2 = slot.l_rt * slot.l_rt;
    let gain = u.dotc(&slot.g_rt).norm_sqr() * l2 * l2;
    if sense_snr <= 0.0 {
        0.0
    } else if gain <= 0.0 {
        f64::INFINITY
    } else {
        sense_snr * noise_echo / gain
    }
}

fn echo_ok(slot: &ChannelSlot, w: &CVector, theta: f64) -> bool {
    slot.h_ut.dotc(w).norm_sqr() >= theta * (1.0 - SENSE_TOL)
}

/// Moves `w0` toward the power-scaled matched beam `sqrt(P) h_ut/||h_ut||`
/// just far enough to satisfy the echo constraint.
pub fn repair_sensing(
    slot: &ChannelSlot,
    w0: &CVector,
    u: &CVector,
    power: f64,
    sense_snr: f64,
    noise_echo: f64,
) -> Result<CVector> {
    let theta = echo_threshold(slot, u, sense_snr, noise_echo);
    // aim slightly inside so the barrier has an interior to work with
    let target = theta * (1.0 + 1e-4);
    if slot.h_ut.dotc(w0).norm_sqr() >= target {
        return Ok(w0.clone());
    }
    let nh = slot.h_ut.norm();
    let beam = if nh > 0.0 {
        &slot.h_ut * Complex::from(power.sqrt() / nh)
    } else {
        CVector::zeros(w0.len())
    };
    // align the phase of the matched beam with w0 so the mix cannot cancel
    let c = slot.h_ut.dotc(w0);
    let beam = if c.norm() > 0.0 { beam * (c / c.norm()) } else { beam };
    let mix = |t: f64| w0 * Complex::from(1.0 - t) + &beam * Complex::from(t);
    if slot.h_ut.dotc(&mix(1.0)).norm_sqr() < target {
        return Err(Error::Infeasible {
            block: "txbf",
            slot: slot.slot,
            reason: format!(
                "echo SNR constraint unattainable: full-power matched beam gives echo SNR {:.3e}, need {:.3e}",
                slot.h_ut.dotc(&beam).norm_sqr() / theta * sense_snr,
                sense_snr
            ),
        });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if slot.h_ut.dotc(&mix(mid)).norm_sqr() >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(mix(hi))
}

/// One slot's convex program plus its variable layout.
#[derive(Debug, Clone)]
pub struct TxSlotProblem {
    pub problem: ConvexSubproblem,
    /// Strictly feasible start for the device-rate constraint.
    pub start: Vec<f64>,
    pub n_tx: usize,
    /// Surrogate eavesdropper rate is `slope * snr_ut(w) + intercept`.
    pub eve_slope: f64,
    pub eve_intercept: f64,
}

impl TxSlotProblem {
    pub fn gamma_index(&self) -> usize {
        2 * self.n_tx
    }
}

/// Builds the convex program for slot position `idx` (0-based).
pub fn build_tx_subproblem(inp: &TxSubproblemInput<'_>, idx: usize) -> Result<TxSlotProblem> {
    inp.check()?;
    let ch = inp.channels.get(idx).ok_or(Error::Dimension {
        expected: inp.channels.len(),
        got: idx + 1,
    })?;
    let w0 = &inp.w0[idx];
    let u = &inp.u[idx];
    let n = w0.len();
    if ch.h_ud.len() != n || ch.h_ut.len() != n {
        return Err(Error::Dimension {
            expected: ch.h_ud.len(),
            got: n,
        });
    }
    let theta = echo_threshold(ch, u, inp.sense_snr, inp.noise_echo);
    if inp.sense_snr > 0.0 && !echo_ok(ch, w0, theta) {
        return Err(Error::Expansion(format!(
            "slot {} expansion point violates the echo SNR constraint; repair feasibility first",
            ch.slot
        )));
    }

    let wvars: Vec<usize> = (0..2 * n).collect();
    let g = 2 * n;
    let mut p = ConvexSubproblem::new(2 * n + 1);

    // device rate: 2^g - 1 - lin_ud(w)/k <= 0
    let k_ud = inp.noise_dev / (ch.l_ud * ch.l_ud);
    let lin_ud = taylor_lower_quadratic(&ch.h_ud, w0);
    let coef: Vec<f64> = re_inner_coeffs(&lin_ud.b).iter().map(|c| -c / k_ud).collect();
    p.constrain(
        "device rate",
        ConvexExpr::new()
            .with(Term::Exp2 { var: g, scale: 1.0 })
            .constant(-1.0 - lin_ud.c / k_ud)
            .linear(wvars.clone(), coef),
    )?;

    // echo: theta - lin_ut(w) <= 0, normalized by theta
    if inp.sense_snr > 0.0 {
        let lin_ut = taylor_lower_quadratic(&ch.h_ut, w0);
        let coef: Vec<f64> = re_inner_coeffs(&lin_ut.b).iter().map(|c| -c / theta).collect();
        p.constrain(
            "echo SNR",
            ConvexExpr::new()
                .linear(wvars.clone(), coef)
                .constant(1.0 - lin_ut.c / theta),
        )?;
    }

    p.ball("power", wvars.clone(), vec![0.0; 2 * n], inp.power.sqrt())?;

    // objective: -g + slope * snr_ut(w)
    let v0 = snr_eve(ch, w0, inp.noise_eve);
    let maj = taylor_upper_logistic(v0)?;
    let a = ch.l_ut * ch.l_ut / inp.noise_eve;
    let hh = &ch.h_ut * ch.h_ut.adjoint();
    let quad = hermitian_real_form(&hh) * (2.0 * maj.slope * a);
    p.minimize(Term::Linear {
        idx: vec![g],
        coef: vec![-1.0],
    })?;
    p.minimize(Term::Quadratic {
        idx: wvars,
        p: quad,
        q: vec![0.0; 2 * n],
    })?;

    let mut start = stack(w0);
    start.push(snr_device(ch, w0, inp.noise_dev).ln_1p() / std::f64::consts::LN_2 - 1.0);
    Ok(TxSlotProblem {
        problem: p,
        start,
        n_tx: n,
        eve_slope: maj.slope,
        eve_intercept: maj.intercept,
    })
}

fn slot_secrecy(inp: &TxSubproblemInput<'_>, ch: &ChannelSlot, w: &CVector) -> f64 {
    secrecy_unclamped(snr_device(ch, w, inp.noise_dev), snr_eve(ch, w, inp.noise_eve))
}

fn solve_slot(inp: &TxSubproblemInput<'_>, idx: usize) -> Result<(CVector, f64, f64)> {
    let ch = &inp.channels[idx];
    let w0 = &inp.w0[idx];
    let sp = build_tx_subproblem(inp, idx)?;
    let opts = SolveOptions::default();
    let rep = cvxcore::solve(&sp.problem, &sp.start, &opts)?;
    if rep.status == SolveStatus::Infeasible {
        return Err(Error::Infeasible {
            block: "txbf",
            slot: ch.slot,
            reason: sp
                .problem
                .worst_constraint(&rep.x)
                .map(|(l, v)| format!("{l} violated by {v:.3e}"))
                .unwrap_or_default(),
        });
    }
    let mut w = cvxcore::unstack(&rep.x[..2 * sp.n_tx]);
    let norm = w.norm();
    if norm * norm > inp.power {
        w *= Complex::from(inp.power.sqrt() / norm);
    }
    let theta = echo_threshold(ch, &inp.u[idx], inp.sense_snr, inp.noise_echo);
    // keep w0 whenever numerical noise would cost secrecy or sensing
    let regress = slot_secrecy(inp, ch, &w) < slot_secrecy(inp, ch, w0);
    if regress || (inp.sense_snr > 0.0 && !echo_ok(ch, &w, theta)) {
        w = w0.clone();
    }
    let gamma = snr_device(ch, &w, inp.noise_dev).ln_1p() / std::f64::consts::LN_2;
    let surrogate = gamma - (sp.eve_slope * snr_eve(ch, &w, inp.noise_eve) + sp.eve_intercept);
    Ok((w, gamma, surrogate))
}

/// Solves every slot (in parallel) and merges by slot order.
pub fn solve_tx(inp: &TxSubproblemInput<'_>) -> Result<TxSolution> {
    inp.check()?;
    let parts = (0..inp.channels.len())
        .into_par_iter()
        .map(|i| solve_slot(inp, i))
        .collect::<Result<Vec<_>>>()?;
    let mut sol = TxSolution {
        w: Vec::with_capacity(parts.len()),
        gamma_bar: Vec::with_capacity(parts.len()),
        surrogate: Vec::with_capacity(parts.len()),
    };
    for (w, g, s) in parts {
        sol.w.push(w);
        sol.gamma_bar.push(g);
        sol.surrogate.push(s);
    }
    Ok(sol)
}

/// Full-power maximum-ratio beam toward the device.
pub fn mrt(slot: &ChannelSlot, power: f64) -> CVector {
    let n = slot.h_ud.norm();
    &slot.h_ud * Complex::from(power.sqrt() / n)
}
