//! Receive combining block: maximize the echo quadratic `u^H Omega u` on
//! the unit sphere by minorization-maximization.
//!
//! Each step maximizes the tangent `2 Re(u^H Omega u0)` over the unit ball,
//! subject to the tangent of the echo constraint, then renormalizes. The
//! ball maximizer of a nonzero linear form already lies on the sphere, so
//! the step never decreases the quadratic.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::channel::{CVector, ChannelSlot};
use crate::cvxcore::{self, re_inner_coeffs, stack, unstack, ConvexSubproblem, SolveOptions, SolveStatus, Term};
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;
use crate::Complex;

pub const MAX_MM_ITERS: usize = 100;
pub const MM_TOL: f64 = 1e-8;

/// `Omega = a a^H` with `a = l_rt^2 (h_ut^H w) g_rt`.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoQuadratic {
    pub a: CVector,
    pub omega: DMatrix<Complex>,
    pub lambda_max: f64,
    pub lambda_min: f64,
}

impl EchoQuadratic {
    pub fn value(&self, u: &CVector) -> f64 {
        (u.adjoint() * &self.omega * u)[(0, 0)].re
    }
}

pub fn build_omega(slot: &ChannelSlot, w: &CVector) -> EchoQuadratic {
    let a = &slot.g_rt * (slot.h_ut.dotc(w) * (slot.l_rt * slot.l_rt));
    let omega = &a * a.adjoint();
    let lambda_max = a.norm_squared();
    let lambda_min = if a.len() > 1 { 0.0 } else { lambda_max };
    EchoQuadratic {
        a,
        omega,
        lambda_max,
        lambda_min,
    }
}

/// Wraps an arbitrary Hermitian PSD matrix, computing its extreme
/// eigenvalues numerically.
pub fn quadratic_from_matrix(omega: DMatrix<Complex>) -> EchoQuadratic {
    let eig = omega.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.max();
    let lambda_min = eig.eigenvalues.min();
    let k = eig.eigenvalues.imax();
    let a = eig.eigenvectors.column(k) * Complex::from(lambda_max.max(0.0).sqrt());
    EchoQuadratic {
        a,
        omega,
        lambda_max,
        lambda_min,
    }
}

/// Quadratic-in-`u` bound `c2 ||u||^2 + 2 Re(u^H b) + c0` of `u^H Omega u`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmBound {
    pub c2: f64,
    pub b: CVector,
    pub c0: f64,
}

impl MmBound {
    pub fn eval(&self, u: &CVector) -> f64 {
        self.c2 * u.norm_squared() + 2.0 * u.dotc(&self.b).re + self.c0
    }
}

/// Minorant built from `Omega - lambda_min I >= 0`; tight at `u0` and
/// below `u^H Omega u` everywhere.
pub fn mm_surrogate(q: &EchoQuadratic, u0: &CVector) -> MmBound {
    shifted_bound(q, u0, q.lambda_min)
}

/// Majorant built from `lambda_max I - Omega >= 0`; tight at `u0` and
/// above `u^H Omega u` everywhere.
pub fn mm_majorant(q: &EchoQuadratic, u0: &CVector) -> MmBound {
    shifted_bound(q, u0, q.lambda_max)
}

fn shifted_bound(q: &EchoQuadratic, u0: &CVector, lambda: f64) -> MmBound {
    let n = u0.len();
    let shifted = &q.omega - DMatrix::<Complex>::identity(n, n) * Complex::from(lambda);
    let b = &shifted * u0;
    let c0 = -(u0.adjoint() * &b)[(0, 0)].re;
    MmBound { c2: lambda, b, c0 }
}

/// Rotates `u` so that its largest-magnitude entry is real and >= 0.
pub fn fix_phase(u: &CVector) -> CVector {
    let Some((_, &big)) = u.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())) else {
        return u.clone();
    };
    if big.norm() == 0.0 {
        return u.clone();
    }
    u * (big.conj() / big.norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxSolution {
    pub u: CVector,
    pub snr_echo: f64,
    pub iterations: usize,
    /// Echo SNR after every MM step (first entry is the start).
    pub history: Vec<f64>,
}

/// One MM step from `u0` on the normalized quadratic; `None` when the
/// tangent vanishes.
fn mm_step(q: &EchoQuadratic, u0: &CVector, required: f64) -> Result<Option<CVector>> {
    let n = u0.len();
    let grad = &q.omega * u0;
    if grad.norm() <= 1e-300 {
        return Ok(None);
    }
    let vars: Vec<usize> = (0..2 * n).collect();
    let coef = re_inner_coeffs(&grad);
    let mut p = ConvexSubproblem::new(2 * n);
    p.minimize(Term::Linear {
        idx: vars.clone(),
        coef: coef.iter().map(|c| -2.0 * c).collect(),
    })?;
    p.ball("unit norm", vars.clone(), vec![0.0; 2 * n], 1.0)?;
    if required > 0.0 {
        // 2 Re(u^H Omega u0) - u0^H Omega u0 >= required
        let base = q.value(u0);
        p.affine_le(
            "echo SNR",
            vars,
            coef.iter().map(|c| -2.0 * c / required).collect(),
            -(base + required) / required,
        )?;
    }
    let rep = cvxcore::solve(&p, &stack(u0), &SolveOptions::default())?;
    if rep.status == SolveStatus::Infeasible {
        return Ok(None);
    }
    let x = unstack(&rep.x);
    let nx = x.norm();
    if nx <= 0.0 {
        return Ok(None);
    }
    Ok(Some(x * Complex::from(1.0 / nx)))
}

/// MM iterations for one slot. `sense_snr` is the linear echo threshold
/// and `sigma2` the echo noise power.
pub fn solve_rx(slot: &ChannelSlot, w: &CVector, u_start: &CVector, sense_snr: f64, sigma2: f64) -> Result<RxSolution> {
    let un = u_start.norm();
    if (un - 1.0).abs() > 1e-9 {
        return Err(Error::NonUnitBeamformer(un));
    }
    let raw = build_omega(slot, w);
    let required_raw = sense_snr * sigma2;
    if raw.lambda_max < required_raw * (1.0 - 1e-9) || (raw.lambda_max == 0.0 && sense_snr > 0.0) {
        return Err(Error::Infeasible {
            block: "rxbf",
            slot: slot.slot,
            reason: format!(
                "echo SNR constraint unattainable: matched filter reaches {:.3e}, need {:.3e}",
                raw.lambda_max / sigma2,
                sense_snr
            ),
        });
    }
    let snr = |u: &CVector| raw.value(u) / sigma2;
    if raw.lambda_max == 0.0 {
        let u = fix_phase(u_start);
        return Ok(RxSolution {
            snr_echo: 0.0,
            iterations: 0,
            history: vec![0.0],
            u,
        });
    }
    // work on Omega / lambda_max so the solver sees O(1) numbers
    let scale = raw.lambda_max;
    let q = EchoQuadratic {
        a: &raw.a / Complex::from(scale.sqrt()),
        omega: &raw.omega / Complex::from(scale),
        lambda_max: 1.0,
        lambda_min: raw.lambda_min / scale,
    };
    let required = required_raw / scale;

    let mut u = u_start.clone();
    if q.value(&u) < required || (&q.omega * &u).norm() <= 1e-12 {
        // start from the principal direction when the given start is unusable
        u = &q.a / Complex::from(q.a.norm());
    }
    let mut history = vec![snr(u_start)];
    let mut iterations = 0;
    while iterations < MAX_MM_ITERS {
        iterations += 1;
        let Some(next) = mm_step(&q, &u, required)? else {
            break;
        };
        let gain = q.value(&next) - q.value(&u);
        if gain < 0.0 {
            break;
        }
        u = next;
        history.push(snr(&u));
        if gain * scale / sigma2 < MM_TOL {
            break;
        }
    }
    let u = fix_phase(&u);
    let u = &u / Complex::from(u.norm());
    Ok(RxSolution {
        snr_echo: snr(&u),
        u,
        iterations,
        history,
    })
}

/// Solves every slot (in parallel) with the configured threshold.
pub fn solve_rx_all(
    cfg: &ScenarioConfig,
    channels: &[ChannelSlot],
    w: &[CVector],
    u_start: &[CVector],
) -> Result<Vec<RxSolution>> {
    let lin = &cfg.linear;
    channels
        .par_iter()
        .zip(w.par_iter())
        .zip(u_start.par_iter())
        .map(|((ch, w), u)| solve_rx(ch, w, u, lin.sense_snr_min, lin.noise_echo_w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn crand(rng: &mut ChaCha8Rng, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn unit(v: CVector) -> CVector {
        let n = v.norm();
        v / Complex::from(n)
    }

    fn slot_with(a_dir: CVector, n_tx: usize) -> ChannelSlot {
        ChannelSlot {
            slot: 1,
            h_ud: CVector::from_element(n_tx, c(1.0, 0.0)),
            h_ut: CVector::from_element(n_tx, c(1.0, 0.0)),
            g_rt: a_dir,
            l_ud: 1.0,
            l_ut: 1.0,
            l_rt: 1.0,
        }
    }

    #[test]
    fn orthogonal_beam_gives_zero_omega() {
        let ch = ChannelSlot {
            slot: 1,
            h_ud: CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]),
            h_ut: CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]),
            g_rt: CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]),
            l_ud: 1.0,
            l_ut: 1.0,
            l_rt: 1.0,
        };
        let q = build_omega(&ch, &CVector::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)]));
        assert_eq!(q.lambda_max, 0.0);
        assert!(q.omega.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn two_by_two_eigen_by_hand() {
        // a = (1, j): Omega = [[1, -j], [j, 1]], eigenvalues 2 and 0
        let ch = slot_with(CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]), 1);
        let q = build_omega(&ch, &CVector::from_vec(vec![c(1.0, 0.0)]));
        assert!((q.lambda_max - 2.0).abs() < 1e-15);
        let v = unit(q.a.clone());
        let ov = &q.omega * &v;
        assert!((ov - &v * Complex::from(2.0)).norm() < 1e-12);
        let trace: Complex = (0..2).map(|i| q.omega[(i, i)]).sum();
        assert!((trace.re - q.lambda_max).abs() < 1e-12 && trace.im.abs() < 1e-15);
        assert!((q.omega.adjoint() - &q.omega).norm() < 1e-12);
        let numeric = quadratic_from_matrix(q.omega.clone());
        assert!((numeric.lambda_max - 2.0).abs() < 1e-12);
        assert!(numeric.lambda_min.abs() < 1e-12);
    }

    #[test]
    fn scaled_identity_is_exact() {
        let omega = DMatrix::<Complex>::identity(3, 3) * c(2.5, 0.0);
        let q = quadratic_from_matrix(omega);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u0 = unit(crand(&mut rng, 3));
        for _ in 0..10 {
            let u = crand(&mut rng, 3);
            let truth = q.value(&u);
            assert!((mm_surrogate(&q, &u0).eval(&u) - truth).abs() < 1e-12);
            assert!((mm_majorant(&q, &u0).eval(&u) - truth).abs() < 1e-12);
            assert!((2.5 * u.norm_squared() - truth).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_one_converges_to_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let g = crand(&mut rng, 4);
            let ch = slot_with(g.clone(), 2);
            let w = crand(&mut rng, 2);
            let u0 = unit(crand(&mut rng, 4));
            let sol = solve_rx(&ch, &w, &u0, 0.0, 1.0).unwrap();
            let mf = unit(g.clone());
            assert!(sol.u.dotc(&mf).norm() >= 1.0 - 1e-8);
            // closed form: ||a||^2 / sigma2
            let oracle = (ch.h_ut.dotc(&w).norm_sqr()) * g.norm_squared();
            assert!((sol.snr_echo - oracle).abs() <= 1e-6 * oracle.max(1.0));
            assert!((sol.u.norm() - 1.0).abs() < 1e-15);
            for pair in sol.history.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-12 * pair[0].abs());
            }
        }
    }

    #[test]
    fn matched_filter_is_a_fixed_point() {
        let g = CVector::from_vec(vec![c(0.3, 0.1), c(-0.2, 0.7), c(0.5, -0.5)]);
        let ch = slot_with(g.clone(), 1);
        let w = CVector::from_vec(vec![c(1.0, 0.0)]);
        let mf = fix_phase(&unit(g));
        let sol = solve_rx(&ch, &w, &mf, 0.1, 1.0).unwrap();
        assert!((sol.u.clone() - mf).norm() < 1e-8);
    }

    #[test]
    fn sensing_constraint_infeasible_at_matched_filter() {
        let ch = slot_with(CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]), 1);
        let w = CVector::from_vec(vec![c(1.0, 0.0)]);
        let u0 = unit(CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        // matched filter gives ||a||^2 = 2
        let err = solve_rx(&ch, &w, &u0, 3.0, 1.0).unwrap_err();
        assert!(err.is_infeasible());
        assert!(solve_rx(&ch, &w, &u0, 1.5, 1.0).unwrap().snr_echo >= 1.5);
    }

    #[test]
    fn rejects_non_unit_start() {
        let ch = slot_with(CVector::from_vec(vec![c(1.0, 0.0)]), 1);
        let w = CVector::from_vec(vec![c(1.0, 0.0)]);
        assert!(matches!(
            solve_rx(&ch, &w, &CVector::from_vec(vec![c(2.0, 0.0)]), 0.0, 1.0),
            Err(Error::NonUnitBeamformer(_))
        ));
    }

    #[test]
    fn phase_convention() {
        let u = CVector::from_vec(vec![c(0.1, 0.0), c(0.0, -0.9)]);
        let f = fix_phase(&u);
        assert!(f[1].im.abs() < 1e-15 && f[1].re > 0.0);
        assert!((f.norm() - u.norm()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn minorant_and_majorant_sandwich(seed in 0u64..5000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 2 + (seed % 4) as usize;
            let b = DMatrix::from_fn(n, 2, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let q = quadratic_from_matrix(&b * b.adjoint());
            let u0 = unit(crand(&mut rng, n));
            let u = unit(crand(&mut rng, n));
            let lo = mm_surrogate(&q, &u0);
            let hi = mm_majorant(&q, &u0);
            let t0 = q.value(&u0);
            prop_assert!((lo.eval(&u0) - t0).abs() < 1e-12);
            prop_assert!((hi.eval(&u0) - t0).abs() < 1e-12);
            let t = q.value(&u);
            prop_assert!(lo.eval(&u) <= t + 1e-10);
            prop_assert!(hi.eval(&u) >= t - 1e-10);
        }
    }
}
