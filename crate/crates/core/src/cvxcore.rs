//! Convex subproblem toolkit shared by the three block optimizers.
//!
//! * first-order surrogates ([`taylor_lower_quadratic`],
//!   [`taylor_upper_logistic`], [`taylor_convex_power`]) that are tight at
//!   their expansion point and one-sided everywhere;
//! * helpers that map complex decision vectors onto stacked real vectors
//!   `[Re w; Im w]`;
//! * [`ConvexSubproblem`], a sum-of-convex-terms problem description, and
//!   [`solve`], a log-barrier interior-point method with a Phase-1 search
//!   for a strictly feasible start.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use crate::channel::CVector;
use crate::error::{Error, Result};
use crate::Complex;

// ---------------------------------------------------------------------------
// Surrogates
// ---------------------------------------------------------------------------

/// Real affine map `slope * v + intercept` of one scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine1 {
    pub slope: f64,
    pub intercept: f64,
}

impl Affine1 {
    pub fn eval(&self, v: f64) -> f64 {
        self.slope * v + self.intercept
    }
}

/// Affine real function of a complex vector: `Re(b^H x) + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexAffine {
    pub b: CVector,
    pub c: f64,
}

impl ComplexAffine {
    pub fn eval(&self, x: &CVector) -> f64 {
        self.b.dotc(x).re + self.c
    }
}

/// Tangent minorant of `x -> |a^H x|^2` at `x0`:
/// `2 Re((a^H x0)^* a^H x) - |a^H x0|^2`.
pub fn taylor_lower_quadratic(a: &CVector, x0: &CVector) -> ComplexAffine {
    let c0 = a.dotc(x0);
    ComplexAffine {
        b: a * (c0 * 2.0),
        c: -c0.norm_sqr(),
    }
}

/// Tangent majorant of the concave `v -> log2(1 + v)` at `v0 >= 0`.
pub fn taylor_upper_logistic(v0: f64) -> Result<Affine1> {
    if !(v0 >= 0.0) {
        return Err(Error::Expansion(format!(
            "logistic expansion point must be >= 0, got {v0}"
        )));
    }
    let slope = 1.0 / (LN_2 * (1.0 + v0));
    Ok(Affine1 {
        slope,
        intercept: v0.ln_1p() / LN_2 - slope * v0,
    })
}

/// Tangent minorant of the convex `z -> z^e` (`e < 0`) at `z0 > 0`.
pub fn taylor_convex_power(z0: f64, exponent: f64) -> Result<Affine1> {
    if !(z0 > 0.0) {
        return Err(Error::Expansion(format!("power expansion point must be > 0, got {z0}")));
    }
    if !(exponent < 0.0) {
        return Err(Error::Expansion(format!(
            "power exponent must be negative, got {exponent}"
        )));
    }
    let f0 = z0.powf(exponent);
    let slope = exponent * z0.powf(exponent - 1.0);
    Ok(Affine1 {
        slope,
        intercept: f0 - slope * z0,
    })
}

// ---------------------------------------------------------------------------
// Complex <-> stacked real
// ---------------------------------------------------------------------------

pub fn stack(w: &CVector) -> Vec<f64> {
    w.iter().map(|z| z.re).chain(w.iter().map(|z| z.im)).collect()
}

pub fn unstack(x: &[f64]) -> CVector {
    let n = x.len() / 2;
    CVector::from_fn(n, |k, _| Complex::new(x[k], x[n + k]))
}

/// Coefficients `c` with `c . stack(w) = Re(b^H w)`.
pub fn re_inner_coeffs(b: &CVector) -> Vec<f64> {
    stack(b)
}

/// Real symmetric `M` (2n x 2n) with `stack(w)^T M stack(w) = w^H A w`
/// for Hermitian `A`.
pub fn hermitian_real_form(a: &DMatrix<Complex>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = a[(i, j)];
            m[(i, j)] = z.re;
            m[(n + i, n + j)] = z.re;
            m[(i, n + j)] = -z.im;
            m[(n + i, j)] = z.im;
        }
    }
    // symmetrize away rounding from a not-quite-Hermitian input
    (&m + m.transpose()) * 0.5
}

// ---------------------------------------------------------------------------
// Problem description
// ---------------------------------------------------------------------------

/// One convex scalar term over a subset of the decision variables.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Constant(f64),
    /// `sum coef[k] * x[idx[k]]`
    Linear {
        idx: Vec<usize>,
        coef: Vec<f64>,
    },
    /// `0.5 x_I^T P x_I + q^T x_I`, `P` positive semidefinite.
    Quadratic {
        idx: Vec<usize>,
        p: DMatrix<f64>,
        q: Vec<f64>,
    },
    /// `scale * ||x_I - center||^2`
    SqDist {
        idx: Vec<usize>,
        center: Vec<f64>,
        scale: f64,
    },
    /// `-scale * ln(1 + coef * x[var])`
    NegLog1p {
        var: usize,
        coef: f64,
        scale: f64,
    },
    /// `scale * x[var]^exponent` on `x > 0`, exponent outside `(0, 1)`.
    Power {
        var: usize,
        exponent: f64,
        scale: f64,
    },
    /// `scale * 2^x[var]`
    Exp2 {
        var: usize,
        scale: f64,
    },
}

impl Term {
    fn vars(&self, out: &mut Vec<usize>) {
        match self {
            Term::Constant(_) => {}
            Term::Linear { idx, .. } | Term::Quadratic { idx, .. } | Term::SqDist { idx, .. } => {
                out.extend_from_slice(idx)
            }
            Term::NegLog1p { var, .. } | Term::Power { var, .. } | Term::Exp2 { var, .. } => out.push(*var),
        }
    }

    /// Affine `g(x) < 0` describing this term's open domain, if limited.
    fn domain_guard(&self) -> Option<ConvexExpr> {
        match self {
            Term::NegLog1p { var, coef, .. } => Some(ConvexExpr::new().linear(vec![*var], vec![-coef]).constant(-1.0)),
            Term::Power { var, .. } => Some(ConvexExpr::new().linear(vec![*var], vec![-1.0])),
            _ => None,
        }
    }

    fn check_convex(&self) -> Result<()> {
        let fail = |m: String| Err(Error::NotConvex(m));
        match self {
            Term::Constant(c) if !c.is_finite() => fail(format!("non-finite constant {c}")),
            Term::Linear { idx, coef } if idx.len() != coef.len() => {
                fail("linear term index/coef length mismatch".into())
            }
            Term::Quadratic { idx, p, q } => {
                if p.nrows() != idx.len() || p.ncols() != idx.len() || q.len() != idx.len() {
                    return fail("quadratic term shape mismatch".into());
                }
                let sym = (p + p.transpose()) * 0.5;
                let scale = sym.amax().max(1.0);
                let min_eig = sym.symmetric_eigenvalues().min();
                if min_eig < -1e-8 * scale {
                    return fail(format!("quadratic form has eigenvalue {min_eig}"));
                }
                Ok(())
            }
            Term::SqDist { idx, center, scale } => {
                if idx.len() != center.len() {
                    fail("distance term shape mismatch".into())
                } else if *scale < 0.0 {
                    fail(format!("negative distance scale {scale}"))
                } else {
                    Ok(())
                }
            }
            Term::NegLog1p { scale, .. } if *scale < 0.0 => fail(format!("negative log scale {scale}")),
            Term::Power { exponent, scale, .. } if *scale < 0.0 || (*exponent > 0.0 && *exponent < 1.0) => {
                fail(format!("power term scale {scale} exponent {exponent} is not convex"))
            }
            Term::Exp2 { scale, .. } if *scale < 0.0 => fail(format!("negative exponential scale {scale}")),
            _ => Ok(()),
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Term::Constant(c) => *c,
            Term::Linear { idx, coef } => idx.iter().zip(coef).map(|(&i, c)| c * x[i]).sum(),
            Term::Quadratic { idx, p, q } => {
                let mut v = 0.0;
                for (a, &i) in idx.iter().enumerate() {
                    let mut row = 0.0;
                    for (b, &j) in idx.iter().enumerate() {
                        row += p[(a, b)] * x[j];
                    }
                    v += x[i] * (0.5 * row + q[a]);
                }
                v
            }
            Term::SqDist { idx, center, scale } => {
                scale
                    * idx
                        .iter()
                        .zip(center)
                        .map(|(&i, c)| (x[i] - c) * (x[i] - c))
                        .sum::<f64>()
            }
            Term::NegLog1p { var, coef, scale } => {
                let arg = 1.0 + coef * x[*var];
                if arg <= 0.0 {
                    f64::INFINITY
                } else {
                    -scale * arg.ln()
                }
            }
            Term::Power { var, exponent, scale } => {
                let z = x[*var];
                if z <= 0.0 {
                    f64::INFINITY
                } else {
                    scale * z.powf(*exponent)
                }
            }
            Term::Exp2 { var, scale } => scale * x[*var].exp2(),
        }
    }

    /// Adds this term's gradient and Hessian into local buffers; `pos`
    /// maps global variable indices to local slots.
    fn accumulate(&self, x: &[f64], pos: &dyn Fn(usize) -> usize, g: &mut [f64], h: &mut DMatrix<f64>) {
        match self {
            Term::Constant(_) => {}
            Term::Linear { idx, coef } => {
                for (&i, c) in idx.iter().zip(coef) {
                    g[pos(i)] += c;
                }
            }
            Term::Quadratic { idx, p, q } => {
                for (a, &i) in idx.iter().enumerate() {
                    let pa = pos(i);
                    let mut row = q[a];
                    for (b, &j) in idx.iter().enumerate() {
                        let pab = 0.5 * (p[(a, b)] + p[(b, a)]);
                        row += pab * x[j];
                        h[(pa, pos(j))] += pab;
                    }
                    g[pa] += row;
                }
            }
            Term::SqDist { idx, center, scale } => {
                for (&i, c) in idx.iter().zip(center) {
                    let pi = pos(i);
                    g[pi] += 2.0 * scale * (x[i] - c);
                    h[(pi, pi)] += 2.0 * scale;
                }
            }
            Term::NegLog1p { var, coef, scale } => {
                let arg = 1.0 + coef * x[*var];
                let p = pos(*var);
                g[p] += -scale * coef / arg;
                h[(p, p)] += scale * coef * coef / (arg * arg);
            }
            Term::Power { var, exponent, scale } => {
                let z = x[*var];
                let p = pos(*var);
                g[p] += scale * exponent * z.powf(exponent - 1.0);
                h[(p, p)] += scale * exponent * (exponent - 1.0) * z.powf(exponent - 2.0);
            }
            Term::Exp2 { var, scale } => {
                let v = scale * x[*var].exp2();
                let p = pos(*var);
                g[p] += v * LN_2;
                h[(p, p)] += v * LN_2 * LN_2;
            }
        }
    }
}

/// A convex function written as a sum of [`Term`]s.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexExpr {
    pub terms: Vec<Term>,
}

impl ConvexExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, term: Term) -> Self {
        self.terms.push(term);
        self
    }

    pub fn constant(self, c: f64) -> Self {
        self.with(Term::Constant(c))
    }

    pub fn linear(self, idx: Vec<usize>, coef: Vec<f64>) -> Self {
        self.with(Term::Linear { idx, coef })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(x)).sum()
    }

    fn support(&self) -> Vec<usize> {
        let mut v = Vec::new();
        for t in &self.terms {
            t.vars(&mut v);
        }
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Minimize `objective(x)` subject to `constraint_i(x) <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSubproblem {
    dim: usize,
    objective: ConvexExpr,
    constraints: Vec<(String, ConvexExpr)>,
}

impl ConvexSubproblem {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            objective: ConvexExpr::new(),
            constraints: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn objective(&self) -> &ConvexExpr {
        &self.objective
    }

    pub fn constraints(&self) -> &[(String, ConvexExpr)] {
        &self.constraints
    }

    fn check_expr(&self, e: &ConvexExpr) -> Result<()> {
        for t in &e.terms {
            t.check_convex()?;
            let mut v = Vec::new();
            t.vars(&mut v);
            if let Some(&bad) = v.iter().find(|&&i| i >= self.dim) {
                return Err(Error::Dimension {
                    expected: self.dim,
                    got: bad + 1,
                });
            }
        }
        Ok(())
    }

    /// Adds a term to the objective after certifying its convexity.
    pub fn minimize(&mut self, term: Term) -> Result<&mut Self> {
        let e = ConvexExpr::new().with(term);
        self.check_expr(&e)?;
        self.objective.terms.extend(e.terms);
        Ok(self)
    }

    /// Adds `expr(x) <= 0`.
    pub fn constrain(&mut self, label: impl Into<String>, expr: ConvexExpr) -> Result<&mut Self> {
        self.check_expr(&expr)?;
        self.constraints.push((label.into(), expr));
        Ok(self)
    }

    /// `a . x_I <= b`
    pub fn affine_le(&mut self, label: impl Into<String>, idx: Vec<usize>, a: Vec<f64>, b: f64) -> Result<&mut Self> {
        self.constrain(label, ConvexExpr::new().linear(idx, a).constant(-b))
    }

    /// `||x_I - center|| <= radius`
    pub fn ball(
        &mut self,
        label: impl Into<String>,
        idx: Vec<usize>,
        center: Vec<f64>,
        radius: f64,
    ) -> Result<&mut Self> {
        self.constrain(
            label,
            ConvexExpr::new()
                .with(Term::SqDist {
                    idx,
                    center,
                    scale: 1.0,
                })
                .constant(-radius * radius),
        )
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.value(x)
    }

    /// Largest positive constraint value (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|(_, c)| c.value(x))
            .fold(0.0, |acc: f64, v| if v.is_nan() { f64::INFINITY } else { acc.max(v) })
    }

    /// Label and value of the most violated constraint.
    pub fn worst_constraint(&self, x: &[f64]) -> Option<(&str, f64)> {
        self.constraints
            .iter()
            .map(|(l, c)| (l.as_str(), c.value(x)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Allowed constraint violation of a returned point.
    pub feas_tol: f64,
    /// Target duality gap `m / t`.
    pub opt_tol: f64,
    /// Newton steps per phase.
    pub max_iters: usize,
    /// Barrier parameter growth factor.
    pub mu: f64,
    /// Phase-1 residual above which the problem is declared infeasible.
    pub infeasible_tol: f64,
    /// The search is confined to a ball around the start of radius
    /// `bound_scale * (1 + max|start_i|)`, which keeps barrier level sets
    /// bounded when some variable is free in one direction.
    pub bound_scale: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-6,
            opt_tol: 1e-8,
            max_iters: 2000,
            mu: 12.0,
            infeasible_tol: 1e-5,
            bound_scale: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    /// Final barrier duality gap, an upper bound on suboptimality.
    pub gap: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

struct Compiled {
    vars: Vec<usize>,
    expr: ConvexExpr,
}

impl Compiled {
    fn new(expr: &ConvexExpr) -> Self {
        Self {
            vars: expr.support(),
            expr: expr.clone(),
        }
    }

    /// Value, local gradient and local Hessian.
    fn derivatives(&self, x: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let k = self.vars.len();
        let mut g = vec![0.0; k];
        let mut h = DMatrix::zeros(k, k);
        let vars = &self.vars;
        let pos = |i: usize| vars.binary_search(&i).expect("variable in support");
        for t in &self.expr.terms {
            t.accumulate(x, &pos, &mut g, &mut h);
        }
        (self.expr.value(x), g, h)
    }
}

/// Barrier problem `t f0(x) - sum ln(-f_i(x))`.
struct Barrier<'a> {
    n: usize,
    objective: &'a Compiled,
    constraints: &'a [Compiled],
    /// Function whose domain must be respected without entering the
    /// barrier (the original objective during phase one).
    domain: Option<&'a ConvexExpr>,
}

impl Barrier<'_> {
    /// `None` when `x` is outside the strict interior.
    fn value(&self, x: &[f64], t: f64) -> Option<f64> {
        let f0 = self.objective.expr.value(x);
        if !f0.is_finite() {
            return None;
        }
        if let Some(d) = self.domain {
            if !d.value(x).is_finite() {
                return None;
            }
        }
        let mut v = t * f0;
        for c in self.constraints {
            let fi = c.expr.value(x);
            if !(fi < 0.0) {
                return None;
            }
            v -= (-fi).ln();
        }
        Some(v)
    }

    fn newton_system(&self, x: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let mut grad = DVector::zeros(self.n);
        let mut hess = DMatrix::zeros(self.n, self.n);
        let (_, g0, h0) = self.objective.derivatives(x);
        scatter(&self.objective.vars, &g0, &h0, t, &mut grad, &mut hess);
        for c in self.constraints {
            let (fi, gi, hi) = c.derivatives(x);
            let inv = -1.0 / fi;
            scatter(&c.vars, &gi, &hi, inv, &mut grad, &mut hess);
            for (a, &i) in c.vars.iter().enumerate() {
                for (b, &j) in c.vars.iter().enumerate() {
                    hess[(i, j)] += inv * inv * gi[a] * gi[b];
                }
            }
        }
        (grad, hess)
    }
}

fn scatter(vars: &[usize], g: &[f64], h: &DMatrix<f64>, w: f64, grad: &mut DVector<f64>, hess: &mut DMatrix<f64>) {
    for (a, &i) in vars.iter().enumerate() {
        grad[i] += w * g[a];
        for (b, &j) in vars.iter().enumerate() {
            hess[(i, j)] += w * h[(a, b)];
        }
    }
}

fn newton_direction(grad: &DVector<f64>, hess: DMatrix<f64>) -> Option<DVector<f64>> {
    let n = grad.len();
    let diag_scale = (0..n).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        for i in 0..n {
            h[(i, i)] += ridge;
        }
        if let Some(ch) = h.cholesky() {
            return Some(-ch.solve(grad));
        }
        ridge = if ridge == 0.0 {
            1e-14 * diag_scale
        } else {
            ridge * 100.0
        };
    }
    None
}

enum Centering {
    Done,
    /// Early exit requested by the stop predicate.
    Stopped,
    Stalled,
}

/// Damped Newton on the barrier at fixed `t`.
fn center(bar: &Barrier<'_>, x: &mut [f64], t: f64, budget: &mut usize, stop: &dyn Fn(&[f64]) -> bool) -> Centering {
    const ALPHA: f64 = 0.25;
    const BETA: f64 = 0.5;
    loop {
        if stop(x) {
            return Centering::Stopped;
        }
        if *budget == 0 {
            return Centering::Stalled;
        }
        *budget -= 1;
        let (grad, hess) = bar.newton_system(x, t);
        let Some(dx) = newton_direction(&grad, hess) else {
            return Centering::Stalled;
        };
        let decrement = -grad.dot(&dx);
        if decrement / 2.0 <= 1e-11 {
            return Centering::Done;
        }
        let Some(f) = bar.value(x, t) else {
            return Centering::Stalled;
        };
        let mut step = 1.0;
        let mut trial = x.to_vec();
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..x.len() {
                trial[i] = x[i] + step * dx[i];
            }
            if let Some(ft) = bar.value(&trial, t) {
                if ft <= f - ALPHA * step * decrement {
                    accepted = true;
                    break;
                }
            }
            step *= BETA;
        }
        if !accepted {
            // no progress possible at this precision
            return Centering::Done;
        }
        x.copy_from_slice(&trial);
        if step * decrement <= 1e-14 * f.abs().max(1.0) {
            return Centering::Done;
        }
    }
}

/// Solves `p` from `start`.
///
/// The returned point satisfies every constraint within `feas_tol` when
/// the status is not `Infeasible`. If `start` is feasible, the returned
/// objective is never worse than the objective at `start`.
pub fn solve(p: &ConvexSubproblem, start: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    if start.len() != p.dim {
        return Err(Error::Dimension {
            expected: p.dim,
            got: start.len(),
        });
    }
    let start_obj = p.objective_value(start);
    let start_viol = p.max_violation(start);
    let start_report = |status| SolveReport {
        x: start.to_vec(),
        objective: start_obj,
        max_violation: start_viol,
        gap: f64::INFINITY,
        iterations: 0,
        status,
    };
    let start_feasible = start_viol <= opts.feas_tol && start_obj.is_finite();
    let radius = opts.bound_scale * (1.0 + start.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
    let mut bounded = p.clone();
    bounded.constraints.push((
        "search bound".into(),
        ConvexExpr::new()
            .with(Term::SqDist {
                idx: (0..p.dim).collect(),
                center: start.to_vec(),
                scale: 1.0 / (radius * radius),
            })
            .constant(-1.0),
    ));
    let p = &bounded;

    let mut iterations = 0;
    let mut x = start.to_vec();
    let strictly = p.constraints.iter().all(|(_, c)| c.value(&x) < 0.0);
    if !strictly {
        match phase_one(p, &x, opts)? {
            PhaseOne::Interior(xi, it) => {
                iterations += it;
                x = xi;
            }
            PhaseOne::NoInterior(it) => {
                iterations += it;
                let status = if start_feasible {
                    SolveStatus::MaxIters
                } else {
                    SolveStatus::Infeasible
                };
                let mut r = start_report(status);
                r.iterations = iterations;
                return Ok(r);
            }
        }
    }
    if !p.objective_value(&x).is_finite() {
        let mut r = start_report(if start_feasible {
            SolveStatus::MaxIters
        } else {
            SolveStatus::Infeasible
        });
        r.iterations = iterations;
        return Ok(r);
    }

    let objective = Compiled::new(&p.objective);
    let constraints: Vec<Compiled> = p.constraints.iter().map(|(_, c)| Compiled::new(c)).collect();
    let bar = Barrier {
        n: p.dim,
        objective: &objective,
        constraints: &constraints,
        domain: None,
    };
    let m = constraints.len().max(1) as f64;
    let mut t = 1.0;
    let mut budget = opts.max_iters;
    let mut status = SolveStatus::Optimal;
    let no_stop = |_: &[f64]| false;
    loop {
        let before = budget;
        match center(&bar, &mut x, t, &mut budget, &no_stop) {
            Centering::Done | Centering::Stopped => {}
            Centering::Stalled => {
                status = SolveStatus::MaxIters;
                iterations += before - budget;
                break;
            }
        }
        iterations += before - budget;
        if constraints.is_empty() || m / t <= opts.opt_tol {
            break;
        }
        t *= opts.mu;
    }
    let gap = if constraints.is_empty() { 0.0 } else { m / t };
    let mut report = SolveReport {
        objective: p.objective_value(&x),
        max_violation: p.max_violation(&x),
        x,
        gap,
        iterations,
        status,
    };
    if start_feasible && report.objective > start_obj {
        let mut r = start_report(report.status);
        r.iterations = report.iterations;
        return Ok(r);
    }
    if report.max_violation > opts.feas_tol {
        report.status = SolveStatus::Infeasible;
    }
    Ok(report)
}

enum PhaseOne {
    Interior(Vec<f64>, usize),
    NoInterior(usize),
}

/// Minimizes `s` subject to `f_i(x) <= s`, stopping at the first strictly
/// feasible point.
fn phase_one(p: &ConvexSubproblem, start: &[f64], opts: &SolveOptions) -> Result<PhaseOne> {
    let n = p.dim;
    let s_idx = n;
    if !p.objective.value(start).is_finite() {
        return Ok(PhaseOne::NoInterior(0));
    }
    let worst = p
        .constraints
        .iter()
        .map(|(_, c)| c.value(start))
        .fold(f64::NEG_INFINITY, f64::max);
    if !worst.is_finite() {
        // start outside some term's domain
        return Ok(PhaseOne::NoInterior(0));
    }
    let mut aux = ConvexSubproblem::new(n + 1);
    aux.objective = ConvexExpr::new().linear(vec![s_idx], vec![1.0]);
    for (label, c) in &p.constraints {
        aux.constraints
            .push((label.clone(), c.clone().linear(vec![s_idx], vec![-1.0])));
    }
    // keep phase one off the walls of every term's domain
    for t in p
        .objective
        .terms
        .iter()
        .chain(p.constraints.iter().flat_map(|(_, c)| c.terms.iter()))
    {
        if let Some(g) = t.domain_guard() {
            aux.constraints.push(("domain".into(), g));
        }
    }
    let floor = 1.0 + worst.abs();
    aux.constraints.push((
        "phase1-floor".into(),
        ConvexExpr::new().linear(vec![s_idx], vec![-1.0]).constant(-floor),
    ));
    let mut x = start.to_vec();
    let s0 = worst + 1e-3 * (1.0 + worst.abs());
    x.push(s0);

    let objective = Compiled::new(&aux.objective);
    let constraints: Vec<Compiled> = aux.constraints.iter().map(|(_, c)| Compiled::new(c)).collect();
    let bar = Barrier {
        n: n + 1,
        objective: &objective,
        constraints: &constraints,
        domain: Some(&p.objective),
    };
    let strictly_feasible = |x: &[f64]| x[s_idx] < 0.0 && p.constraints.iter().all(|(_, c)| c.value(&x[..n]) < 0.0);
    let m = constraints.len() as f64;
    // balance the s-gradient at the start so centering does not drift away
    let mut t = constraints
        .iter()
        .map(|c| -1.0 / c.expr.value(&x))
        .sum::<f64>()
        .max(1.0 / floor);
    let mut budget = opts.max_iters;
    loop {
        match center(&bar, &mut x, t, &mut budget, &strictly_feasible) {
            Centering::Stopped => {
                x.truncate(n);
                return Ok(PhaseOne::Interior(x, opts.max_iters - budget));
            }
            Centering::Stalled => break,
            Centering::Done => {}
        }
        if m / t <= opts.infeasible_tol * 1e-3 {
            break;
        }
        t *= opts.mu;
    }
    Ok(PhaseOne::NoInterior(opts.max_iters - budget))
}
