//! Newton barrier solver with a three-stage line search.
//!
//! For a fixed barrier weight `τ` the solver minimizes
//!
//! ```text
//! F_τ(x) = f(x) - (1/τ) (Σ_j ln(-c_j(x)) + Σ_i ln x_i)
//! ```
//!
//! by damped Newton steps. Each step length is found by
//!
//! 1. closing the interval on the linear rows and sign bounds in closed form,
//! 2. bisecting each curved (perspective epigraph) row for its single zero crossing,
//! 3. golden-section minimization of `f` on what is left, falling back to `F_τ` when
//!    the `f` minimizer does not decrease `F_τ`.
//!
//! `τ` grows geometrically until it reaches `tau_max`.

use std::f64::consts::LN_2;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::convex::{initial_point, perspective_derivs_unchecked, Allocation, ConvexProgram, LinearConstraint};
use crate::error::{Error, Result};

/// A smooth convex program with linear rows, curved rows and sign bounds, as seen
/// by the barrier and interior-point solvers.
pub trait SmoothProgram {
    fn n_vars(&self) -> usize;
    fn nonneg(&self) -> &[bool];
    fn linear(&self) -> &[LinearConstraint];
    fn n_curved(&self) -> usize;
    fn objective(&self, x: &[f64]) -> f64;
    /// Adds the objective gradient and Hessian into `g` and `h`.
    fn add_objective_derivs(&self, x: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>);
    fn curved_value(&self, j: usize, x: &[f64]) -> f64;
    /// Adds the gradient and Hessian of curved row `j` into `g` and `h`.
    fn add_curved_derivs(&self, j: usize, x: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>);

    fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..self.n_curved() {
            worst = worst.max(self.curved_value(j, x));
        }
        for l in self.linear() {
            worst = worst.max(l.value(x));
        }
        for (v, nn) in x.iter().zip(self.nonneg()) {
            if *nn {
                worst = worst.max(-v);
            }
        }
        worst
    }

    fn is_strictly_feasible(&self, x: &[f64]) -> bool {
        x.iter().zip(self.nonneg()).all(|(v, nn)| !nn || *v > 0.0)
            && self.linear().iter().all(|l| l.value(x) < 0.0)
            && (0..self.n_curved()).all(|j| self.curved_value(j, x) < 0.0)
    }
}

fn add_term_derivs(
    term: &crate::convex::PerspectiveTerm,
    x: &[f64],
    g: &mut DVector<f64>,
    h: &mut DMatrix<f64>,
) {
    let (ti, yi) = (term.t_index, term.y_index);
    let (gt, v) = perspective_derivs_unchecked(term.gamma, x[ti], x[yi]);
    let c = term.coeff;
    g[ti] += c * gt[0];
    g[yi] += c * gt[1];
    h[(ti, ti)] += c * v[0] * v[0];
    h[(ti, yi)] += c * v[0] * v[1];
    h[(yi, ti)] += c * v[0] * v[1];
    h[(yi, yi)] += c * v[1] * v[1];
}

impl SmoothProgram for ConvexProgram {
    fn n_vars(&self) -> usize {
        self.kinds.len()
    }

    fn nonneg(&self) -> &[bool] {
        &self.nonneg
    }

    fn linear(&self) -> &[LinearConstraint] {
        &self.linear
    }

    fn n_curved(&self) -> usize {
        self.epigraph.len()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        ConvexProgram::objective(self, x)
    }

    fn add_objective_derivs(&self, x: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        for (i, c) in self.objective_linear.iter().enumerate() {
            g[i] += c;
        }
        for t in &self.objective_terms {
            add_term_derivs(t, x, g, h);
        }
    }

    fn curved_value(&self, j: usize, x: &[f64]) -> f64 {
        self.epigraph[j].value(x)
    }

    fn add_curved_derivs(&self, j: usize, x: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        let e = &self.epigraph[j];
        g[e.aux_index] += 1.0;
        for t in &e.terms {
            add_term_derivs(t, x, g, h);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    pub tau0: f64,
    pub mu: f64,
    pub tau_max: f64,
    /// Inner loop stops once `‖x_k - x_{k-1}‖₂ <= eps` ...
    pub eps: f64,
    /// ... and the scaled stationarity residual is below this.
    pub grad_tol: f64,
    pub max_inner: usize,
    /// Fraction of the distance to the boundary a step may cover.
    pub shrink: f64,
    pub bisection_tol: f64,
    pub golden_tol: f64,
    /// Keep per-iteration records in [`BarrierRun::history`].
    pub record_history: bool,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            mu: 10.0,
            tau_max: 1e8,
            eps: 1e-6,
            grad_tol: 1e-7,
            max_inner: 200,
            shrink: 0.99,
            bisection_tol: 1e-9,
            golden_tol: 1e-8,
            record_history: false,
        }
    }
}

impl BarrierOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0 && self.mu > 1.0 && self.eps > 0.0 && self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidConfig(format!("bad barrier options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x_star: Allocation,
    /// Maximized throughput objective in bits (`-f(x*) / ln 2`).
    pub objective_bits: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub max_constraint_violation: f64,
    /// `‖∇f + Σ λ_j ∇c_j - ν‖∞` relative to its largest term, with barrier dual
    /// estimates (NB) or interior-point multipliers of the last subproblem (quadratic method).
    pub kkt_residual: f64,
    pub status: SolveStatus,
    /// Newton systems that needed a diagonal shift.
    pub regularized_solves: usize,
    pub elapsed: Duration,
}

impl SolveResult {
    pub(crate) fn infeasible(n: usize, elapsed: Duration) -> Self {
        Self {
            x_star: Allocation::new(vec![0.0; n]),
            objective_bits: f64::NAN,
            outer_iters: 0,
            inner_iters: 0,
            max_constraint_violation: f64::NAN,
            kkt_residual: f64::NAN,
            status: SolveStatus::Infeasible,
            regularized_solves: 0,
            elapsed,
        }
    }

    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// `‖∇F_τ‖∞` relative to the largest term of the Lagrangian gradient,
/// `max(1, ‖∇f‖∞, max_j λ_j ‖∇c_j‖∞)`. With the barrier duals `λ_j = 1/(τ(-c_j))`
/// and `ν_i = 1/(τ x_i)`, `∇F_τ` is the Lagrangian gradient, so this is the scaled
/// KKT stationarity residual.
pub fn scaled_stationarity<P: SmoothProgram + ?Sized>(p: &P, tau: f64, x: &[f64], barrier_grad: &DVector<f64>) -> f64 {
    let n = p.n_vars();
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    p.add_objective_derivs(x, &mut g, &mut h);
    let mut scale = g.amax().max(1.0);
    for j in 0..p.n_curved() {
        g.fill(0.0);
        p.add_curved_derivs(j, x, &mut g, &mut h);
        scale = scale.max(g.amax() / (tau * -p.curved_value(j, x)));
    }
    for l in p.linear() {
        let amax = l.a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        scale = scale.max(amax / (tau * -l.value(x)));
    }
    barrier_grad.amax() / scale
}

/// Barrier objective, `+∞` outside the strict interior.
pub fn barrier_value<P: SmoothProgram + ?Sized>(p: &P, tau: f64, x: &[f64]) -> f64 {
    let mut logs = 0.0;
    for j in 0..p.n_curved() {
        let c = p.curved_value(j, x);
        if !(c < 0.0) {
            return f64::INFINITY;
        }
        logs += (-c).ln();
    }
    for l in p.linear() {
        let c = l.value(x);
        if !(c < 0.0) {
            return f64::INFINITY;
        }
        logs += (-c).ln();
    }
    for (v, nn) in x.iter().zip(p.nonneg()) {
        if *nn {
            if !(*v > 0.0) {
                return f64::INFINITY;
            }
            logs += v.ln();
        }
    }
    let f = p.objective(x);
    if !f.is_finite() {
        return f64::INFINITY;
    }
    f - logs / tau
}

/// Gradient and Hessian of [`barrier_value`] at a strictly feasible `x`.
pub fn barrier_derivs<P: SmoothProgram + ?Sized>(p: &P, tau: f64, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = p.n_vars();
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    p.add_objective_derivs(x, &mut g, &mut h);

    let inv_tau = 1.0 / tau;
    let mut gc = DVector::zeros(n);
    let mut hc = DMatrix::zeros(n, n);
    for j in 0..p.n_curved() {
        gc.fill(0.0);
        hc.fill(0.0);
        p.add_curved_derivs(j, x, &mut gc, &mut hc);
        let s = -p.curved_value(j, x);
        g.axpy(inv_tau / s, &gc, 1.0);
        h += &hc * (inv_tau / s);
        h.ger(inv_tau / (s * s), &gc, &gc, 1.0);
    }
    for l in p.linear() {
        let s = -l.value(x);
        let a = DVector::from_column_slice(&l.a);
        g.axpy(inv_tau / s, &a, 1.0);
        h.ger(inv_tau / (s * s), &a, &a, 1.0);
    }
    for (i, (v, nn)) in x.iter().zip(p.nonneg()).enumerate() {
        if *nn {
            g[i] -= inv_tau / v;
            h[(i, i)] += inv_tau / (v * v);
        }
    }
    (g, h)
}

#[derive(Debug, Clone)]
pub struct NewtonDirection {
    pub d: DVector<f64>,
    pub gradient: DVector<f64>,
    /// `-gᵀd`, the squared Newton decrement.
    pub decrement_sq: f64,
    /// A diagonal shift was added to the Hessian before factoring.
    pub regularized: bool,
}

pub const NEWTON_SHIFT: f64 = 1e-10;

/// Solves `H x = b` for symmetric positive semidefinite `H`. The system is first
/// scaled to unit diagonal, which keeps curvature spread over many orders of
/// magnitude factorable. If Cholesky still fails the scaled diagonal is shifted
/// by `NEWTON_SHIFT`, then by growing multiples. Returns the solution and whether
/// a shift was needed.
pub fn solve_spd(h: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, bool)> {
    let n = h.nrows();
    let scale = DVector::from_iterator(n, (0..n).map(|i| {
        let d = h[(i, i)];
        if d > 0.0 && d.is_finite() {
            1.0 / d.sqrt()
        } else {
            1.0
        }
    }));
    let hs = DMatrix::from_fn(n, n, |i, j| h[(i, j)] * scale[i] * scale[j]);
    let bs = b.component_mul(&scale);
    let mut shift = 0.0;
    loop {
        let mut m = hs.clone();
        for i in 0..n {
            m[(i, i)] += shift;
        }
        if let Some(ch) = m.cholesky() {
            return Some((ch.solve(&bs).component_mul(&scale), shift > 0.0));
        }
        shift = if shift == 0.0 { NEWTON_SHIFT } else { shift * 100.0 };
        if shift > 1.0 {
            return None;
        }
    }
}

/// Solves `H d = -g` for the barrier Hessian (see [`solve_spd`]).
pub fn newton_direction<P: SmoothProgram + ?Sized>(p: &P, tau: f64, x: &[f64]) -> Result<NewtonDirection> {
    let (g, h) = barrier_derivs(p, tau, x);
    if g.iter().chain(h.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite barrier derivatives".into()));
    }
    let (d, regularized) =
        solve_spd(&h, &-&g).ok_or_else(|| Error::Domain("barrier Hessian cannot be factored".into()))?;
    let decrement_sq = -g.dot(&d);
    Ok(NewtonDirection {
        d,
        gradient: g,
        decrement_sq,
        regularized,
    })
}

/// Cap for step lengths when no linear row or bound limits the ray.
pub const ALPHA_CAP: f64 = 1e6;

/// Longest step along `d` keeping every linear row and sign bound strictly
/// satisfied, scaled by `shrink`.
pub fn alpha_linear<P: SmoothProgram + ?Sized>(p: &P, x: &[f64], d: &[f64], shrink: f64) -> f64 {
    let mut alpha = f64::INFINITY;
    for l in p.linear() {
        let slope = crate::convex::dot(&l.a, d);
        if slope > 0.0 {
            alpha = alpha.min(-l.value(x) / slope);
        }
    }
    for ((xi, di), nn) in x.iter().zip(d).zip(p.nonneg()) {
        if *nn && *di < 0.0 {
            alpha = alpha.min(-xi / di);
        }
    }
    shrink * alpha.min(ALPHA_CAP)
}

/// Bisection for the zero crossing of `phi` on `[0, hi]`, given `phi(0) < 0 <= phi(hi)`.
/// Returns the feasible end of the final bracket.
pub fn bisect_crossing(phi: impl Fn(f64) -> f64, hi: f64, tol: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Shrinks `alpha_i` so that every curved row stays strictly negative along the ray.
pub fn alpha_log_bisection<P: SmoothProgram + ?Sized>(
    p: &P,
    x: &[f64],
    d: &[f64],
    alpha_i: f64,
    shrink: f64,
    tol: f64,
) -> f64 {
    let mut alpha = alpha_i;
    let mut xa = x.to_vec();
    for j in 0..p.n_curved() {
        let mut phi = |a: f64| {
            for k in 0..x.len() {
                xa[k] = x[k] + a * d[k];
            }
            let c = p.curved_value(j, &xa);
            if c.is_nan() {
                f64::INFINITY
            } else {
                c
            }
        };
        let crossing = if phi(alpha_i) < 0.0 {
            alpha_i
        } else {
            let cell = std::cell::RefCell::new(&mut phi);
            bisect_crossing(|a| (cell.borrow_mut())(a), alpha_i, tol)
        };
        alpha = alpha.min(crossing);
    }
    shrink * alpha
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the minimizer of a unimodal `f` on `[a, b]`.
/// The endpoints are compared against the final estimate so boundary minima
/// are returned exactly.
pub fn golden_section_min(f: impl Fn(f64) -> f64, interval: (f64, f64), tol: f64) -> f64 {
    let (a0, b0) = interval;
    let (mut a, mut b) = (a0, b0);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (mid, f(mid));
    for cand in [a0, b0] {
        let v = f(cand);
        if v < best.1 {
            best = (cand, v);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub tau: f64,
    pub barrier_before: f64,
    pub barrier_after: f64,
    pub alpha: f64,
    pub step_norm: f64,
    pub strictly_feasible: bool,
    /// Step came from the `f` line search (true) or the `F_τ` fallback (false).
    pub used_objective_step: bool,
}

#[derive(Debug, Clone)]
pub struct BarrierRun {
    pub x: Vec<f64>,
    pub tau: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub regularized_solves: usize,
    pub history: Vec<IterRecord>,
}

/// Runs the barrier method from a strictly feasible `x0`.
pub fn barrier_minimize<P: SmoothProgram + ?Sized>(p: &P, x0: &[f64], opts: &BarrierOptions) -> Result<BarrierRun> {
    opts.validate()?;
    if !p.is_strictly_feasible(x0) {
        return Err(Error::NoInteriorPoint("barrier start is not strictly feasible".into()));
    }
    let n = p.n_vars();
    let mut x = x0.to_vec();
    let mut tau = opts.tau0;
    let mut last_tau;
    let mut run = BarrierRun {
        x: Vec::new(),
        tau,
        outer_iters: 0,
        inner_iters: 0,
        status: SolveStatus::Converged,
        kkt_residual: f64::NAN,
        regularized_solves: 0,
        history: Vec::new(),
    };
    let mut trial = vec![0.0; n];

    loop {
        let mut capped = true;
        for _ in 0..opts.max_inner {
            let nd = newton_direction(p, tau, &x)?;
            if nd.regularized {
                run.regularized_solves += 1;
            }
            let grad_inf = scaled_stationarity(p, tau, &x, &nd.gradient);
            if grad_inf <= opts.grad_tol * 1e-3 {
                capped = false;
                break;
            }
            let d = nd.d.as_slice();
            let alpha_i = alpha_linear(p, &x, d, opts.shrink);
            let alpha_ii = alpha_log_bisection(p, &x, d, alpha_i, opts.shrink, opts.bisection_tol);

            let point = |a: f64, buf: &mut Vec<f64>| {
                for k in 0..n {
                    buf[k] = x[k] + a * d[k];
                }
            };
            let f_before = barrier_value(p, tau, &x);
            let phi_f = |a: f64| {
                let mut buf = vec![0.0; n];
                point(a, &mut buf);
                p.objective(&buf)
            };
            let phi_barrier = |a: f64| {
                let mut buf = vec![0.0; n];
                point(a, &mut buf);
                barrier_value(p, tau, &buf)
            };
            let obj_before = p.objective(&x);
            let mut used_objective_step = false;
            let mut alpha;
            let mut f_after;
            if 0.5 * nd.decrement_sq <= 1e-12 * (1.0 + f_before.abs()) {
                // decrease is below the rounding of F_τ: pure Newton step
                alpha = alpha_ii.min(1.0);
                point(alpha, &mut trial);
                f_after = barrier_value(p, tau, &trial);
            } else {
                alpha = golden_section_min(phi_f, (0.0, alpha_ii), opts.golden_tol);
                point(alpha, &mut trial);
                f_after = barrier_value(p, tau, &trial);
                used_objective_step = true;
                // the f-step must buy a fair share of the Newton-predicted decrease
                let sufficient = f_before - 1e-4 * nd.decrement_sq;
                if !(f_after <= sufficient && p.objective(&trial) < obj_before) {
                    used_objective_step = false;
                    alpha = golden_section_min(phi_barrier, (0.0, alpha_ii), opts.golden_tol);
                    point(alpha, &mut trial);
                    f_after = barrier_value(p, tau, &trial);
                    if !(f_after <= f_before) {
                        alpha = 0.0;
                        f_after = f_before;
                        trial.copy_from_slice(&x);
                    }
                }
            }
            let step_norm = alpha * nd.d.norm();
            if opts.record_history {
                run.history.push(IterRecord {
                    tau,
                    barrier_before: f_before,
                    barrier_after: f_after,
                    alpha,
                    step_norm,
                    strictly_feasible: p.is_strictly_feasible(&trial),
                    used_objective_step,
                });
            }
            x.copy_from_slice(&trial);
            run.inner_iters += 1;
            let at_precision = step_norm <= 1e-14 * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max));
            if alpha == 0.0 || at_precision || (step_norm <= opts.eps && grad_inf <= opts.grad_tol) {
                capped = false;
                break;
            }
        }
        run.outer_iters += 1;
        last_tau = tau;
        if capped {
            run.status = SolveStatus::MaxIterations;
        } else {
            run.status = SolveStatus::Converged;
        }
        if tau * opts.mu > opts.tau_max || tau >= opts.tau_max {
            break;
        }
        tau *= opts.mu;
    }
    let (g, _) = barrier_derivs(p, last_tau, &x);
    run.kkt_residual = scaled_stationarity(p, last_tau, &x, &g);
    run.tau = last_tau;
    run.x = x;
    Ok(run)
}

/// Solves a model program with the Newton barrier method.
pub fn solve_nb(p: &ConvexProgram, opts: &BarrierOptions) -> Result<SolveResult> {
    let start = Instant::now();
    p.validate()?;
    let pre = p.presolve();
    let x0 = match initial_point(&pre.program) {
        Ok(ip) if ip.degenerate.is_empty() => ip.allocation.x,
        _ => return Ok(SolveResult::infeasible(p.n_vars(), start.elapsed())),
    };
    let run = barrier_minimize(&pre.program, &x0, opts)?;
    let x = pre.expand(&run.x);
    Ok(SolveResult {
        objective_bits: -p.objective(&x) / LN_2,
        max_constraint_violation: p.max_violation(&x),
        x_star: Allocation::new(x),
        outer_iters: run.outer_iters,
        inner_iters: run.inner_iters,
        kkt_residual: run.kkt_residual,
        status: run.status,
        regularized_solves: run.regularized_solves,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::VarKind;

    #[test]
    fn golden_section_examples() {
        let a = golden_section_min(|a| (a - 0.3) * (a - 0.3), (0.0, 1.0), 1e-6);
        assert!((a - 0.3).abs() <= 1e-6);
        let a = golden_section_min(|a| -a, (0.0, 1.0), 1e-6);
        assert!((a - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn golden_section_on_perspective_family() {
        // f(α) = -α ln(1 + 1/α) + 0.4 α is convex on [0.01, 2]
        let f = |a: f64| -a * (1.0 + 1.0 / a).ln() + 0.4 * a;
        let tol = 1e-7;
        let got = golden_section_min(f, (0.01, 2.0), tol);
        let mut best = (0.01, f(0.01));
        let steps = ((2.0 - 0.01) / 1e-7) as usize;
        // dense scan, stride over a coarse grid then refine locally
        for i in (0..=steps).step_by(1000) {
            let a = 0.01 + i as f64 * 1e-7;
            if f(a) < best.1 {
                best = (a, f(a));
            }
        }
        let lo = ((best.0 - 0.01) / 1e-7) as usize;
        for i in lo.saturating_sub(1000)..=(lo + 1000).min(steps) {
            let a = 0.01 + i as f64 * 1e-7;
            if f(a) < best.1 {
                best = (a, f(a));
            }
        }
        assert!((got - best.0).abs() <= tol + 1e-7, "{got} vs {}", best.0);
    }

    #[test]
    fn bisection_on_linear_function() {
        let a = bisect_crossing(|a| a - 0.5, 1.0, 1e-8);
        assert!((a - 0.5).abs() <= 1e-8);
        assert!(a <= 0.5);
    }

    fn simplex3() -> ConvexProgram {
        let mut p = ConvexProgram::empty(vec![VarKind::Time; 3]);
        p.linear.push(LinearConstraint {
            a: vec![1.0, 1.0, 1.0],
            b: 1.0,
        });
        p
    }

    #[test]
    fn alpha_linear_examples() {
        let p = simplex3();
        let a = alpha_linear(&p, &[0.2, 0.2, 0.2], &[0.5, 0.5, 0.5], 0.99);
        assert!((a - 0.99 * 0.4 / 1.5).abs() < 1e-12);
        assert!((a - 0.264).abs() < 1e-3);
        let a = alpha_linear(&p, &[0.2, 0.2, 0.2], &[0.0, 0.0, 0.0], 0.99);
        assert_eq!(a, 0.99 * ALPHA_CAP);
        let a = alpha_linear(&p, &[0.1, 0.2, 0.2], &[-0.2, 0.0, 0.0], 1.0);
        assert!((a - 0.5).abs() < 1e-15);
    }

    #[test]
    fn alpha_log_without_crossing_is_shrunk_interval() {
        let mut p = ConvexProgram::empty(vec![VarKind::Time, VarKind::Energy, VarKind::Throughput]);
        p.epigraph.push(crate::convex::EpigraphConstraint {
            aux_index: 2,
            terms: vec![crate::convex::PerspectiveTerm::new(10.0, 0, 1, 1.0)],
        });
        let x = [0.5, 0.5, -10.0];
        let a = alpha_log_bisection(&p, &x, &[0.0, 0.0, 1.0], 1.0, 0.99, 1e-9);
        assert!((a - 0.99).abs() < 1e-15);
        // aux climbs past its bound at α = 10 - 0.5 ln 11
        let bound = 0.5 * 11f64.ln();
        let a = alpha_log_bisection(&p, &x, &[0.0, 0.0, 20.0], 1.0, 1.0, 1e-12);
        assert!((a - (10.0 + bound) / 20.0).abs() < 1e-11);
    }

    #[test]
    fn analytic_center_direction() {
        // barrier only: the center of {t1 + t2 + t3 <= 1, t >= 0} is t = 1/4
        let p = simplex3();
        let x = [0.1, 0.1, 0.1];
        let nd = newton_direction(&p, 1.0, &x).unwrap();
        for k in 0..3 {
            assert!(nd.d[k] > 0.0);
        }
        let nd = newton_direction(&p, 1.0, &[0.25, 0.25, 0.25]).unwrap();
        assert!(nd.d.norm() < 1e-14);
        let run = barrier_minimize(&p, &x, &BarrierOptions::default()).unwrap();
        for v in &run.x {
            assert!((v - 0.25).abs() < 1e-9, "{:?} {:?}", run.x, run.status);
        }
    }
}
