//! Iterative local quadratic approximation.
//!
//! Each perspective term is replaced by its second-order model at the current point,
//!
//! ```text
//! l(t, y) ≈ l(t_k, y_k) + g_kᵀδ + ½ (v_kᵀδ)²,   δ = (t - t_k, y - y_k)
//! ```
//!
//! which turns the program into a convex QCQP (relay scenarios) or QP (direct
//! scenarios). Subproblems are solved by a primal-dual path-following interior
//! point method and the expansion point is moved to the subproblem solution until
//! the iterates settle.

use std::f64::consts::LN_2;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::barrier::{barrier_minimize, BarrierOptions, SmoothProgram, SolveResult, SolveStatus};
use crate::convex::{
    dot, initial_point, perspective_derivs_unchecked, perspective_unchecked, Allocation, ConvexProgram,
    LinearConstraint, PerspectiveTerm,
};
use crate::error::{Error, Result};

/// Second-order model of one perspective term at an expansion point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticModel {
    pub base_value: f64,
    pub g: [f64; 2],
    pub v: [f64; 2],
    pub expansion_point: (f64, f64),
}

impl QuadraticModel {
    pub fn new(gamma: f64, t_k: f64, y_k: f64) -> Result<Self> {
        if !(t_k > 0.0) || !(y_k >= 0.0) || !(gamma >= 0.0) {
            return Err(Error::Domain(format!(
                "expansion point needs t > 0, y >= 0 (t={t_k}, y={y_k}, gamma={gamma})"
            )));
        }
        let (g, v) = perspective_derivs_unchecked(gamma, t_k, y_k);
        Ok(Self {
            base_value: perspective_unchecked(gamma, t_k, y_k),
            g,
            v,
            expansion_point: (t_k, y_k),
        })
    }

    /// Weakens the curvature to what it is at the point of the same ray with
    /// `t = t_floor`. The perspective is 1-homogeneous, so value and gradient at
    /// the expansion point are unchanged; only slots that have nearly vanished
    /// are affected. Without this their curvature grows like `1/t` and pins the
    /// ratio `y/t` of a slot that should reopen.
    pub fn with_curvature_floor(mut self, t_floor: f64) -> Self {
        let t = self.expansion_point.0;
        if t < t_floor {
            let c = (t / t_floor).sqrt();
            self.v = [self.v[0] * c, self.v[1] * c];
        }
        self
    }

    pub fn value(&self, t: f64, y: f64) -> f64 {
        let d = [t - self.expansion_point.0, y - self.expansion_point.1];
        let s = self.v[0] * d[0] + self.v[1] * d[1];
        self.base_value + self.g[0] * d[0] + self.g[1] * d[1] + 0.5 * s * s
    }

    pub fn gradient(&self, t: f64, y: f64) -> [f64; 2] {
        let d = [t - self.expansion_point.0, y - self.expansion_point.1];
        let s = self.v[0] * d[0] + self.v[1] * d[1];
        [self.g[0] + s * self.v[0], self.g[1] + s * self.v[1]]
    }
}

/// `constant + linearᵀx + ½ Σ_k (u_kᵀx - r_k)²`, convex by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    pub constant: f64,
    pub linear: Vec<f64>,
    pub factors: Vec<RankOne>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankOne {
    pub u: Vec<f64>,
    pub r: f64,
}

impl QuadForm {
    pub fn zero(n: usize) -> Self {
        Self {
            constant: 0.0,
            linear: vec![0.0; n],
            factors: Vec::new(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.constant + dot(&self.linear, x);
        for f in &self.factors {
            let s = dot(&f.u, x) - f.r;
            v += 0.5 * s * s;
        }
        v
    }

    pub fn add_derivs(&self, x: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        for (i, c) in self.linear.iter().enumerate() {
            g[i] += c;
        }
        for f in &self.factors {
            let s = dot(&f.u, x) - f.r;
            let u = DVector::from_column_slice(&f.u);
            g.axpy(s, &u, 1.0);
            h.ger(1.0, &u, &u, 1.0);
        }
    }

    /// `(a, b)` with `q(x + sd) = q(x) + a s + ½ b s²`.
    fn ray(&self, x: &[f64], d: &[f64]) -> (f64, f64) {
        let mut a = dot(&self.linear, d);
        let mut b = 0.0;
        for f in &self.factors {
            let ud = dot(&f.u, d);
            a += (dot(&f.u, x) - f.r) * ud;
            b += ud * ud;
        }
        (a, b)
    }

    fn add_term(&mut self, term: &PerspectiveTerm, model: &QuadraticModel) {
        let (t_k, y_k) = model.expansion_point;
        let c = term.coeff;
        self.constant += c * (model.base_value - model.g[0] * t_k - model.g[1] * y_k);
        self.linear[term.t_index] += c * model.g[0];
        self.linear[term.y_index] += c * model.g[1];
        let root = c.sqrt();
        let mut u = vec![0.0; self.linear.len()];
        u[term.t_index] += root * model.v[0];
        u[term.y_index] += root * model.v[1];
        let r = root * (model.v[0] * t_k + model.v[1] * y_k);
        self.factors.push(RankOne { u, r });
    }
}

/// Convex program with a quadratic objective, quadratic rows `q_j(x) <= 0`,
/// linear rows and sign bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSubproblem {
    pub objective: QuadForm,
    pub quadratic: Vec<QuadForm>,
    pub linear: Vec<LinearConstraint>,
    pub nonneg: Vec<bool>,
}

impl QuadraticSubproblem {
    /// True when no row carries a quadratic factor.
    pub fn is_qp(&self) -> bool {
        self.quadratic.iter().all(|q| q.factors.is_empty())
    }
}

impl SmoothProgram for QuadraticSubproblem {
    fn n_vars(&self) -> usize {
        self.nonneg.len()
    }

    fn nonneg(&self) -> &[bool] {
        &self.nonneg
    }

    fn linear(&self) -> &[LinearConstraint] {
        &self.linear
    }

    fn n_curved(&self) -> usize {
        self.quadratic.len()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.objective.value(x)
    }

    fn add_objective_derivs(&self, x: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        self.objective.add_derivs(x, g, h);
    }

    fn curved_value(&self, j: usize, x: &[f64]) -> f64 {
        self.quadratic[j].value(x)
    }

    fn add_curved_derivs(&self, j: usize, x: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        self.quadratic[j].add_derivs(x, g, h);
    }
}

/// Replaces every perspective term of `p` by its quadratic model at `x_k`.
/// Linear rows and bounds are copied unchanged.
pub fn quadratize(p: &ConvexProgram, x_k: &[f64]) -> Result<QuadraticSubproblem> {
    quadratize_floored(p, x_k, 0.0)
}

/// [`quadratize`] with every model's curvature floored at `t_floor`
/// (see [`QuadraticModel::with_curvature_floor`]).
pub fn quadratize_floored(p: &ConvexProgram, x_k: &[f64], t_floor: f64) -> Result<QuadraticSubproblem> {
    let n = p.n_vars();
    if x_k.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x_k.len() });
    }
    let model = |t: &PerspectiveTerm| {
        QuadraticModel::new(t.gamma, x_k[t.t_index], x_k[t.y_index]).map(|m| m.with_curvature_floor(t_floor))
    };

    let mut objective = QuadForm::zero(n);
    objective.linear.copy_from_slice(&p.objective_linear);
    for t in &p.objective_terms {
        objective.add_term(t, &model(t)?);
    }
    let mut quadratic = Vec::with_capacity(p.epigraph.len());
    for e in &p.epigraph {
        let mut q = QuadForm::zero(n);
        q.linear[e.aux_index] = 1.0;
        for t in &e.terms {
            q.add_term(t, &model(t)?);
        }
        quadratic.push(q);
    }
    Ok(QuadraticSubproblem {
        objective,
        quadratic,
        linear: p.linear.clone(),
        nonneg: p.nonneg.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    /// Centering parameter.
    pub sigma: f64,
    pub tol: f64,
    /// Fraction of the largest positivity-preserving step.
    pub fraction: f64,
    /// Multipliers stay within this factor of `1/(t (-f_i))`.
    pub dual_clip: f64,
    pub stall_iters: usize,
    pub max_iters: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            tol: 1e-10,
            fraction: 0.99,
            dual_clip: 1e4,
            stall_iters: 50,
            max_iters: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IpmSolution {
    pub x: Vec<f64>,
    /// Multipliers in row order: quadratic rows, linear rows, sign bounds of the
    /// nonnegative coordinates.
    pub lambda: Vec<f64>,
    pub iterations: usize,
    /// Dual residual relative to its largest term.
    pub dual_residual: f64,
    /// Surrogate duality gap `-fᵀλ`.
    pub gap: f64,
}

/// Row view shared by the interior-point iteration.
struct Rows<'a> {
    q: &'a QuadraticSubproblem,
    bounds: Vec<usize>,
}

impl<'a> Rows<'a> {
    fn new(q: &'a QuadraticSubproblem) -> Self {
        let bounds = (0..q.nonneg.len()).filter(|&i| q.nonneg[i]).collect();
        Self { q, bounds }
    }

    fn len(&self) -> usize {
        self.q.quadratic.len() + self.q.linear.len() + self.bounds.len()
    }

    fn values(&self, x: &[f64]) -> Vec<f64> {
        let mut f: Vec<f64> = self.q.quadratic.iter().map(|r| r.value(x)).collect();
        f.extend(self.q.linear.iter().map(|l| l.value(x)));
        f.extend(self.bounds.iter().map(|&i| -x[i]));
        f
    }

    /// Gradients of every row and the summed `Σ λ_i ∇²f_i`.
    fn derivs(&self, x: &[f64], lambda: &[f64]) -> (Vec<DVector<f64>>, DMatrix<f64>) {
        let n = x.len();
        let mut grads = Vec::with_capacity(self.len());
        let mut h = DMatrix::zeros(n, n);
        let mut hj = DMatrix::zeros(n, n);
        for (j, r) in self.q.quadratic.iter().enumerate() {
            let mut g = DVector::zeros(n);
            hj.fill(0.0);
            r.add_derivs(x, &mut g, &mut hj);
            h += &hj * lambda[j];
            grads.push(g);
        }
        for l in &self.q.linear {
            grads.push(DVector::from_column_slice(&l.a));
        }
        for &i in &self.bounds {
            let mut g = DVector::zeros(n);
            g[i] = -1.0;
            grads.push(g);
        }
        (grads, h)
    }

    /// Largest `s` keeping every row strictly negative along `x + s d`.
    fn max_primal_step(&self, x: &[f64], d: &[f64]) -> f64 {
        let mut s_max = f64::INFINITY;
        let mut take = |f0: f64, a: f64, b: f64| {
            // f0 + a s + ½ b s² = 0, f0 < 0
            let root = if b > 0.0 {
                let disc = a * a - 2.0 * b * f0;
                (-a + disc.sqrt()) / b
            } else if a > 0.0 {
                -f0 / a
            } else {
                f64::INFINITY
            };
            s_max = s_max.min(root);
        };
        for r in &self.q.quadratic {
            let (a, b) = r.ray(x, d);
            take(r.value(x), a, b);
        }
        for l in &self.q.linear {
            take(l.value(x), dot(&l.a, d), 0.0);
        }
        for &i in &self.bounds {
            take(-x[i], -d[i], 0.0);
        }
        s_max
    }
}

/// Start point for a subproblem: time and energy coordinates moved a fraction
/// `theta` of the way from `x_k` toward `anchor` (strictly inside the linear rows
/// and bounds), then each free coordinate lowered to leave a clear margin on the
/// rows it bounds.
pub fn interior_start(q: &QuadraticSubproblem, x_k: &[f64], anchor: &[f64], theta: f64) -> Vec<f64> {
    let n = q.n_vars();
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            if q.nonneg[i] {
                (1.0 - theta) * x_k[i] + theta * anchor[i]
            } else {
                x_k[i]
            }
        })
        .collect();
    for i in (0..n).filter(|&i| !q.nonneg[i]) {
        let mut ub = f64::INFINITY;
        for r in &q.quadratic {
            let c = r.linear[i];
            if c > 0.0 && r.factors.iter().all(|f| f.u[i] == 0.0) {
                ub = ub.min(x[i] - r.value(&x) / c);
            }
        }
        for l in &q.linear {
            let c = l.a[i];
            if c > 0.0 {
                ub = ub.min(x[i] - l.value(&x) / c);
            }
        }
        if ub.is_finite() {
            x[i] = ub - 1.0;
        }
    }
    x
}

/// Largest pull in `theta, theta/10, …` whose start keeps every free coordinate
/// within one unit (beyond the unit margin) of its value at `x_k`. Near a
/// degenerate expansion point the model curvature is huge and a full pull would
/// start the subproblem far up the model.
fn recentred_start(q: &QuadraticSubproblem, x_k: &[f64], anchor: &[f64], theta: f64) -> Vec<f64> {
    let mut th = theta;
    loop {
        let x = interior_start(q, x_k, anchor, th);
        let close = (0..x.len()).all(|i| q.nonneg[i] || x[i] >= x_k[i] - 2.0);
        if close || th < 1e-12 {
            return x;
        }
        th /= 10.0;
    }
}

/// Primal-dual path-following interior-point method for a quadratic subproblem,
/// started from a strictly feasible `x_start` with `λ_i = 1/(-f_i(x_start))`.
///
/// The primal step is cut back from the largest interior step (closed form for
/// every row) until the barrier merit `f_0 - (1/t) Σ ln(-f_i)` shows Armijo
/// decrease; the dual step is the largest positivity-preserving one, with each
/// multiplier kept within a factor `dual_clip` of its central-path value.
pub fn solve_subproblem(q: &QuadraticSubproblem, x_start: &[f64], opts: &IpmOptions) -> Result<IpmSolution> {
    let n = q.n_vars();
    if x_start.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x_start.len() });
    }
    if !q.is_strictly_feasible(x_start) {
        return Err(Error::SubproblemFailed("start is not strictly feasible".into()));
    }
    let rows = Rows::new(q);
    let m = rows.len();
    let mut x = x_start.to_vec();
    let mut f = rows.values(&x);
    let mut lambda: Vec<f64> = f.iter().map(|v| 1.0 / -v).collect();

    let merit = |x: &[f64], t: f64| -> f64 {
        let f = rows.values(x);
        if f.iter().any(|v| !(*v < 0.0)) {
            return f64::INFINITY;
        }
        q.objective.value(x) - f.iter().map(|v| (-v).ln()).sum::<f64>() / t
    };

    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut t = 0.0f64;
    for iter in 0..opts.max_iters {
        let gap: f64 = -f.iter().zip(&lambda).map(|(a, b)| a * b).sum::<f64>();
        t = if m == 0 { 1.0 } else { t.max(m as f64 / (opts.sigma * gap.max(f64::MIN_POSITIVE))) };

        let (grads, mut h) = rows.derivs(&x, &lambda);
        let mut h0 = DMatrix::zeros(n, n);
        let mut g0 = DVector::zeros(n);
        q.objective.add_derivs(&x, &mut g0, &mut h0);

        let mut scale = g0.amax().max(1.0);
        let mut r_dual = g0.clone();
        for (gi, li) in grads.iter().zip(&lambda) {
            r_dual.axpy(*li, gi, 1.0);
            scale = scale.max(li * gi.amax());
        }
        let dual_residual = r_dual.amax() / scale;
        let obj_scale = q.objective.value(&x).abs().max(1.0);
        if dual_residual <= opts.tol && gap <= opts.tol * obj_scale {
            return Ok(IpmSolution {
                x,
                lambda,
                iterations: iter,
                dual_residual,
                gap,
            });
        }
        let progress = dual_residual.max(gap / obj_scale);
        if progress < best * (1.0 - 1e-3) {
            best = progress;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.stall_iters {
                return Err(Error::SubproblemFailed(format!(
                    "residual stalled at {progress:.3e} after {iter} iterations"
                )));
            }
        }

        // reduced Newton system, assembled from rank-1 outer products
        h += h0;
        let mut rhs = -g0;
        for i in 0..m {
            let s = -f[i];
            h.ger(lambda[i] / s, &grads[i], &grads[i], 1.0);
            rhs.axpy(-1.0 / (t * s), &grads[i], 1.0);
        }
        let (dx, _) = crate::barrier::solve_spd(&h, &rhs)
            .ok_or_else(|| Error::SubproblemFailed("Newton system cannot be factored".into()))?;
        let dlambda: Vec<f64> = (0..m)
            .map(|i| (-lambda[i] * f[i] - 1.0 / t - lambda[i] * grads[i].dot(&dx)) / f[i])
            .collect();

        // primal step: closed-form interior bound, then Armijo on the barrier merit
        let mut sp = (opts.fraction * rows.max_primal_step(&x, dx.as_slice())).min(1.0);
        let phi0 = merit(&x, t);
        let slope = -rhs.dot(&dx);
        let mut xn: Vec<f64>;
        loop {
            xn = x.iter().zip(dx.iter()).map(|(a, b)| a + sp * b).collect();
            let phi = merit(&xn, t);
            if phi <= phi0 + 1e-4 * sp * slope || sp * slope.abs() <= 1e-13 * (1.0 + phi0.abs()) && phi.is_finite() {
                break;
            }
            sp *= 0.5;
            if sp < 1e-20 {
                return Err(Error::SubproblemFailed("primal line search failed".into()));
            }
        }
        let fnew = rows.values(&xn);

        // dual step
        let mut sd = 1.0f64;
        for i in 0..m {
            if dlambda[i] < 0.0 {
                sd = sd.min(-opts.fraction * lambda[i] / dlambda[i]);
            }
        }
        for i in 0..m {
            let central = 1.0 / (t * -fnew[i]);
            let l = lambda[i] + sd * dlambda[i];
            lambda[i] = l.clamp(central / opts.dual_clip, central * opts.dual_clip);
        }
        x = xn;
        f = fnew;
    }
    Err(Error::SubproblemFailed(format!(
        "no convergence in {} iterations",
        opts.max_iters
    )))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    /// Outer loop stops once `‖x_{k+1} - x_k‖₂ <= eps`.
    pub eps: f64,
    pub max_outer: usize,
    /// Slack left on auxiliary rows when the subproblem solution is projected.
    pub aux_margin: f64,
    /// Pull of the subproblem start toward the initial interior point.
    pub recenter: f64,
    /// Slot length below which model curvature is floored.
    pub curvature_floor: f64,
    /// Extra re-expansions after convergence while the stationarity residual
    /// exceeds `polish_target`.
    pub polish_rounds: usize,
    pub polish_target: f64,
    pub ipm: IpmOptions,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            max_outer: 50,
            aux_margin: 1e-12,
            recenter: 0.01,
            curvature_floor: 1e-5,
            polish_rounds: 10,
            polish_target: 1e-8,
            ipm: IpmOptions::default(),
        }
    }
}

/// Per-round record of the outer loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterRecord {
    pub objective_before: f64,
    pub objective_after: f64,
    pub step_norm: f64,
    /// `‖x*_sub - x_k‖₂`, the distance to the subproblem solution.
    pub dif: f64,
    /// The projected subproblem solution raised the objective and a shorter step
    /// along the segment was taken.
    pub backtracked: bool,
    pub ipm_iterations: usize,
    /// The interior-point solver failed and the barrier method solved the round.
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct IterativeRun {
    pub result: SolveResult,
    pub history: Vec<OuterRecord>,
}

/// Solves a subproblem with the interior-point method, falling back to the
/// barrier method when it stalls. Multipliers of the fallback are read off the
/// central path as `1 / (τ (-f_i))`.
fn solve_robust(q: &QuadraticSubproblem, start: &[f64], opts: &IpmOptions) -> Result<(IpmSolution, bool)> {
    match solve_subproblem(q, start, opts) {
        Ok(sol) => Ok((sol, false)),
        Err(Error::SubproblemFailed(_)) => {
            let bopts = BarrierOptions { tau_max: 1e10, ..BarrierOptions::default() };
            let run = barrier_minimize(q, start, &bopts)?;
            if run.status != SolveStatus::Converged {
                return Err(Error::SubproblemFailed(format!("barrier fallback ended with {}", run.status.as_str())));
            }
            let f = Rows::new(q).values(&run.x);
            let lambda = f.iter().map(|v| 1.0 / (run.tau * -v)).collect();
            Ok((
                IpmSolution {
                    x: run.x,
                    lambda,
                    iterations: run.inner_iters,
                    dual_residual: run.kkt_residual,
                    gap: f.len() as f64 / run.tau,
                },
                true,
            ))
        }
        Err(e) => Err(e),
    }
}

/// Solves a model program by repeated quadratization.
pub fn solve_iterative(p: &ConvexProgram, opts: &QuadOptions) -> Result<SolveResult> {
    solve_iterative_traced(p, opts).map(|r| r.result)
}

/// Objective increases below this relative size are rounding noise near the
/// optimum and do not trigger backtracking.
const MONOTONE_RTOL: f64 = 1e-12;

/// Objective increase tolerated by a polishing step, well inside the 1e-8
/// monotonicity budget.
const POLISH_RTOL: f64 = 1e-10;

pub fn solve_iterative_traced(p: &ConvexProgram, opts: &QuadOptions) -> Result<IterativeRun> {
    let start = Instant::now();
    p.validate()?;
    let pre = p.presolve();
    let rp = &pre.program;
    let anchor = match initial_point(rp) {
        Ok(ip) if ip.degenerate.is_empty() => ip.allocation.x,
        _ => {
            return Ok(IterativeRun {
                result: SolveResult::infeasible(p.n_vars(), start.elapsed()),
                history: Vec::new(),
            })
        }
    };
    let mut x = anchor.clone();
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut inner = 0;
    let mut last_lambda = Vec::new();
    let mut outer = 0;

    while outer < opts.max_outer {
        outer += 1;
        let q = quadratize_floored(rp, &x, opts.curvature_floor)?;
        let start = recentred_start(&q, &x, &anchor, opts.recenter);
        let (sol, fallback) = solve_robust(&q, &start, &opts.ipm)?;
        inner += sol.iterations;
        let mut cand = sol.x.clone();
        rp.tighten_aux(&mut cand, opts.aux_margin);

        let f_before = rp.objective(&x);
        let mut f_after = rp.objective(&cand);
        let mut backtracked = false;
        if f_after > f_before + MONOTONE_RTOL * f_before.abs() {
            // move along the segment to the best projected point
            let along = |s: f64| {
                let mut z: Vec<f64> = x.iter().zip(&cand).map(|(a, b)| a + s * (b - a)).collect();
                rp.tighten_aux(&mut z, opts.aux_margin);
                z
            };
            let s = crate::barrier::golden_section_min(|s| rp.objective(&along(s)), (0.0, 1.0), 1e-10);
            let z = along(s);
            let fz = rp.objective(&z);
            if fz <= f_before + MONOTONE_RTOL * f_before.abs() {
                cand = z;
                f_after = fz;
            } else {
                cand = x.clone();
                f_after = f_before;
            }
            backtracked = true;
        }
        let step_norm = x.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let dif = x.iter().zip(&sol.x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        history.push(OuterRecord {
            objective_before: f_before,
            objective_after: f_after,
            step_norm,
            dif,
            backtracked,
            ipm_iterations: sol.iterations,
            fallback,
        });
        x = cand;
        last_lambda = sol.lambda;
        if dif <= opts.eps {
            status = SolveStatus::Converged;
            break;
        }
    }

    let mut kkt = original_stationarity(rp, &x, &last_lambda);
    if status == SolveStatus::Converged {
        // Certify with multipliers of a model expanded at the reported point,
        // taking a few extra steps toward the fixed point if the certificate is loose.
        for round in 0..=opts.polish_rounds {
            let q = quadratize_floored(rp, &x, opts.curvature_floor)?;
            let (sol, _) = solve_robust(&q, &x, &opts.ipm)?;
            inner += sol.iterations;
            let r = original_stationarity(rp, &x, &sol.lambda);
            if r < kkt {
                kkt = r;
            }
            if kkt <= opts.polish_target || round == opts.polish_rounds {
                break;
            }
            let mut cand = sol.x;
            rp.tighten_aux(&mut cand, opts.aux_margin);
            let fx = rp.objective(&x);
            if rp.objective(&cand) > fx + POLISH_RTOL * fx.abs() {
                break;
            }
            x = cand;
            kkt = f64::INFINITY;
        }
    }
    let full = pre.expand(&x);
    Ok(IterativeRun {
        result: SolveResult {
            objective_bits: -p.objective(&full) / LN_2,
            max_constraint_violation: p.max_violation(&full),
            x_star: Allocation::new(full),
            outer_iters: outer,
            inner_iters: inner,
            kkt_residual: kkt,
            status,
            regularized_solves: 0,
            elapsed: start.elapsed(),
        },
        history,
    })
}

/// Stationarity of the original Lagrangian at `x` with subproblem multipliers,
/// relative to its largest term.
fn original_stationarity(p: &ConvexProgram, x: &[f64], lambda: &[f64]) -> f64 {
    let n = p.n_vars();
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    p.add_objective_derivs(x, &mut g, &mut h);
    let mut scale = g.amax().max(1.0);
    let mut row = 0;
    let mut gj = DVector::zeros(n);
    for j in 0..p.epigraph.len() {
        gj.fill(0.0);
        p.add_curved_derivs(j, x, &mut gj, &mut h);
        let l = lambda.get(row).copied().unwrap_or(0.0);
        g.axpy(l, &gj, 1.0);
        scale = scale.max(l * gj.amax());
        row += 1;
    }
    for lin in &p.linear {
        let l = lambda.get(row).copied().unwrap_or(0.0);
        for (gi, ai) in g.iter_mut().zip(&lin.a) {
            *gi += l * ai;
        }
        scale = scale.max(l * lin.a.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        row += 1;
    }
    for i in 0..n {
        if p.nonneg[i] {
            let l = lambda.get(row).copied().unwrap_or(0.0);
            g[i] -= l;
            scale = scale.max(l);
            row += 1;
        }
    }
    g.amax() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::{perspective_gradient, perspective_value, VarKind};

    #[test]
    fn model_matches_at_expansion_point() {
        let m = QuadraticModel::new(1e4, 0.5, 0.05).unwrap();
        assert_eq!(m.value(0.5, 0.05), perspective_value(1e4, 0.5, 0.05).unwrap());
        let (g, _) = perspective_gradient(1e4, 0.5, 0.05).unwrap();
        assert_eq!(m.gradient(0.5, 0.05), g);
        assert!(QuadraticModel::new(1e4, 0.0, 0.05).is_err());
    }

    #[test]
    fn model_is_linear_across_curvature_direction() {
        let m = QuadraticModel::new(10.0, 0.4, 0.2).unwrap();
        // δ ⟂ v
        let d = [m.v[1], -m.v[0]];
        for s in [0.01, 0.1, 1.0] {
            let lin = m.base_value + s * (m.g[0] * d[0] + m.g[1] * d[1]);
            assert!((m.value(0.4 + s * d[0], 0.2 + s * d[1]) - lin).abs() < 1e-12);
        }
    }

    fn one_dim(nonneg: bool) -> QuadraticSubproblem {
        QuadraticSubproblem {
            objective: QuadForm::zero(1),
            quadratic: vec![],
            linear: vec![],
            nonneg: vec![nonneg],
        }
    }

    #[test]
    fn unconstrained_quadratic() {
        // ½ (x - 2)²
        let mut q = one_dim(false);
        q.objective.factors.push(RankOne { u: vec![1.0], r: 2.0 });
        let s = solve_subproblem(&q, &[0.3], &IpmOptions::default()).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn active_linear_constraint() {
        // min x² s.t. x >= 1
        let mut q = one_dim(false);
        q.objective.factors.push(RankOne { u: vec![2f64.sqrt()], r: 0.0 });
        q.linear.push(LinearConstraint { a: vec![-1.0], b: -1.0 });
        let s = solve_subproblem(&q, &[3.0], &IpmOptions::default()).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-7, "{}", s.x[0]);
        assert!((s.lambda[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_row_step_is_closed_form() {
        let mut q = one_dim(false);
        // ½ x² - 2 <= 0 → |x| <= 2
        let mut r = QuadForm::zero(1);
        r.constant = -2.0;
        r.factors.push(RankOne { u: vec![1.0], r: 0.0 });
        q.quadratic.push(r);
        let rows = Rows::new(&q);
        assert!((rows.max_primal_step(&[0.5], &[1.0]) - 1.5).abs() < 1e-14);
        assert!((rows.max_primal_step(&[0.5], &[-1.0]) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn quadratic_program_is_fixed_point() {
        // program without perspective terms: one round, zero step on the second
        let mut p = ConvexProgram::empty(vec![VarKind::Time, VarKind::Time]);
        p.objective_linear = vec![-1.0, -2.0];
        p.linear.push(LinearConstraint { a: vec![1.0, 1.0], b: 1.0 });
        let r = solve_iterative_traced(&p, &QuadOptions::default()).unwrap();
        assert!((r.result.objective_bits * LN_2 - 2.0).abs() < 1e-7);
        assert!(r.result.converged());
        assert!(r.history.len() <= 2);
    }
}
