//! Independent checks for the solvers: an exhaustive grid search over the time
//! split of two-slot programs and central finite differences of the analytic
//! derivatives.

use std::f64::consts::LN_2;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::barrier::{barrier_derivs, barrier_value};
use crate::convex::{perspective_derivs_unchecked, perspective_unchecked, ConvexProgram, PerspectiveTerm, VarKind};
use crate::error::{Error, Result};

/// Resolution of the time grid. Energies and auxiliary throughputs are not
/// gridded: each is set to the largest value its rows admit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub t_step: f64,
    /// Guard on the number of grid points.
    pub max_points: f64,
}

impl GridSpec {
    pub const DEFAULT_GUARD: f64 = 1e8;

    pub fn new(t_step: f64) -> Self {
        Self {
            t_step,
            max_points: Self::DEFAULT_GUARD,
        }
    }

    fn divisions(&self) -> Result<usize> {
        if !(self.t_step > 0.0 && self.t_step <= 1.0) {
            return Err(Error::InvalidConfig(format!("grid step must lie in (0, 1], got {}", self.t_step)));
        }
        let n = (1.0 / self.t_step + 1e-9).floor();
        let points = (n + 1.0) * (n + 1.0);
        if points > self.max_points {
            return Err(Error::GridTooLarge {
                points,
                limit: self.max_points,
            });
        }
        Ok(n as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best_x: Vec<f64>,
    /// Minimized program objective (nats).
    pub best_objective: f64,
    pub best_objective_bits: f64,
    pub points: usize,
}

/// Lowers `x[i]` by ulps until none of `rows` is violated. Guards the exact
/// bound against rounding.
fn settle(x: &mut [f64], i: usize, violated: impl Fn(&[f64]) -> bool) {
    for _ in 0..64 {
        if !violated(x) {
            return;
        }
        x[i] = x[i].next_down();
    }
}

/// Fills energies in index order, then auxiliary throughputs, at their upper
/// bounds for the given time split.
fn fill_at_bounds(p: &ConvexProgram, x: &mut [f64]) {
    for i in 0..p.n_vars() {
        if p.kinds[i] == VarKind::Energy {
            x[i] = p.linear_upper_bound(i, x).max(0.0);
            settle(x, i, |z| p.linear.iter().any(|l| l.a[i] > 0.0 && l.value(z) > 0.0));
        }
    }
    for i in 0..p.n_vars() {
        if p.kinds[i] == VarKind::Throughput {
            x[i] = p.aux_upper_bound(i, x);
            settle(x, i, |z| p.max_violation(z) > 0.0);
        }
    }
}

/// Exhaustive scan over `(t1, t2)` with `t1 + t2 <= 1` for two-slot programs.
///
/// Every energy is set to its budget maximum, which is optimal because each
/// appears in one increasing rate term and raising an earlier energy only loosens
/// later budgets. Programs with relaying couple the energies across rows and are
/// rejected.
pub fn brute_force_grid(p: &ConvexProgram, grid: &GridSpec) -> Result<GridResult> {
    p.validate()?;
    let time: Vec<usize> = (0..p.n_vars()).filter(|&i| p.kinds[i] == VarKind::Time).collect();
    let energy = p.kinds.iter().filter(|k| **k == VarKind::Energy).count();
    if time.len() != 2 || energy != 2 {
        return Err(Error::OracleUnsupported(format!(
            "grid oracle needs two time and two energy coordinates, got {} and {energy}",
            time.len()
        )));
    }
    if p.epigraph.iter().any(|e| e.terms.len() > 1) {
        return Err(Error::OracleUnsupported("coupled relay rows".into()));
    }
    let n = grid.divisions()?;
    let step = grid.t_step;
    let (ta, tb) = (time[0], time[1]);

    let best = (0..=n)
        .into_par_iter()
        .map(|i| {
            let mut x = vec![0.0; p.n_vars()];
            let mut best: Option<(f64, Vec<f64>)> = None;
            for j in 0..=(n - i) {
                x.iter_mut().for_each(|v| *v = 0.0);
                x[ta] = i as f64 * step;
                x[tb] = (j as f64 * step).min(1.0 - x[ta]);
                fill_at_bounds(p, &mut x);
                if p.max_violation(&x) > 0.0 {
                    continue;
                }
                let f = p.objective(&x);
                if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                    best = Some((f, x.clone()));
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        // first strict minimum in scan order, independent of scheduling
        .fold(None::<(f64, Vec<f64>)>, |acc, cur| match acc {
            Some(a) if a.0 <= cur.0 => Some(a),
            _ => Some(cur),
        })
        .ok_or_else(|| Error::Infeasible("no feasible grid point".into()))?;

    Ok(GridResult {
        best_objective_bits: -best.0 / LN_2,
        best_objective: best.0,
        best_x: best.1,
        points: (n + 1) * (n + 2) / 2,
    })
}

/// Hessian of `-t ln(1 + γy/t)` written out entry by entry:
/// `γ² / (t + γy)² · [[y²/t, -y], [-y, t]]`.
pub fn perspective_hessian(gamma: f64, t: f64, y: f64) -> [[f64; 2]; 2] {
    let s = t + gamma * y;
    let c = gamma * gamma / (s * s);
    [[c * y * y / t, -c * y], [-c * y, c * t]]
}

/// Relative errors of analytic derivatives against central differences.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FdReport {
    pub barrier_gradient: f64,
    pub barrier_hessian: f64,
    pub perspective_gradient: f64,
    pub perspective_hessian: f64,
}

impl FdReport {
    pub fn max(&self) -> f64 {
        self.barrier_gradient
            .max(self.barrier_hessian)
            .max(self.perspective_gradient)
            .max(self.perspective_hessian)
    }
}

fn rel_err(fd: &[f64], an: &[f64]) -> f64 {
    let diff = fd.iter().zip(an).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = an.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    diff / scale.max(f64::MIN_POSITIVE)
}

/// Gradient and Hessian errors of one perspective term at `(t, y)`: the gradient
/// against differences of the value, the rank-1 Hessian against differences of
/// the gradient.
pub fn perspective_fd_errors(gamma: f64, t: f64, y: f64, step: f64) -> (f64, f64) {
    let f = |t: f64, y: f64| perspective_unchecked(gamma, t, y);
    let fd_g = [
        (f(t + step, y) - f(t - step, y)) / (2.0 * step),
        (f(t, y + step) - f(t, y - step)) / (2.0 * step),
    ];
    let (g, v) = perspective_derivs_unchecked(gamma, t, y);
    let grad = |t: f64, y: f64| perspective_derivs_unchecked(gamma, t, y).0;
    let (gtp, gtm) = (grad(t + step, y), grad(t - step, y));
    let (gyp, gym) = (grad(t, y + step), grad(t, y - step));
    let fd_h = [
        (gtp[0] - gtm[0]) / (2.0 * step),
        (gtp[1] - gtm[1]) / (2.0 * step),
        (gyp[0] - gym[0]) / (2.0 * step),
        (gyp[1] - gym[1]) / (2.0 * step),
    ];
    let h = [v[0] * v[0], v[0] * v[1], v[1] * v[0], v[1] * v[1]];
    (rel_err(&fd_g, &g), rel_err(&fd_h, &h))
}

/// Compares the analytic gradient and Hessian of the barrier function
/// `τ f + φ` and of every perspective term with central differences of width
/// `step` at a strictly interior `x`.
pub fn finite_diff_check(p: &ConvexProgram, tau: f64, x: &[f64], step: f64) -> Result<FdReport> {
    let n = p.n_vars();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if !p.is_strictly_feasible(x) {
        return Err(Error::Domain("finite differences need a strictly interior point".into()));
    }
    let (g, h) = barrier_derivs(p, tau, x);
    let mut fd_g = DVector::zeros(n);
    let mut fd_h = Vec::with_capacity(n * n);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + step;
        xm[i] = x[i] - step;
        fd_g[i] = (barrier_value(p, tau, &xp) - barrier_value(p, tau, &xm)) / (2.0 * step);
        let (gp, _) = barrier_derivs(p, tau, &xp);
        let (gm, _) = barrier_derivs(p, tau, &xm);
        fd_h.extend((0..n).map(|j| (gp[j] - gm[j]) / (2.0 * step)));
        xp[i] = x[i];
        xm[i] = x[i];
    }
    let an_h: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| h[(i, j)]).collect();

    let mut report = FdReport {
        barrier_gradient: rel_err(fd_g.as_slice(), g.as_slice()),
        barrier_hessian: rel_err(&fd_h, &an_h),
        ..FdReport::default()
    };
    let terms: Vec<&PerspectiveTerm> = p
        .objective_terms
        .iter()
        .chain(p.epigraph.iter().flat_map(|e| &e.terms))
        .collect();
    for term in terms {
        let (t, y) = (x[term.t_index], x[term.y_index]);
        if t > step && y > step {
            let (eg, eh) = perspective_fd_errors(term.gamma, t, y, step);
            report.perspective_gradient = report.perspective_gradient.max(eg);
            report.perspective_hessian = report.perspective_hessian.max(eh);
        }
    }
    Ok(report)
}
