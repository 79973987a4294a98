//! Canonical convex programs built from logarithmic perspective terms.
//!
//! Every problem in this crate has the shape
//!
//! ```text
//! minimize    c·x + Σ w_k · l_{γ_k}(t, y)
//! subject to  x[aux] + Σ w_j · l_{γ_j}(t, y) <= 0      (epigraph rows)
//!             a·x <= b                                  (linear rows)
//!             x_i >= 0 for time and energy coordinates
//! ```
//!
//! with `l_γ(t, y) = -t ln(1 + γ y / t)`, the negated logarithmic perspective.
//! All values are in nats; callers convert to bits at the reporting edge.

use crate::error::{Error, Result};

/// `-t ln(1 + γy/t)` in nats. Zero on the `t = 0` edge for every `y >= 0`.
pub fn perspective_value(gamma: f64, t: f64, y: f64) -> Result<f64> {
    if !(t >= 0.0) || !(y >= 0.0) {
        return Err(Error::Domain(format!(
            "perspective needs t >= 0 and y >= 0, got t={t}, y={y}"
        )));
    }
    Ok(perspective_unchecked(gamma, t, y))
}

#[inline]
pub(crate) fn perspective_unchecked(gamma: f64, t: f64, y: f64) -> f64 {
    if t <= 0.0 || y == 0.0 {
        0.0
    } else {
        -t * (gamma * y / t).ln_1p()
    }
}

/// Gradient `g` and rank-1 Hessian factor `v` (so that `∇² l = v vᵀ`) of the
/// perspective at `(t, y)`.
pub fn perspective_gradient(gamma: f64, t: f64, y: f64) -> Result<([f64; 2], [f64; 2])> {
    if !(t > 0.0) || !(y >= 0.0) {
        return Err(Error::Domain(format!(
            "perspective gradient needs t > 0 and y >= 0, got t={t}, y={y}"
        )));
    }
    Ok(perspective_derivs_unchecked(gamma, t, y))
}

#[inline]
pub(crate) fn perspective_derivs_unchecked(gamma: f64, t: f64, y: f64) -> ([f64; 2], [f64; 2]) {
    let gy = gamma * y;
    let s = t + gy;
    let st = t.sqrt();
    let g = [-(gy / t).ln_1p() + gy / s, -gamma * t / s];
    let v = [gy / (st * s), -gamma * st / s];
    (g, v)
}

/// One weighted perspective term `coeff · l_γ(x[t_index], x[y_index])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerspectiveTerm {
    pub gamma: f64,
    pub t_index: usize,
    pub y_index: usize,
    pub coeff: f64,
}

impl PerspectiveTerm {
    pub fn new(gamma: f64, t_index: usize, y_index: usize, coeff: f64) -> Self {
        Self {
            gamma,
            t_index,
            y_index,
            coeff,
        }
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        self.coeff * perspective_unchecked(self.gamma, x[self.t_index], x[self.y_index])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Time,
    Energy,
    /// Auxiliary throughput (nats); unbounded below, no barrier term.
    Throughput,
}

/// `a·x <= b`
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub a: Vec<f64>,
    pub b: f64,
}

impl LinearConstraint {
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.a, x) - self.b
    }
}

/// `x[aux_index] + Σ terms <= 0`
#[derive(Debug, Clone, PartialEq)]
pub struct EpigraphConstraint {
    pub aux_index: usize,
    pub terms: Vec<PerspectiveTerm>,
}

impl EpigraphConstraint {
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        x[self.aux_index] + self.terms.iter().map(|t| t.value(x)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProgram {
    pub kinds: Vec<VarKind>,
    pub objective_linear: Vec<f64>,
    pub objective_terms: Vec<PerspectiveTerm>,
    pub epigraph: Vec<EpigraphConstraint>,
    pub linear: Vec<LinearConstraint>,
    /// Coordinates carrying `x_i >= 0` (and a `log x_i` barrier term).
    pub nonneg: Vec<bool>,
}

impl ConvexProgram {
    pub fn empty(kinds: Vec<VarKind>) -> Self {
        let n = kinds.len();
        let nonneg = kinds.iter().map(|k| *k != VarKind::Throughput).collect();
        Self {
            kinds,
            objective_linear: vec![0.0; n],
            objective_terms: Vec::new(),
            epigraph: Vec::new(),
            linear: Vec::new(),
            nonneg,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.kinds.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.epigraph.len() + self.linear.len()
    }

    /// Checks index ranges and the sign conditions that keep the program convex.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        let check_term = |t: &PerspectiveTerm, in_constraint: bool| -> Result<()> {
            if t.t_index >= n || t.y_index >= n {
                return Err(Error::InvalidConfig("perspective index out of range".into()));
            }
            if !(t.gamma > 0.0) {
                return Err(Error::InvalidConfig(format!("gamma must be > 0, got {}", t.gamma)));
            }
            if in_constraint && !(t.coeff > 0.0) || !in_constraint && t.coeff < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "perspective coefficient {} breaks convexity",
                    t.coeff
                )));
            }
            Ok(())
        };
        if self.objective_linear.len() != n || self.nonneg.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.objective_linear.len().min(self.nonneg.len()),
            });
        }
        for t in &self.objective_terms {
            check_term(t, false)?;
        }
        for e in &self.epigraph {
            if e.aux_index >= n {
                return Err(Error::InvalidConfig("epigraph aux index out of range".into()));
            }
            for t in &e.terms {
                check_term(t, true)?;
            }
        }
        for l in &self.linear {
            if l.a.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: l.a.len(),
                });
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.objective_linear, x) + self.objective_terms.iter().map(|t| t.value(x)).sum::<f64>()
    }

    /// Epigraph rows first, then linear rows.
    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.epigraph
            .iter()
            .map(|e| e.value(x))
            .chain(self.linear.iter().map(|l| l.value(x)))
            .collect()
    }

    /// Largest of all `c_j(x)` and `-x_i` over bounded coordinates.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let c = self.constraint_values(x).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let b = x
            .iter()
            .zip(&self.nonneg)
            .filter(|(_, nn)| **nn)
            .map(|(v, _)| -v)
            .fold(f64::NEG_INFINITY, f64::max);
        c.max(b)
    }

    pub fn is_strictly_feasible(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.nonneg).all(|(v, nn)| !nn || *v > 0.0)
            && self.constraint_values(x).iter().all(|c| *c < 0.0)
    }

    /// Largest value of `x[var]` admitted by the linear rows where it has a positive
    /// coefficient, holding every other coordinate at its current value.
    pub fn linear_upper_bound(&self, var: usize, x: &[f64]) -> f64 {
        self.linear
            .iter()
            .filter(|l| l.a[var] > 0.0)
            .map(|l| (l.b - (dot(&l.a, x) - l.a[var] * x[var])) / l.a[var])
            .fold(f64::INFINITY, f64::min)
    }

    /// Tightest upper bound on an auxiliary throughput coordinate from both the
    /// epigraph rows and the linear rows.
    pub fn aux_upper_bound(&self, var: usize, x: &[f64]) -> f64 {
        let epi = self
            .epigraph
            .iter()
            .filter(|e| e.aux_index == var)
            .map(|e| -e.terms.iter().map(|t| t.value(x)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        epi.min(self.linear_upper_bound(var, x))
    }

    /// Lowers auxiliary coordinates (in index order) until every row they bound
    /// holds with at least `margin` slack. Time and energy coordinates are untouched.
    pub fn project_aux(&self, x: &mut [f64], margin: f64) {
        for i in 0..self.n_vars() {
            if self.kinds[i] == VarKind::Throughput {
                let ub = self.aux_upper_bound(i, x);
                if ub.is_finite() && x[i] > ub - margin {
                    x[i] = ub - margin;
                }
            }
        }
    }

    /// Sets each auxiliary coordinate (in index order) to its tightest upper bound
    /// less `margin`, raising or lowering it as needed.
    pub fn tighten_aux(&self, x: &mut [f64], margin: f64) {
        for i in 0..self.n_vars() {
            if self.kinds[i] == VarKind::Throughput {
                let ub = self.aux_upper_bound(i, x);
                if ub.is_finite() {
                    x[i] = ub - margin;
                }
            }
        }
    }

    /// Eliminates coordinates forced to zero by a linear row with a zero budget
    /// (e.g. `y1 <= X1 (1 - t1 - t2)` with `X1 = 0`). Without this no strictly
    /// feasible point exists and barrier methods cannot start.
    pub fn presolve(&self) -> Presolved {
        let n = self.n_vars();
        let mut fixed = vec![false; n];
        loop {
            let mut changed = false;
            for l in &self.linear {
                if l.b.abs() > 1e-300 {
                    continue;
                }
                let forcing = (0..n)
                    .filter(|&j| !fixed[j])
                    .all(|j| l.a[j] == 0.0 || (self.nonneg[j] && l.a[j] > 0.0));
                if !forcing {
                    continue;
                }
                for j in 0..n {
                    if !fixed[j] && l.a[j] > 0.0 {
                        fixed[j] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let kept: Vec<usize> = (0..n).filter(|&j| !fixed[j]).collect();
        let mut map = vec![usize::MAX; n];
        for (new, &old) in kept.iter().enumerate() {
            map[old] = new;
        }
        let remap_terms = |terms: &[PerspectiveTerm]| -> Vec<PerspectiveTerm> {
            terms
                .iter()
                .filter(|t| !fixed[t.t_index] && !fixed[t.y_index])
                .map(|t| PerspectiveTerm {
                    t_index: map[t.t_index],
                    y_index: map[t.y_index],
                    ..*t
                })
                .collect()
        };
        let program = ConvexProgram {
            kinds: kept.iter().map(|&j| self.kinds[j]).collect(),
            objective_linear: kept.iter().map(|&j| self.objective_linear[j]).collect(),
            objective_terms: remap_terms(&self.objective_terms),
            epigraph: self
                .epigraph
                .iter()
                .map(|e| EpigraphConstraint {
                    aux_index: map[e.aux_index],
                    terms: remap_terms(&e.terms),
                })
                .collect(),
            linear: self
                .linear
                .iter()
                .map(|l| LinearConstraint {
                    a: kept.iter().map(|&j| l.a[j]).collect(),
                    b: l.b,
                })
                .filter(|l| l.a.iter().any(|v| *v != 0.0))
                .collect(),
            nonneg: kept.iter().map(|&j| self.nonneg[j]).collect(),
        };
        Presolved {
            program,
            kept,
            n_full: n,
        }
    }
}

/// A program with zero-budget coordinates removed.
#[derive(Debug, Clone)]
pub struct Presolved {
    pub program: ConvexProgram,
    pub kept: Vec<usize>,
    pub n_full: usize,
}

impl Presolved {
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_full];
        for (r, &j) in reduced.iter().zip(&self.kept) {
            x[j] = *r;
        }
        x
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.kept.iter().map(|&j| full[j]).collect()
    }

    pub fn is_trivial(&self) -> bool {
        self.kept.len() == self.n_full
    }
}

/// A solution point: time fractions, energies `y = P t` and auxiliary throughputs (nats).
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub x: Vec<f64>,
}

impl Allocation {
    pub fn new(x: Vec<f64>) -> Self {
        Self { x }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Objective and constraint values (epigraph rows, then linear rows).
pub fn eval_program(p: &ConvexProgram, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    if x.len() != p.n_vars() {
        return Err(Error::DimensionMismatch {
            expected: p.n_vars(),
            got: x.len(),
        });
    }
    Ok((p.objective(x), p.constraint_values(x)))
}

/// Output of [`initial_point`]. `degenerate` lists coordinates whose budget was
/// zero and that were floored to [`DEGENERATE_FLOOR`]; such a point is not
/// strictly feasible and should be fed through [`ConvexProgram::presolve`] instead.
#[derive(Debug, Clone)]
pub struct InitialPoint {
    pub allocation: Allocation,
    pub degenerate: Vec<usize>,
}

pub const DEGENERATE_FLOOR: f64 = 1e-9;

/// Strictly feasible start: every time fraction `0.8/(m+1)`, each energy at half of
/// its remaining budget (in index order), each throughput 10% below its tightest bound.
pub fn initial_point(p: &ConvexProgram) -> Result<InitialPoint> {
    p.validate()?;
    let n = p.n_vars();
    let m = p.kinds.iter().filter(|k| **k == VarKind::Time).count();
    let mut x = vec![0.0; n];
    let mut degenerate = Vec::new();

    for (i, k) in p.kinds.iter().enumerate() {
        if *k == VarKind::Time {
            x[i] = 0.8 / (m as f64 + 1.0);
        }
    }
    for i in 0..n {
        if p.kinds[i] != VarKind::Energy {
            continue;
        }
        let ub = p.linear_upper_bound(i, &x);
        if !ub.is_finite() {
            return Err(Error::NoInteriorPoint(format!("energy coordinate {i} is unbounded")));
        }
        if ub > 2.0 * DEGENERATE_FLOOR {
            x[i] = 0.5 * ub;
        } else {
            x[i] = DEGENERATE_FLOOR;
            degenerate.push(i);
        }
    }
    for i in 0..n {
        if p.kinds[i] != VarKind::Throughput {
            continue;
        }
        let ub = p.aux_upper_bound(i, &x);
        if !ub.is_finite() {
            return Err(Error::NoInteriorPoint(format!(
                "throughput coordinate {i} has no upper bound"
            )));
        }
        x[i] = ub - (0.1 * ub.abs()).max(1e-6);
    }

    if degenerate.is_empty() && !p.is_strictly_feasible(&x) {
        return Err(Error::NoInteriorPoint(format!(
            "constructed start violates a constraint (max violation {:.3e})",
            p.max_violation(&x)
        )));
    }
    Ok(InitialPoint {
        allocation: Allocation::new(x),
        degenerate,
    })
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn perspective_reference_values() {
        // -0.5 ln(1 + 1e4 * 0.05 / 0.5) = -0.5 ln 1001
        let v = perspective_value(1e4, 0.5, 0.05).unwrap();
        assert_relative_eq!(v, -0.5 * 1001f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(v, -3.4543, epsilon = 1e-4);
        assert_eq!(perspective_value(7.0, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(perspective_value(7.0, 0.0, 1.0).unwrap(), 0.0);
        assert!(perspective_value(1.0, -0.1, 0.2).is_err());
        assert!(perspective_value(1.0, 0.1, -0.2).is_err());
    }

    #[test]
    fn perspective_gradient_at_unit_point() {
        let (g, v) = perspective_gradient(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(g[0], -(2f64.ln()) + 0.5, max_relative = 1e-15);
        assert_relative_eq!(g[1], -0.5, max_relative = 1e-15);
        assert_relative_eq!(v[0], 0.5, max_relative = 1e-15);
        assert_relative_eq!(v[1], -0.5, max_relative = 1e-15);
    }

    #[test]
    fn perspective_gradient_zero_energy() {
        let gamma = 3.0;
        let t: f64 = 0.25;
        let (g, v) = perspective_gradient(gamma, t, 0.0).unwrap();
        assert_eq!(g[0], 0.0);
        assert_relative_eq!(g[1], -gamma, max_relative = 1e-15);
        assert_eq!(v[0], 0.0);
        assert_relative_eq!(v[1], -gamma * t.sqrt() / t, max_relative = 1e-15);
        assert!(perspective_gradient(gamma, 0.0, 1.0).is_err());
    }

    #[test]
    fn perspective_gradient_matches_central_differences() {
        let (gamma, t, y) = (1e4, 0.5, 0.05);
        let h = 1e-6;
        let (g, _) = perspective_gradient(gamma, t, y).unwrap();
        let f = |t: f64, y: f64| perspective_value(gamma, t, y).unwrap();
        let fd = [
            (f(t + h, y) - f(t - h, y)) / (2.0 * h),
            (f(t, y + h) - f(t, y - h)) / (2.0 * h),
        ];
        for k in 0..2 {
            assert!(((fd[k] - g[k]) / g[k]).abs() <= 1e-6, "component {k}: {} vs {}", fd[k], g[k]);
        }
    }

    #[test]
    fn zero_program_and_linear_row() {
        let p = ConvexProgram::empty(vec![VarKind::Time; 3]);
        let (f, c) = eval_program(&p, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(f, 0.0);
        assert!(c.is_empty());
        assert!(eval_program(&p, &[0.1]).is_err());

        let mut q = ConvexProgram::empty(vec![VarKind::Time; 3]);
        q.linear.push(LinearConstraint {
            a: vec![1.0, 1.0, 1.0],
            b: 1.0,
        });
        let (_, c) = eval_program(&q, &[0.2, 0.2, 0.2]).unwrap();
        assert_relative_eq!(c[0], -0.4, epsilon = 1e-15);
    }

    #[test]
    fn presolve_drops_zero_budget_energy() {
        // y1 <= 0 * (1 - t1 - t2), y2 <= 1 - t2, t1 + t2 <= 1
        let kinds = vec![VarKind::Time, VarKind::Time, VarKind::Energy, VarKind::Energy];
        let mut p = ConvexProgram::empty(kinds);
        p.objective_terms.push(PerspectiveTerm::new(10.0, 0, 2, 1.0));
        p.objective_terms.push(PerspectiveTerm::new(10.0, 1, 3, 1.0));
        p.linear.push(LinearConstraint {
            a: vec![0.0, 0.0, 1.0, 0.0],
            b: 0.0,
        });
        p.linear.push(LinearConstraint {
            a: vec![0.0, 1.0, 0.0, 1.0],
            b: 1.0,
        });
        p.linear.push(LinearConstraint {
            a: vec![1.0, 1.0, 0.0, 0.0],
            b: 1.0,
        });
        let pre = p.presolve();
        assert_eq!(pre.kept, vec![0, 1, 3]);
        assert_eq!(pre.program.objective_terms.len(), 1);
        assert_eq!(pre.program.linear.len(), 2);
        assert_eq!(pre.expand(&[0.1, 0.2, 0.3]), vec![0.1, 0.2, 0.0, 0.3]);

        let ip = initial_point(&p).unwrap();
        assert_eq!(ip.degenerate, vec![2]);
        assert_eq!(ip.allocation.x[2], DEGENERATE_FLOOR);
        let ip = initial_point(&pre.program).unwrap();
        assert!(ip.degenerate.is_empty());
        assert!(pre.program.is_strictly_feasible(&ip.allocation.x));
    }
}
