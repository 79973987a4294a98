//! Power-splitting screening and selection of the best cooperation scheme for a
//! network configuration.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;

use crate::barrier::{solve_nb, BarrierOptions, SolveResult};
use crate::error::{Error, Result};
use crate::model::{
    build_problem, derive_channels, rho_max, throughputs_from_allocation, Case, ChannelState, NetworkConfig, Objective,
    Scenario, ScenarioSpec,
};
use crate::quad::{solve_iterative, QuadOptions};

/// Spacing of the power-splitting screening grid.
pub const RHO_STEP: f64 = 0.1;

/// Candidates within this relative distance of the best objective count as ties;
/// ties go to the smaller ratio.
pub const TIE_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SolverKind {
    /// Newton barrier method.
    #[default]
    Nb,
    /// Iterative quadratic approximation with an interior-point subsolver.
    Quad,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Nb => "nb",
            SolverKind::Quad => "quad",
        })
    }
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nb" => Ok(SolverKind::Nb),
            "quad" => Ok(SolverKind::Quad),
            other => Err(Error::Parse(format!("unknown solver '{other}'"))),
        }
    }
}

/// Builds and solves one instance.
pub fn solve_spec(spec: &ScenarioSpec, cfg: &NetworkConfig, ch: &ChannelState, solver: SolverKind) -> Result<SolveResult> {
    let p = build_problem(spec, cfg, ch)?;
    match solver {
        SolverKind::Nb => solve_nb(&p, &BarrierOptions::default()),
        SolverKind::Quad => solve_iterative(&p, &QuadOptions::default()),
    }
}

/// Screening grid `{0, 0.1, …} ∩ [0, ρ_max)`.
pub fn rho_grid(ch: &ChannelState) -> Result<Vec<f64>> {
    let rmax = rho_max(ch)?;
    Ok((0..)
        .map(|k| k as f64 * RHO_STEP)
        .map(|r| (r * 1e9).round() / 1e9)
        .take_while(|r| *r < rmax)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub scenario: Scenario,
    pub case: Case,
    pub rho: f64,
    /// `None` when the solve failed or did not converge.
    pub objective_bits: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Screening {
    pub rho_star: f64,
    pub result: SolveResult,
    pub table: Vec<Candidate>,
}

/// Index of the best objective, preferring earlier entries within `TIE_RTOL`.
fn argmax_with_ties(values: &[Option<f64>]) -> Option<usize> {
    let best = values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return None;
    }
    let tol = TIE_RTOL * best.abs().max(1.0);
    values.iter().position(|v| v.is_some_and(|v| v >= best - tol))
}

fn converged(spec: &ScenarioSpec, r: Result<SolveResult>) -> Option<SolveResult> {
    match r {
        Ok(r) if r.converged() => Some(r),
        Ok(r) => {
            warn!("{} rho={}: solver ended with status {}", spec.label(), spec.rho, r.status.as_str());
            None
        }
        Err(e) => {
            warn!("{} rho={}: {e}", spec.label(), spec.rho);
            None
        }
    }
}

/// Solves S1 on the screening grid and returns the best ratio.
pub fn screen_rho(case: Case, objective: Objective, cfg: &NetworkConfig, solver: SolverKind) -> Result<Screening> {
    let ch = derive_channels(cfg)?;
    let grid = rho_grid(&ch)?;
    let solved: Vec<Option<SolveResult>> = grid
        .par_iter()
        .map(|&rho| {
            let spec = ScenarioSpec::new(Scenario::S1, case, objective, rho);
            converged(&spec, solve_spec(&spec, cfg, &ch, solver))
        })
        .collect();
    let table: Vec<Candidate> = grid
        .iter()
        .zip(&solved)
        .map(|(&rho, r)| Candidate {
            scenario: Scenario::S1,
            case,
            rho,
            objective_bits: r.as_ref().map(|r| r.objective_bits),
        })
        .collect();
    let values: Vec<Option<f64>> = table.iter().map(|c| c.objective_bits).collect();
    let i = argmax_with_ties(&values)
        .ok_or_else(|| Error::Infeasible(format!("no screening candidate of S1-{case} converged")))?;
    Ok(Screening {
        rho_star: grid[i],
        result: solved[i].clone().expect("argmax is a converged candidate"),
        table,
    })
}

/// Outcome of one (scenario, case) after screening.
#[derive(Debug, Clone)]
pub struct SchemeResult {
    pub scenario: Scenario,
    pub case: Case,
    pub rho_star: f64,
    pub result: SolveResult,
    pub b1_bits: f64,
    pub b2_bits: f64,
}

/// Solves one (scenario, case), screening the ratio for S1.
pub fn solve_scheme(
    scenario: Scenario,
    case: Case,
    objective: Objective,
    cfg: &NetworkConfig,
    solver: SolverKind,
) -> Result<(SchemeResult, Vec<Candidate>)> {
    let ch = derive_channels(cfg)?;
    let (rho, result, table) = if scenario == Scenario::S1 {
        let s = screen_rho(case, objective, cfg, solver)?;
        (s.rho_star, s.result, s.table)
    } else {
        let spec = ScenarioSpec::new(scenario, case, objective, 0.0);
        let r = solve_spec(&spec, cfg, &ch, solver)?;
        let cand = Candidate {
            scenario,
            case,
            rho: 0.0,
            objective_bits: r.converged().then_some(r.objective_bits),
        };
        (0.0, r, vec![cand])
    };
    let spec = ScenarioSpec::new(scenario, case, objective, rho);
    let u = throughputs_from_allocation(&spec, cfg, &ch, &result.x_star)?;
    Ok((
        SchemeResult {
            scenario,
            case,
            rho_star: rho,
            b1_bits: u.b1,
            b2_bits: u.b2,
            result,
        },
        table,
    ))
}

#[derive(Debug, Clone)]
pub struct StrategyResult {
    pub winner: SchemeResult,
    /// Every candidate in (scenario, case, ρ) order.
    pub table: Vec<Candidate>,
    /// Schemes that could not be evaluated and why.
    pub notes: Vec<String>,
}

impl StrategyResult {
    pub fn scenario(&self) -> Scenario {
        self.winner.scenario
    }

    pub fn case(&self) -> Case {
        self.winner.case
    }
}

/// Evaluates all eight (scenario, case) pairs and returns the best one. Ties go
/// to the earlier pair in (scenario, case) order.
pub fn select_strategy(cfg: &NetworkConfig, objective: Objective, solver: SolverKind) -> Result<StrategyResult> {
    let ch = derive_channels(cfg)?;
    let relay_ok = rho_max(&ch).is_ok();
    let pairs: Vec<(Scenario, Case)> = Scenario::ALL
        .iter()
        .flat_map(|&s| Case::ALL.iter().map(move |&c| (s, c)))
        .collect();
    let mut notes = Vec::new();
    let mut table = Vec::new();
    let mut schemes = Vec::new();
    for &(s, c) in &pairs {
        if s.relays() && !relay_ok {
            notes.push(format!("{s}-{c} skipped: relay not beneficial"));
            continue;
        }
        match solve_scheme(s, c, objective, cfg, solver) {
            Ok((scheme, cands)) => {
                table.extend(cands);
                if scheme.result.converged() {
                    schemes.push(scheme);
                } else {
                    notes.push(format!("{s}-{c} failed: {}", scheme.result.status.as_str()));
                }
            }
            Err(e) => notes.push(format!("{s}-{c} failed: {e}")),
        }
    }
    let values: Vec<Option<f64>> = schemes.iter().map(|s| Some(s.result.objective_bits)).collect();
    let i = argmax_with_ties(&values).ok_or_else(|| Error::Infeasible("no scheme converged".into()))?;
    Ok(StrategyResult {
        winner: schemes.swap_remove(i),
        table,
        notes,
    })
}
