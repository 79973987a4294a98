//! Python bindings: single solves, power-splitting screening, strategy selection
//! and parameter sweeps returning plain dicts and CSV text.

use std::collections::HashMap;

use ehcoop_core::experiments::{run_sweep, set_network_field, write_csv, SolverChoice, SweepSpec};
use ehcoop_core::model::{derive_channels, Case, NetworkConfig, Objective, Scenario, ScenarioSpec};
use ehcoop_core::strategy::{screen_rho as core_screen_rho, select_strategy, solve_scheme, solve_spec, SolverKind};
use ehcoop_core::{barrier::SolveResult, model::throughputs_from_allocation};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: ehcoop_core::Error) -> PyErr {
    use ehcoop_core::Error as E;
    match e {
        E::InvalidConfig(_) | E::Parse(_) | E::RhoOutOfRange { .. } | E::RelayNotBeneficial { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = ehcoop_core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn config(overrides: Option<HashMap<String, f64>>) -> PyResult<NetworkConfig> {
    let mut cfg = NetworkConfig::default();
    for (k, v) in overrides.unwrap_or_default() {
        set_network_field(&mut cfg, &k, v).map_err(to_py)?;
    }
    Ok(cfg)
}

fn result_dict<'py>(py: Python<'py>, r: &SolveResult, b: Option<(f64, f64)>) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("objective_bits", r.objective_bits)?;
    d.set_item("x", r.x_star.x.clone())?;
    d.set_item("status", r.status.as_str())?;
    d.set_item("outer_iters", r.outer_iters)?;
    d.set_item("inner_iters", r.inner_iters)?;
    d.set_item("kkt_residual", r.kkt_residual)?;
    d.set_item("max_constraint_violation", r.max_constraint_violation)?;
    d.set_item("elapsed_s", r.elapsed.as_secs_f64())?;
    if let Some((b1, b2)) = b {
        d.set_item("b1_bits", b1)?;
        d.set_item("b2_bits", b2)?;
    }
    Ok(d)
}

/// Solves one (scenario, case, objective, rho) instance.
#[pyfunction]
#[pyo3(signature = (scenario, case, objective="sum", rho=0.0, solver="nb", config=None))]
fn solve<'py>(
    py: Python<'py>,
    scenario: &str,
    case: &str,
    objective: &str,
    rho: f64,
    solver: &str,
    config: Option<HashMap<String, f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = self::config(config)?;
    let spec = ScenarioSpec::new(parse(scenario)?, parse(case)?, parse(objective)?, rho);
    let solver: SolverKind = parse(solver)?;
    let (r, u) = py
        .detach(|| {
            let ch = derive_channels(&cfg)?;
            let r = solve_spec(&spec, &cfg, &ch, solver)?;
            let u = r
                .converged()
                .then(|| throughputs_from_allocation(&spec, &cfg, &ch, &r.x_star))
                .transpose()?;
            Ok((r, u))
        })
        .map_err(to_py)?;
    result_dict(py, &r, u.map(|u| (u.b1, u.b2)))
}

/// Screens the power-splitting ratio of S1 and returns the best ratio with the
/// full candidate table.
#[pyfunction]
#[pyo3(signature = (case, objective="sum", solver="nb", config=None))]
fn screen_rho<'py>(
    py: Python<'py>,
    case: &str,
    objective: &str,
    solver: &str,
    config: Option<HashMap<String, f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = self::config(config)?;
    let (case, objective, solver): (Case, Objective, SolverKind) = (parse(case)?, parse(objective)?, parse(solver)?);
    let s = py.detach(|| core_screen_rho(case, objective, &cfg, solver)).map_err(to_py)?;
    let d = result_dict(py, &s.result, None)?;
    d.set_item("rho_star", s.rho_star)?;
    let table: Vec<(f64, Option<f64>)> = s.table.iter().map(|c| (c.rho, c.objective_bits)).collect();
    d.set_item("table", table)?;
    Ok(d)
}

/// Solves one (scenario, case) with ratio screening for S1.
#[pyfunction]
#[pyo3(signature = (scenario, case, objective="sum", solver="nb", config=None))]
fn scheme<'py>(
    py: Python<'py>,
    scenario: &str,
    case: &str,
    objective: &str,
    solver: &str,
    config: Option<HashMap<String, f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = self::config(config)?;
    let (sc, case, objective, solver): (Scenario, Case, Objective, SolverKind) =
        (parse(scenario)?, parse(case)?, parse(objective)?, parse(solver)?);
    let (s, _) = py.detach(|| solve_scheme(sc, case, objective, &cfg, solver)).map_err(to_py)?;
    let d = result_dict(py, &s.result, Some((s.b1_bits, s.b2_bits)))?;
    d.set_item("rho_star", s.rho_star)?;
    Ok(d)
}

/// Evaluates all eight schemes and returns the best.
#[pyfunction]
#[pyo3(signature = (objective="sum", solver="nb", config=None))]
fn select<'py>(
    py: Python<'py>,
    objective: &str,
    solver: &str,
    config: Option<HashMap<String, f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = self::config(config)?;
    let (objective, solver): (Objective, SolverKind) = (parse(objective)?, parse(solver)?);
    let s = py.detach(|| select_strategy(&cfg, objective, solver)).map_err(to_py)?;
    let w = &s.winner;
    let d = result_dict(py, &w.result, Some((w.b1_bits, w.b2_bits)))?;
    d.set_item("scenario", w.scenario.to_string())?;
    d.set_item("case", w.case.to_string())?;
    d.set_item("rho_star", w.rho_star)?;
    d.set_item("notes", s.notes.clone())?;
    Ok(d)
}

/// Runs an energy (`"x1"`) or distance (`"d1"`) sweep and returns the CSV text.
#[pyfunction]
#[pyo3(signature = (param, start=None, stop=None, step=None, solver="nb", config=None))]
fn sweep(
    py: Python<'_>,
    param: &str,
    start: Option<f64>,
    stop: Option<f64>,
    step: Option<f64>,
    solver: &str,
    config: Option<HashMap<String, f64>>,
) -> PyResult<String> {
    let cfg = self::config(config)?;
    let mut spec = match param {
        "x1" => SweepSpec::energy(cfg),
        "d1" => SweepSpec::distance(cfg),
        other => return Err(PyValueError::new_err(format!("unknown sweep parameter '{other}'"))),
    };
    spec.start = start.unwrap_or(spec.start);
    spec.stop = stop.unwrap_or(spec.stop);
    spec.step = step.unwrap_or(spec.step);
    spec.solver = parse::<SolverChoice>(solver)?;
    let rows = py.detach(|| run_sweep(&spec)).map_err(to_py)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn ehcoop(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(screen_rho, m)?)?;
    m.add_function(wrap_pyfunction!(scheme, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
