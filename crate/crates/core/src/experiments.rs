//! Parameter sweeps over energy arrival rate or near-user distance, with CSV and
//! plot-data output and a flat `key=value` configuration format.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{derive_channels, Case, Layout, NetworkConfig, Objective, Scenario, ScenarioSpec};
use crate::strategy::{solve_scheme, solve_spec, SchemeResult, SolverKind};

/// Relative objective gap above which the two solvers are reported as disagreeing.
pub const CROSS_CHECK_RTOL: f64 = 1e-4;

pub const CSV_HEADER: [&str; 13] = [
    "sweep_param",
    "scenario",
    "case",
    "objective_kind",
    "rho_star",
    "obj_bits",
    "B1_bits",
    "B2_bits",
    "t0",
    "t1",
    "t2",
    "t3",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    /// Energy arrival rate at the near user (mW).
    X1,
    /// Near-user distance, with the far user collinear (`du = d2 - d1`).
    D1,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::X1 => "x1",
            SweepParam::D1 => "d1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SolverChoice {
    #[default]
    Nb,
    Quad,
    /// Newton barrier results, cross-checked by the quadratic method.
    Both,
}

impl FromStr for SolverChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nb" => Ok(SolverChoice::Nb),
            "quad" => Ok(SolverChoice::Quad),
            "both" => Ok(SolverChoice::Both),
            other => Err(Error::Parse(format!("unknown solver '{other}'"))),
        }
    }
}

impl SolverChoice {
    fn primary(self) -> SolverKind {
        match self {
            SolverChoice::Quad => SolverKind::Quad,
            _ => SolverKind::Nb,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub base: NetworkConfig,
    pub objectives: Vec<Objective>,
    pub scenarios: Vec<Scenario>,
    pub cases: Vec<Case>,
    pub solver: SolverChoice,
}

impl SweepSpec {
    fn with_range(param: SweepParam, (start, stop, step): (f64, f64, f64), base: NetworkConfig) -> Self {
        Self {
            param,
            start,
            stop,
            step,
            base,
            objectives: vec![Objective::WeightedSum, Objective::CommonThroughput],
            scenarios: Scenario::ALL.to_vec(),
            cases: Case::ALL.to_vec(),
            solver: SolverChoice::Nb,
        }
    }

    /// `X1 ∈ [25, 300]` mW in steps of 25.
    pub fn energy(base: NetworkConfig) -> Self {
        Self::with_range(SweepParam::X1, (25.0, 300.0, 25.0), base)
    }

    /// `d1 ∈ [0.2, 1.8]` in steps of 0.2.
    pub fn distance(base: NetworkConfig) -> Self {
        Self::with_range(SweepParam::D1, (0.2, 1.8, 0.2), base)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.step > 0.0) || !(self.start <= self.stop) || !self.stop.is_finite() {
            return bad(format!("bad sweep range {}..{} step {}", self.start, self.stop, self.step));
        }
        if self.objectives.is_empty() || self.scenarios.is_empty() || self.cases.is_empty() {
            return bad("sweep needs at least one objective, scenario and case".into());
        }
        for v in self.points() {
            self.config_at(v).validate()?;
        }
        Ok(())
    }

    /// Sweep values, rounded to nine decimals so that `0.2 · 3` prints as `0.6`.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| ((self.start + k as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }

    pub fn config_at(&self, v: f64) -> NetworkConfig {
        match self.param {
            SweepParam::X1 => NetworkConfig { x1: v, ..self.base },
            SweepParam::D1 => self.base.with_collinear_d1(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_param: f64,
    pub scenario: Scenario,
    pub case: Case,
    pub objective: Objective,
    pub rho_star: Option<f64>,
    pub obj_bits: Option<f64>,
    pub b1_bits: Option<f64>,
    pub b2_bits: Option<f64>,
    /// `t0` (harvesting) and the transmission slots; `t3` is absent without relaying.
    pub t: [Option<f64>; 4],
    pub status: String,
    /// Best objective among the rows of the same sweep point and objective.
    pub winner: bool,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.status != "converged"
    }

    fn failure(v: f64, scenario: Scenario, case: Case, objective: Objective, status: String) -> Self {
        Self {
            sweep_param: v,
            scenario,
            case,
            objective,
            rho_star: None,
            obj_bits: None,
            b1_bits: None,
            b2_bits: None,
            t: [None; 4],
            status,
            winner: false,
        }
    }

    fn from_scheme(v: f64, objective: Objective, s: &SchemeResult) -> Self {
        let spec = ScenarioSpec::new(s.scenario, s.case, objective, s.rho_star);
        let lay = Layout::of(&spec);
        let x = &s.result.x_star.x;
        let mut t = [None; 4];
        t[0] = Some(lay.t0(x));
        for slot in 1..=lay.n_slots {
            t[slot] = Some(x[lay.t(slot)]);
        }
        Self {
            sweep_param: v,
            scenario: s.scenario,
            case: s.case,
            objective,
            rho_star: Some(s.rho_star),
            obj_bits: Some(s.result.objective_bits),
            b1_bits: Some(s.b1_bits),
            b2_bits: Some(s.b2_bits),
            t,
            status: s.result.status.as_str().to_string(),
            winner: false,
        }
    }
}

fn run_point(v: f64, cfg: &NetworkConfig, objective: Objective, scenario: Scenario, case: Case, solver: SolverChoice) -> SweepRow {
    let scheme = match solve_scheme(scenario, case, objective, cfg, solver.primary()) {
        Ok((s, _)) => s,
        Err(e) => {
            warn!("{scenario}-{case} {objective} at {v}: {e}");
            return SweepRow::failure(v, scenario, case, objective, "error".into());
        }
    };
    let mut row = SweepRow::from_scheme(v, objective, &scheme);
    if solver == SolverChoice::Both && !row.failed() {
        let spec = ScenarioSpec::new(scenario, case, objective, scheme.rho_star);
        let agree = derive_channels(cfg)
            .and_then(|ch| solve_spec(&spec, cfg, &ch, SolverKind::Quad))
            .is_ok_and(|q| {
                q.converged()
                    && (q.objective_bits - scheme.result.objective_bits).abs()
                        <= CROSS_CHECK_RTOL * scheme.result.objective_bits.abs().max(1e-12)
            });
        if !agree {
            warn!("{scenario}-{case} {objective} at {v}: solvers disagree");
            row.status = "solver_mismatch".into();
        }
    }
    row
}

/// Runs every (point, objective, scenario, case) of the sweep. Rows come back in
/// that nesting order whatever the scheduling; failures become rows with a status.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for v in spec.points() {
        for &o in &spec.objectives {
            for &s in &spec.scenarios {
                for &c in &spec.cases {
                    jobs.push((v, o, s, c));
                }
            }
        }
    }
    let mut rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(v, o, s, c)| run_point(v, &spec.config_at(v), o, s, c, spec.solver))
        .collect();
    mark_winners(&mut rows);
    Ok(rows)
}

/// Flags the first best row of each (point, objective) group.
fn mark_winners(rows: &mut [SweepRow]) {
    let mut i = 0;
    while i < rows.len() {
        let j = (i..rows.len())
            .find(|&j| rows[j].sweep_param != rows[i].sweep_param || rows[j].objective != rows[i].objective)
            .unwrap_or(rows.len());
        let mut best: Option<usize> = None;
        for k in i..j {
            if let Some(v) = rows[k].obj_bits.filter(|_| !rows[k].failed()) {
                if best.is_none_or(|b| v > rows[b].obj_bits.unwrap_or(f64::NEG_INFINITY)) {
                    best = Some(k);
                }
            }
        }
        if let Some(b) = best {
            rows[b].winner = true;
        }
        i = j;
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn objective_kind(o: Objective) -> &'static str {
    match o {
        Objective::WeightedSum => "sum",
        Objective::CommonThroughput => "common",
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes the rows as CSV. Numbers use the shortest representation that reads
/// back exactly; absent values are empty fields.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let [t0, t1, t2, t3] = r.t.map(opt);
        w.write_record([
            r.sweep_param.to_string(),
            r.scenario.to_string(),
            r.case.to_string(),
            objective_kind(r.objective).to_string(),
            opt(r.rho_star),
            opt(r.obj_bits),
            opt(r.b1_bits),
            opt(r.b2_bits),
            t0,
            t1,
            t2,
            t3,
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("nothing to write".into()));
    }
    let f = File::create(path).map_err(io_err(path))?;
    write_csv(rows, BufWriter::new(f)).map_err(csv_err(path))
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Parse(format!("bad number '{s}'")))
}

/// Reads rows written by [`write_csv`]. Winner flags are not stored and come back
/// unset.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let objective = match f(3) {
            "sum" => Objective::WeightedSum,
            "common" => Objective::CommonThroughput,
            other => return Err(Error::Parse(format!("unknown objective '{other}'"))),
        };
        rows.push(SweepRow {
            sweep_param: parse_opt(f(0))?.ok_or_else(|| Error::Parse("missing sweep value".into()))?,
            scenario: f(1).parse()?,
            case: f(2).parse()?,
            objective,
            rho_star: parse_opt(f(4))?,
            obj_bits: parse_opt(f(5))?,
            b1_bits: parse_opt(f(6))?,
            b2_bits: parse_opt(f(7))?,
            t: [parse_opt(f(8))?, parse_opt(f(9))?, parse_opt(f(10))?, parse_opt(f(11))?],
            status: f(12).to_string(),
            winner: false,
        });
    }
    Ok(rows)
}

/// Whitespace-separated series, one block per (objective, scenario, case),
/// blocks separated by two blank lines.
pub fn write_plotdata<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    let mut keys: Vec<(&'static str, Scenario, Case)> = Vec::new();
    for r in rows {
        let k = (objective_kind(r.objective), r.scenario, r.case);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let num = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_else(|| "nan".into());
    for (bi, (o, s, c)) in keys.iter().enumerate() {
        if bi > 0 {
            writeln!(out, "\n")?;
        }
        writeln!(out, "# objective={o} scheme={s}-{c}")?;
        writeln!(out, "# param obj_bits B1_bits B2_bits rho_star winner")?;
        for r in rows
            .iter()
            .filter(|r| objective_kind(r.objective) == *o && r.scenario == *s && r.case == *c)
        {
            writeln!(
                out,
                "{} {} {} {} {} {}",
                r.sweep_param,
                num(r.obj_bits),
                num(r.b1_bits),
                num(r.b2_bits),
                num(r.rho_star),
                u8::from(r.winner)
            )?;
        }
    }
    out.flush()
}

pub fn emit_plotdata(rows: &[SweepRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("nothing to write".into()));
    }
    let f = File::create(path).map_err(io_err(path))?;
    write_plotdata(rows, BufWriter::new(f)).map_err(io_err(path))
}

/// Screened ratios of S1 for one objective and case, in sweep order.
pub fn rho_series(rows: &[SweepRow], objective: Objective, case: Case) -> Vec<(f64, Option<f64>)> {
    rows.iter()
        .filter(|r| r.scenario == Scenario::S1 && r.case == case && r.objective == objective)
        .map(|r| (r.sweep_param, r.rho_star.filter(|_| !r.failed())))
        .collect()
}

/// Configuration read from a `key=value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub network: NetworkConfig,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub step: Option<f64>,
}

/// Sets one network parameter by its field name.
pub fn set_network_field(cfg: &mut NetworkConfig, key: &str, value: f64) -> Result<()> {
    let slot = match key {
        "d1" => &mut cfg.d1,
        "d2" => &mut cfg.d2,
        "du" => &mut cfg.du,
        "alpha" => &mut cfg.alpha,
        "lambda" => &mut cfg.lambda,
        "sigma2_d" => &mut cfg.sigma2_d,
        "sigma2_u1" => &mut cfg.sigma2_u1,
        "sigma2_u2" => &mut cfg.sigma2_u2,
        "eta" => &mut cfg.eta,
        "x1" => &mut cfg.x1,
        "x2" => &mut cfg.x2,
        "w1" => &mut cfg.w1,
        "w2" => &mut cfg.w2,
        other => return Err(Error::Parse(format!("unknown key '{other}'"))),
    };
    *slot = value;
    Ok(())
}

/// Parses one `key=value` per line over `base`; `#` starts a comment. Sweep keys
/// are `start`, `stop` and `step`.
pub fn parse_config(text: &str, base: NetworkConfig) -> Result<ConfigFile> {
    let mut c = ConfigFile {
        network: base,
        start: None,
        stop: None,
        step: None,
    };
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |m: String| Error::Parse(format!("line {}: {m}", no + 1));
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| at(format!("expected key=value, got '{line}'")))?;
        let (k, v) = (k.trim(), v.trim());
        let value: f64 = v.parse().map_err(|_| at(format!("bad number '{v}' for {k}")))?;
        match k {
            "start" => c.start = Some(value),
            "stop" => c.stop = Some(value),
            "step" => c.step = Some(value),
            _ => set_network_field(&mut c.network, k, value).map_err(|e| at(e.to_string()))?,
        }
    }
    Ok(c)
}

pub fn load_config(path: &Path, base: NetworkConfig) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_points_are_clean() {
        let s = SweepSpec::distance(NetworkConfig::default());
        let p = s.points();
        assert_eq!(p.len(), 9);
        assert_eq!(p[2], 0.6);
        assert_eq!(p[8], 1.8);
        assert_eq!(SweepSpec::energy(NetworkConfig::default()).points().len(), 12);
    }

    #[test]
    fn config_parsing() {
        let c = parse_config("# comment\nx1 = 50\n\nd1=0.5 # near\nstep=0.1\n", NetworkConfig::default()).unwrap();
        assert_eq!(c.network.x1, 50.0);
        assert_eq!(c.network.d1, 0.5);
        assert_eq!(c.step, Some(0.1));
        assert!(parse_config("x9=1", NetworkConfig::default()).is_err());
        assert!(parse_config("x1", NetworkConfig::default()).is_err());
        assert!(parse_config("x1=abc", NetworkConfig::default()).is_err());
    }

    #[test]
    fn winners_per_group() {
        let mk = |v: f64, o: Objective, obj: Option<f64>| SweepRow {
            obj_bits: obj,
            status: if obj.is_some() { "converged".into() } else { "error".into() },
            ..SweepRow::failure(v, Scenario::S1, Case::A, o, String::new())
        };
        let mut rows = vec![
            mk(1.0, Objective::WeightedSum, Some(1.0)),
            mk(1.0, Objective::WeightedSum, Some(2.0)),
            mk(1.0, Objective::CommonThroughput, None),
            mk(2.0, Objective::WeightedSum, Some(3.0)),
        ];
        mark_winners(&mut rows);
        let w: Vec<bool> = rows.iter().map(|r| r.winner).collect();
        assert_eq!(w, [false, true, false, true]);
    }
}
