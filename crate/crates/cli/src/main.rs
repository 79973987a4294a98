use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ehcoop_core::barrier::SolveResult;
use ehcoop_core::experiments::{
    emit_csv, emit_plotdata, load_config, rho_series, run_sweep, set_network_field, write_csv, SolverChoice,
    SweepRow, SweepSpec, CROSS_CHECK_RTOL,
};
use ehcoop_core::model::{
    build_problem, derive_channels, throughputs_from_allocation, Case, NetworkConfig, Objective, Scenario,
    ScenarioSpec,
};
use ehcoop_core::oracle::{brute_force_grid, finite_diff_check, perspective_fd_errors, GridSpec};
use ehcoop_core::strategy::{screen_rho, select_strategy, solve_spec, SolverKind};

#[derive(Parser)]
#[command(name = "ehcoop", version, about = "Throughput allocation for an energy-harvesting cooperative three-node network")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, global = true, value_enum, default_value_t = SolverArg::Nb)]
    solver: SolverArg,
    #[arg(long, global = true, value_enum, default_value_t = ObjectiveArg::Sum)]
    objective: ObjectiveArg,
    /// Output file (CSV for sweeps); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flat `key=value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one network parameter, e.g. `--set x1=150`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Nb,
    Quad,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Sum,
    Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableArg {
    Energy,
    Distance,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance.
    Solve {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long)]
        case: Case,
        #[arg(long, default_value_t = 0.0)]
        rho: f64,
    },
    /// Screen the power-splitting ratio of S1.
    ScreenRho {
        /// Single case; both when absent.
        #[arg(long)]
        case: Option<Case>,
        /// Print the screened ratio grid over a standard sweep instead.
        #[arg(long, value_enum)]
        table: Option<TableArg>,
    },
    /// Pick the best scheme among the eight (scenario, case) pairs.
    Select,
    /// Sweep the near-user energy arrival rate.
    SweepEnergy(SweepArgs),
    /// Sweep the near-user distance with collinear placement.
    SweepDistance(SweepArgs),
    /// Run the grid oracle and finite-difference checks.
    Validate {
        /// Time-grid step of the oracle.
        #[arg(long, default_value_t = 1e-3)]
        grid_step: f64,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    start: Option<f64>,
    #[arg(long)]
    stop: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Also write plot data grouped per scheme.
    #[arg(long)]
    plotdata: Option<PathBuf>,
    /// Only these scenarios (default all).
    #[arg(long, value_delimiter = ',')]
    scenarios: Vec<Scenario>,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Sum => Objective::WeightedSum,
            ObjectiveArg::Common => Objective::CommonThroughput,
        }
    }
}

impl From<SolverArg> for SolverChoice {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Nb => SolverChoice::Nb,
            SolverArg::Quad => SolverChoice::Quad,
            SolverArg::Both => SolverChoice::Both,
        }
    }
}

impl SolverArg {
    fn primary(self) -> SolverKind {
        match self {
            SolverArg::Quad => SolverKind::Quad,
            _ => SolverKind::Nb,
        }
    }
}

/// Outcome of a command: whether every solve succeeded.
type Outcome = anyhow::Result<bool>;

struct Setup {
    cfg: NetworkConfig,
    range: (Option<f64>, Option<f64>, Option<f64>),
}

fn setup(c: &Common) -> anyhow::Result<Setup> {
    let mut cfg = NetworkConfig::default();
    let mut range = (None, None, None);
    if let Some(path) = &c.config {
        let f = load_config(path, cfg)?;
        cfg = f.network;
        range = (f.start, f.stop, f.step);
    }
    for kv in &c.set {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got '{kv}'"))?;
        let v: f64 = v.trim().parse().with_context(|| format!("bad number in --set {kv}"))?;
        set_network_field(&mut cfg, k.trim(), v)?;
    }
    cfg.validate()?;
    Ok(Setup { cfg, range })
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_else(|| "-".into())
}

fn report(out: &mut dyn Write, label: &str, r: &SolveResult) -> io::Result<()> {
    writeln!(out, "[{label}]")?;
    writeln!(out, "status = {}", r.status.as_str())?;
    writeln!(out, "objective_bits = {}", r.objective_bits)?;
    writeln!(out, "x = {:?}", r.x_star.x)?;
    writeln!(out, "outer_iters = {}", r.outer_iters)?;
    writeln!(out, "inner_iters = {}", r.inner_iters)?;
    writeln!(out, "max_constraint_violation = {:e}", r.max_constraint_violation)?;
    writeln!(out, "kkt_residual = {:e}", r.kkt_residual)?;
    writeln!(out, "elapsed_s = {}", r.elapsed.as_secs_f64())
}

fn cmd_solve(c: &Common, scenario: Scenario, case: Case, rho: f64) -> Outcome {
    let s = setup(c)?;
    let spec = ScenarioSpec::new(scenario, case, c.objective.into(), rho);
    let ch = derive_channels(&s.cfg)?;
    let mut out = output(&c.out)?;
    let kinds: &[SolverKind] = match c.solver {
        SolverArg::Nb => &[SolverKind::Nb],
        SolverArg::Quad => &[SolverKind::Quad],
        SolverArg::Both => &[SolverKind::Nb, SolverKind::Quad],
    };
    let mut results = Vec::new();
    for &k in kinds {
        let r = solve_spec(&spec, &s.cfg, &ch, k)?;
        report(&mut *out, &format!("{} {k}", spec.label()), &r)?;
        if r.converged() {
            let u = throughputs_from_allocation(&spec, &s.cfg, &ch, &r.x_star)?;
            writeln!(out, "B1_bits = {}\nB2_bits = {}", u.b1, u.b2)?;
        }
        results.push(r);
    }
    let mut ok = results.iter().all(SolveResult::converged);
    if let [a, b] = results.as_slice() {
        let rel = (a.objective_bits - b.objective_bits).abs() / a.objective_bits.abs().max(1e-12);
        writeln!(out, "relative_difference = {rel:e}")?;
        ok &= rel <= CROSS_CHECK_RTOL;
    }
    Ok(ok)
}

fn print_rho_grid(out: &mut dyn Write, rows: &[SweepRow], objective: Objective) -> io::Result<bool> {
    let mut ok = true;
    let mut header_done = false;
    for case in Case::ALL {
        let series = rho_series(rows, objective, case);
        if series.is_empty() {
            continue;
        }
        if !std::mem::replace(&mut header_done, true) {
            let header: Vec<String> = series.iter().map(|(v, _)| format!("{v}")).collect();
            writeln!(out, "objective={},param,{}", objective_name(objective), header.join(","))?;
        }
        ok &= series.iter().all(|(_, r)| r.is_some());
        let cells: Vec<String> = series.iter().map(|(_, r)| fmt_opt(*r)).collect();
        writeln!(out, "objective={},rho_{case},{}", objective_name(objective), cells.join(","))?;
    }
    Ok(ok)
}

fn objective_name(o: Objective) -> &'static str {
    match o {
        Objective::WeightedSum => "sum",
        Objective::CommonThroughput => "common",
    }
}

fn cmd_screen(c: &Common, case: Option<Case>, table: Option<TableArg>) -> Outcome {
    let s = setup(c)?;
    let objective: Objective = c.objective.into();
    let cases: Vec<Case> = case.map_or_else(|| Case::ALL.to_vec(), |c| vec![c]);
    let mut out = output(&c.out)?;
    if let Some(t) = table {
        let mut spec = match t {
            TableArg::Energy => SweepSpec::energy(s.cfg),
            TableArg::Distance => SweepSpec::distance(s.cfg),
        };
        spec.scenarios = vec![Scenario::S1];
        spec.cases = cases;
        spec.objectives = vec![objective];
        spec.solver = c.solver.into();
        let rows = run_sweep(&spec)?;
        return Ok(print_rho_grid(&mut *out, &rows, objective)?);
    }
    writeln!(out, "case,rho,obj_bits")?;
    for case in cases {
        let scr = screen_rho(case, objective, &s.cfg, c.solver.primary())?;
        for cand in &scr.table {
            writeln!(out, "{case},{},{}", cand.rho, fmt_opt(cand.objective_bits))?;
        }
        writeln!(out, "# rho_star[{case}] = {}", scr.rho_star)?;
    }
    Ok(true)
}

fn cmd_select(c: &Common) -> Outcome {
    let s = setup(c)?;
    let objective: Objective = c.objective.into();
    let r = select_strategy(&s.cfg, objective, c.solver.primary())?;
    let mut out = output(&c.out)?;
    writeln!(out, "scenario,case,rho,obj_bits")?;
    for cand in &r.table {
        writeln!(out, "{},{},{},{}", cand.scenario, cand.case, cand.rho, fmt_opt(cand.objective_bits))?;
    }
    for n in &r.notes {
        writeln!(out, "# {n}")?;
    }
    let w = &r.winner;
    writeln!(
        out,
        "# winner = {}-{} rho_star={} obj_bits={} B1_bits={} B2_bits={}",
        w.scenario, w.case, w.rho_star, w.result.objective_bits, w.b1_bits, w.b2_bits
    )?;
    let mut ok = r.notes.iter().all(|n| !n.contains("failed"));
    if matches!(c.solver, SolverArg::Both) {
        let spec = ScenarioSpec::new(w.scenario, w.case, objective, w.rho_star);
        let q = solve_spec(&spec, &s.cfg, &derive_channels(&s.cfg)?, SolverKind::Quad)?;
        let rel = (q.objective_bits - w.result.objective_bits).abs() / w.result.objective_bits.abs().max(1e-12);
        writeln!(out, "# quad cross-check relative_difference = {rel:e}")?;
        ok &= q.converged() && rel <= CROSS_CHECK_RTOL;
    }
    Ok(ok)
}

fn cmd_sweep(c: &Common, a: &SweepArgs, energy: bool) -> Outcome {
    let s = setup(c)?;
    let mut spec = if energy { SweepSpec::energy(s.cfg) } else { SweepSpec::distance(s.cfg) };
    let pick = |flag: Option<f64>, file: Option<f64>, default: f64| flag.or(file).unwrap_or(default);
    spec.start = pick(a.start, s.range.0, spec.start);
    spec.stop = pick(a.stop, s.range.1, spec.stop);
    spec.step = pick(a.step, s.range.2, spec.step);
    spec.objectives = vec![c.objective.into()];
    spec.solver = c.solver.into();
    if !a.scenarios.is_empty() {
        spec.scenarios = a.scenarios.clone();
    }
    let rows = run_sweep(&spec)?;
    match &c.out {
        Some(p) => emit_csv(&rows, p)?,
        None => write_csv(&rows, io::stdout().lock())?,
    }
    if let Some(p) = &a.plotdata {
        emit_plotdata(&rows, p)?;
    }
    Ok(rows.iter().all(|r| !r.failed()))
}

fn cmd_validate(c: &Common, grid_step: f64) -> Outcome {
    let s = setup(c)?;
    let ch = derive_channels(&s.cfg)?;
    let mut out = output(&c.out)?;
    let mut ok = true;
    writeln!(out, "check,instance,value,tolerance,pass")?;
    let mut line = |out: &mut dyn Write, check: &str, inst: &str, v: f64, tol: f64| -> io::Result<()> {
        let pass = v <= tol;
        ok &= pass;
        writeln!(out, "{check},{inst},{v:e},{tol:e},{pass}")
    };

    let (eg, eh) = perspective_fd_errors(1e4, 0.5, 0.05, 1e-6);
    line(&mut *out, "perspective_gradient_fd", "gamma=1e4,t=0.5,y=0.05", eg, 1e-6)?;
    let (_, eh5) = perspective_fd_errors(1e4, 0.5, 0.05, 1e-5);
    line(&mut *out, "perspective_hessian_fd", "gamma=1e4,t=0.5,y=0.05", eh5.min(eh), 1e-4)?;

    let grid = GridSpec::new(grid_step);
    for objective in [Objective::WeightedSum, Objective::CommonThroughput] {
        for scenario in [Scenario::S1, Scenario::S2, Scenario::S3, Scenario::S4] {
            for case in Case::ALL {
                let spec = ScenarioSpec::new(scenario, case, objective, 0.0);
                let label = format!("{}-{}", spec.label(), objective_name(objective));
                let p = build_problem(&spec, &s.cfg, &ch)?;
                let nb = solve_spec(&spec, &s.cfg, &ch, SolverKind::Nb)?;
                let q = solve_spec(&spec, &s.cfg, &ch, SolverKind::Quad)?;
                let rel = (nb.objective_bits - q.objective_bits).abs() / nb.objective_bits.abs().max(1e-12);
                line(&mut *out, "nb_vs_quad", &label, rel, CROSS_CHECK_RTOL)?;
                line(&mut *out, "nb_kkt", &label, nb.kkt_residual, 1e-6)?;

                let x = &nb.x_star.x;
                let interior: Vec<f64> = ehcoop_core::convex::initial_point(&p)
                    .map(|ip| ip.allocation.x)
                    .unwrap_or_else(|_| x.clone());
                if let Ok(fd) = finite_diff_check(&p, 1.0, &interior, 1e-5) {
                    line(&mut *out, "barrier_hessian_fd", &label, fd.barrier_hessian, 1e-4)?;
                }
                if !scenario.relays() {
                    let g = brute_force_grid(&p, &grid)?;
                    // the grid optimum cannot beat the true optimum and lies within O(step)
                    let gap = nb.objective_bits - g.best_objective_bits;
                    line(&mut *out, "grid_minus", &label, -gap, 1e-6)?;
                    line(&mut *out, "grid_gap", &label, gap / nb.objective_bits.abs().max(1e-12), 10.0 * grid_step)?;
                }
            }
        }
    }
    Ok(ok)
}

fn run(cli: &Cli) -> Outcome {
    let c = &cli.common;
    match &cli.command {
        Command::Solve { scenario, case, rho } => cmd_solve(c, *scenario, *case, *rho),
        Command::ScreenRho { case, table } => cmd_screen(c, *case, *table),
        Command::Select => cmd_select(c),
        Command::SweepEnergy(a) => cmd_sweep(c, a, true),
        Command::SweepDistance(a) => cmd_sweep(c, a, false),
        Command::Validate { grid_step } => {
            if !(*grid_step > 0.0) {
                bail!("--grid-step must be positive");
            }
            cmd_validate(c, *grid_step)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            // bad input is a usage error; anything else is a failed solve
            let usage = match e.downcast_ref::<ehcoop_core::Error>() {
                Some(ehcoop_core::Error::InvalidConfig(_) | ehcoop_core::Error::Parse(_)) => true,
                Some(_) => false,
                None => true,
            };
            ExitCode::from(if usage { 1 } else { 2 })
        }
    }
}
