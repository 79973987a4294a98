use ehcoop_core::barrier::{solve_nb, BarrierOptions};
use ehcoop_core::convex::initial_point;
use ehcoop_core::experiments::{
    emit_csv, emit_plotdata, load_config, parse_config, read_csv, run_sweep, write_csv, SweepSpec,
};
use ehcoop_core::model::{build_problem, derive_channels, Case, NetworkConfig, Objective, Scenario, ScenarioSpec};
use ehcoop_core::oracle::{brute_force_grid, finite_diff_check, perspective_fd_errors, GridSpec};
use ehcoop_core::Error;

fn program(cfg: &NetworkConfig, s: Scenario, c: Case, o: Objective) -> ehcoop_core::convex::ConvexProgram {
    let ch = derive_channels(cfg).unwrap();
    build_problem(&ScenarioSpec::new(s, c, o, 0.0), cfg, &ch).unwrap()
}

#[test]
fn grid_oracle_brackets_barrier_optimum() {
    let cfg = NetworkConfig::default();
    let step = 2e-3;
    for s in [Scenario::S3, Scenario::S4] {
        for c in Case::ALL {
            for o in [Objective::WeightedSum, Objective::CommonThroughput] {
                let p = program(&cfg, s, c, o);
                let nb = solve_nb(&p, &BarrierOptions::default()).unwrap();
                let g = brute_force_grid(&p, &GridSpec::new(step)).unwrap();
                assert_eq!(p.max_violation(&g.best_x), 0.0);
                let gap = (nb.objective_bits - g.best_objective_bits) / nb.objective_bits;
                assert!(gap >= -1e-9 && gap <= 10.0 * step, "{s}-{c} {o}: {gap:e}");
            }
        }
    }
}

#[test]
fn grid_oracle_rejects_relaying_and_huge_grids() {
    let cfg = NetworkConfig::default();
    let relay = program(&cfg, Scenario::S2, Case::A, Objective::WeightedSum);
    assert!(matches!(brute_force_grid(&relay, &GridSpec::new(0.1)), Err(Error::OracleUnsupported(_))));
    let p = program(&cfg, Scenario::S4, Case::A, Objective::WeightedSum);
    assert!(matches!(brute_force_grid(&p, &GridSpec::new(1e-5)), Err(Error::GridTooLarge { .. })));
    assert!(matches!(brute_force_grid(&p, &GridSpec::new(0.0)), Err(Error::InvalidConfig(_))));
}

#[test]
fn no_energy_gives_zero_throughput() {
    let cfg = NetworkConfig {
        x1: 0.0,
        x2: 0.0,
        ..Default::default()
    };
    let p = program(&cfg, Scenario::S4, Case::A, Objective::WeightedSum);
    let g = brute_force_grid(&p, &GridSpec::new(0.05)).unwrap();
    assert_eq!(g.best_objective_bits, 0.0);
}

#[test]
fn analytic_derivatives_match_differences() {
    let (g, _) = perspective_fd_errors(1e4, 0.5, 0.05, 1e-6);
    assert!(g <= 1e-6, "{g:e}");
    let (_, h) = perspective_fd_errors(1e4, 0.5, 0.05, 1e-5);
    assert!(h <= 1e-4, "{h:e}");
    let cfg = NetworkConfig::default();
    for s in Scenario::ALL {
        let p = program(&cfg, s, Case::B, Objective::CommonThroughput);
        let x = initial_point(&p).unwrap().allocation.x;
        let r = finite_diff_check(&p, 1.0, &x, 1e-5).unwrap();
        assert!(r.barrier_hessian <= 1e-4, "{s}: {r:?}");
    }
}

fn small_sweep() -> SweepSpec {
    let mut s = SweepSpec::energy(NetworkConfig::default());
    s.start = 100.0;
    s.stop = 200.0;
    s.step = 50.0;
    s
}

#[test]
fn sweep_csv_is_deterministic_and_round_trips() {
    let spec = small_sweep();
    let a = run_sweep(&spec).unwrap();
    let b = run_sweep(&spec).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    write_csv(&a, &mut ca).unwrap();
    write_csv(&b, &mut cb).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(a.len(), 3 * 2 * 4 * 2);
    assert!(a.iter().all(|r| !r.failed()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    emit_csv(&a, &path).unwrap();
    let back = read_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back.len(), a.len());
    for (r, s) in back.iter().zip(&a) {
        assert_eq!((r.scenario, r.case, r.objective), (s.scenario, s.case, s.objective));
        assert_eq!(r.obj_bits, s.obj_bits);
    }
}

#[test]
fn plotdata_has_one_block_per_scheme() {
    let mut spec = small_sweep();
    spec.objectives = vec![Objective::WeightedSum];
    let rows = run_sweep(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plot.dat");
    emit_plotdata(&rows, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.matches("# objective=").count(), 8);
    let data = text.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).count();
    assert_eq!(data, rows.len());
    assert!(emit_plotdata(&[], &path).is_err());
}

#[test]
fn config_files_parse_and_load() {
    let c = parse_config("# comment\nx1 = 150\nd1=0.8 # inline\nstart=10\nstep=5\n", NetworkConfig::default()).unwrap();
    assert_eq!(c.network.x1, 150.0);
    assert_eq!(c.network.d1, 0.8);
    assert_eq!((c.start, c.stop, c.step), (Some(10.0), None, Some(5.0)));
    assert!(matches!(parse_config("bogus=1", NetworkConfig::default()), Err(Error::Parse(_))));
    assert!(matches!(parse_config("x1", NetworkConfig::default()), Err(Error::Parse(_))));
    assert!(matches!(parse_config("x1=abc", NetworkConfig::default()), Err(Error::Parse(_))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.cfg");
    std::fs::write(&path, "x2=90\n").unwrap();
    assert_eq!(load_config(&path, NetworkConfig::default()).unwrap().network.x2, 90.0);
    assert!(load_config(&dir.path().join("missing.cfg"), NetworkConfig::default()).is_err());
}
