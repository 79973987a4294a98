use std::process::{Command, Output};

fn ehcoop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehcoop")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn solve_reports_both_solvers() {
    let o = ehcoop(&["solve", "--scenario", "S3", "--case", "B", "--solver", "both"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.matches("status = converged").count(), 2);
    assert!(field(&text, "relative_difference") <= 1e-4);
    assert!(field(&text, "B1_bits") > 0.0);
}

#[test]
fn screen_rho_prints_the_candidate_table() {
    let o = ehcoop(&["screen-rho", "--case", "B", "--set", "x1=25"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("case,rho,obj_bits"));
    assert!(text.contains("# rho_star[B] = 0.7"), "{text}");
}

#[test]
fn select_names_a_winner() {
    let o = ehcoop(&["select", "--objective", "common"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("# winner = S1-A"), "{}", stdout(&o));
}

#[test]
fn sweep_writes_csv_and_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let plot = dir.path().join("out.dat");
    let o = ehcoop(&[
        "sweep-distance",
        "--start",
        "0.6",
        "--stop",
        "1.0",
        "--step",
        "0.4",
        "--scenarios",
        "S2,S4",
        "--out",
        csv.to_str().unwrap(),
        "--plotdata",
        plot.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    // header plus 2 points x 2 scenarios x 2 cases
    assert_eq!(text.lines().count(), 9);
    assert!(text.lines().skip(1).all(|l| l.ends_with("converged")));
    assert_eq!(std::fs::read_to_string(&plot).unwrap().matches("# objective=").count(), 4);
}

#[test]
fn config_file_feeds_the_sweep_range() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("net.cfg");
    std::fs::write(&cfg, "start=50\nstop=50\nstep=25\n").unwrap();
    let o = ehcoop(&["sweep-energy", "--scenarios", "S4", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().skip(1).all(|l| l.starts_with("50,")), "{text}");
}

#[test]
fn bad_input_exits_with_usage_code() {
    assert_eq!(ehcoop(&["solve", "--scenario", "S9", "--case", "A"]).status.code(), Some(1));
    assert_eq!(ehcoop(&["select", "--set", "bogus=1"]).status.code(), Some(1));
    assert_eq!(ehcoop(&["select", "--set", "d1=5"]).status.code(), Some(1));
    assert_eq!(ehcoop(&["validate", "--grid-step", "0"]).status.code(), Some(1));
    assert_eq!(ehcoop(&["--help"]).status.code(), Some(0));
}

#[test]
fn validate_passes_every_check() {
    let o = ehcoop(&["validate", "--grid-step", "0.005"]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
}
