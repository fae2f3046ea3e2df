use std::fs;
use std::path::Path;

use strategem::cli::{parse_and_dispatch, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME};
use strategem::output::RunTable;
use strategem::Config;

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["strategem".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = parse_and_dispatch(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_echoes_defaults() {
    let (code, out, _) = cli(&["validate"]);
    assert_eq!(code, EXIT_OK);
    let cfg = Config::from_toml_str(&out).unwrap();
    assert_eq!(
        (cfg.sim.n_firms, cfg.sim.n_markets, cfg.sim.n_cycles),
        (200, 20, 200)
    );
    assert_eq!(cfg.sim.checkpoint_cycles, vec![20, 200]);
    assert_eq!(cfg.batch.n_runs, 1008);
}

#[test]
fn shipped_config_matches_defaults() {
    let shipped =
        Config::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("config/default.toml")).unwrap();
    assert_eq!(shipped, Config::default());
}

#[test]
fn flags_and_overrides_reach_the_config() {
    let (code, out, _) = cli(&[
        "validate",
        "--firms",
        "10",
        "--set",
        "sim.noise_amplitude=0.25",
        "--set",
        "n_runs=3",
    ]);
    assert_eq!(code, EXIT_OK);
    let cfg = Config::from_toml_str(&out).unwrap();
    assert_eq!(cfg.sim.n_firms, 10);
    assert_eq!(cfg.sim.noise_amplitude, 0.25);
    assert_eq!(cfg.batch.n_runs, 3);
}

#[test]
fn config_errors_exit_one() {
    assert_eq!(cli(&["validate", "--firms", "3"]).0, EXIT_CONFIG);
    assert_eq!(
        cli(&["validate", "--set", "sim.noise_amplitude=1.5"]).0,
        EXIT_CONFIG
    );
    assert_eq!(cli(&["validate", "--set", "nonsense"]).0, EXIT_CONFIG);
    assert_eq!(cli(&["frobnicate"]).0, EXIT_CONFIG);
    let (code, _, err) = cli(&["validate", "--config", "/definitely/not/here.toml"]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("error"));
}

#[test]
fn help_is_not_an_error() {
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("batch"));
}

#[test]
fn run_with_zero_cycles_writes_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = cli(&[
        "run",
        "--seed",
        "42",
        "--cycles",
        "0",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("run_id,cycle,firm_id,strategy"));
    assert_eq!(lines.count(), 200);
    let effective = Config::load(&dir.path().join("effective_config.toml")).unwrap();
    assert_eq!(effective.sim.rng_seed, 42);
    assert_eq!(effective.sim.n_cycles, 0);
}

#[test]
fn run_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let (code, _, _) = cli(&[
            "run",
            "--seed",
            "5",
            "--cycles",
            "15",
            "--firms",
            "20",
            "--out",
            path(d.path()),
        ]);
        assert_eq!(code, EXIT_OK);
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("trace.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn aggregate_recomputes_batch_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let (code, _, _) = cli(&[
        "batch",
        "--runs",
        "6",
        "--cycles",
        "25",
        "--firms",
        "40",
        "--trace",
        "--out",
        path(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    for id in 0..6 {
        assert!(out.join(format!("traces/run_{id}.csv")).exists());
    }
    let again = dir.path().join("again");
    let runs = out.join("runs.csv");
    let (code, _, _) = cli(&["aggregate", "--input", path(&runs), "--out", path(&again)]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(
        fs::read(out.join("aggregate.csv")).unwrap(),
        fs::read(again.join("aggregate.csv")).unwrap()
    );

    let table = RunTable::read_csv(fs::File::open(&runs).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 6);
    assert!(table.columns.iter().any(|c| c == "top10_io_c20"));
}

#[test]
fn aggregate_of_missing_input_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = cli(&["aggregate", "--out", path(dir.path())]);
    assert_eq!(code, EXIT_RUNTIME);
}

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = Config::default();
    cfg.sim.noise_amplitude = 0.125;
    cfg.batch.base_seed = u64::MAX >> 1;
    let back = Config::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back, cfg);
}
