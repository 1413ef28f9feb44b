//! End-to-end exercises of the command-line interface: run directories,
//! config handling, determinism, and the prepare → search → run data flow
//! through the on-disk formats. Grids are kept small; statistical quality is
//! the acceptance suite's job, not this one's.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pilotwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pilotwave"))
        .args(args)
        .output()
        .expect("binary should execute")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> Value {
    let bytes = fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("parse {}: {e}", path.display()))
}

/// 64² entangled pair with the threshold 0 on a grid point.
const PREPARE_CONFIG: &str = r#"
[grid]
nx = 64
ny = 64
x_min = -20.0
x_max = 20.0
y_min = -20.0
y_max = 20.0

[[state.terms]]
a = { center = 2.5, width = 1.0 }
b = { center = -2.5, width = 1.0 }

[[state.terms]]
a = { center = -2.5, width = 1.0 }
b = { center = 2.5, width = 1.0 }
"#;

const RUN_TAIL: &str = r#"
[settings]
alice_times = [0.25, 0.75]
bob_times = [0.25, 0.75]
alice_threshold = 0.0
bob_threshold = 0.0

[experiment]
estimator = "all"
n = 200
seed = 3

[integrator]
max_step = 0.05
rel_tol = 1e-5
abs_tol = 1e-7
"#;

#[test]
fn prepare_then_run_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let prep_cfg = root.join("prepare.toml");
    fs::write(&prep_cfg, PREPARE_CONFIG).unwrap();

    let out = pilotwave(&[
        "prepare",
        "--config",
        prep_cfg.to_str().unwrap(),
        "--out",
        root.join("prep").to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(root.join("prep/state.bin").exists());
    let report = read_json(&root.join("prep/prepare.json"));
    assert_eq!(report["nx"], 64);
    let q: Vec<f64> = report["quadrant_masses"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    // the pair sits in the (+,−) and (−,+) quadrants
    assert!(q[1] + q[2] > 0.99, "quadrants {q:?}");

    // the state path resolves relative to the config file's directory
    let run_cfg = root.join("run.toml");
    fs::write(&run_cfg, format!("[state]\nfile = \"prep/state.bin\"\n{RUN_TAIL}")).unwrap();
    let out = pilotwave(&[
        "run",
        "--config",
        run_cfg.to_str().unwrap(),
        "--threads",
        "1",
        "--out",
        root.join("runA").to_str().unwrap(),
    ]);
    assert_ok(&out);
    // verbatim config snapshot
    assert_eq!(
        fs::read(&run_cfg).unwrap(),
        fs::read(root.join("runA/config.toml")).unwrap()
    );
    assert!(root.join("runA/tables.csv").exists());

    let results = read_json(&root.join("runA/results.json"));
    for estimator in ["quantum", "naive", "collapse"] {
        let s = results[estimator]["s"].as_f64().unwrap();
        assert!(s.is_finite() && s >= 0.0, "{estimator} S = {s}");
    }
    let naive_s = results["naive"]["s"].as_f64().unwrap();
    let naive_se = results["naive"]["stderr_s"].as_f64().unwrap();
    assert!(naive_s <= 2.0 + 3.0 * naive_se, "naive S {naive_s} > 2 + 3·{naive_se}");

    // same seed, same bytes
    let out = pilotwave(&[
        "run",
        "--config",
        run_cfg.to_str().unwrap(),
        "--out",
        root.join("runB").to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert_eq!(
        fs::read(root.join("runA/results.json")).unwrap(),
        fs::read(root.join("runB/results.json")).unwrap()
    );

    // --seed overrides [experiment].seed and changes the Monte Carlo draws
    let out = pilotwave(&[
        "run",
        "--config",
        run_cfg.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        root.join("runC").to_str().unwrap(),
    ]);
    assert_ok(&out);
    let reseeded = read_json(&root.join("runC/results.json"));
    assert_eq!(reseeded["seed"], 4);
    assert_ne!(
        results["naive"]["table"]["E"],
        reseeded["naive"]["table"]["E"]
    );
}

#[test]
fn run_directories_are_never_reused() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = root.join("c.toml");
    fs::write(&cfg, PREPARE_CONFIG).unwrap();
    let occupied = root.join("occupied");
    fs::create_dir(&occupied).unwrap();
    fs::write(occupied.join("keep.txt"), "precious").unwrap();

    let out = pilotwave(&[
        "prepare",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        occupied.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not empty"), "stderr: {stderr}");
    assert_eq!(fs::read_to_string(occupied.join("keep.txt")).unwrap(), "precious");
}

#[test]
fn config_errors_exit_with_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();

    // missing config file
    let out = pilotwave(&[
        "run",
        "--config",
        root.join("nope.toml").to_str().unwrap(),
        "--out",
        root.join("a").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));

    // run needs [settings] and a [state]
    let cfg = root.join("bare.toml");
    fs::write(&cfg, PREPARE_CONFIG).unwrap();
    let out = pilotwave(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        root.join("b").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("[settings]"), "stderr: {stderr}");
}

#[test]
fn prepare_rejects_a_packet_on_the_periodic_edge() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = root.join("edge.toml");
    let body = r#"
[grid]
nx = 64
ny = 64
x_min = -20.0
x_max = 20.0
y_min = -20.0
y_max = 20.0

[[state.terms]]
a = { center = -20.0, width = 1.0 }
b = { center = 0.0, width = 1.0 }
"#;
    fs::write(&cfg, body).unwrap();
    let out = pilotwave(&[
        "prepare",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        root.join("edge").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("boundary mass"), "stderr: {stderr}");
}

#[test]
fn equivariance_writes_its_report_and_marginals() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = root.join("eq.toml");
    let body = format!(
        "{PREPARE_CONFIG}\n[equivariance]\ntime = 0.5\nn = 300\nbins = 8\n\n\
         [integrator]\nmax_step = 0.05\nrel_tol = 1e-5\nabs_tol = 1e-7\n"
    );
    fs::write(&cfg, body).unwrap();
    let out = pilotwave(&[
        "equivariance",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        root.join("eq").to_str().unwrap(),
    ]);
    assert_ok(&out);
    let report = read_json(&root.join("eq/equivariance.json"));
    assert_eq!(report["n"], 300);
    assert_eq!(report["failed_trajectories"], 0);
    for key in ["ks_a", "ks_b", "tv"] {
        let v = report[key].as_f64().unwrap();
        assert!(v.is_finite() && (0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert!(root.join("eq/marginal_a.csv").exists());
    assert!(root.join("eq/marginal_b.csv").exists());
}

#[test]
fn search_finds_a_state_whose_exact_chsh_is_its_eigenvalue() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = root.join("search.toml");
    let body = r#"
[grid]
nx = 16
ny = 16
x_min = -8.0
x_max = 8.0
y_min = -8.0
y_max = 8.0

[search]
time_candidates = [0.0, 0.9]
tol = 1e-6
max_iter = 5000

[experiment]
seed = 12
"#;
    fs::write(&cfg, body).unwrap();
    let out = pilotwave(&[
        "search",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        root.join("scan").to_str().unwrap(),
    ]);
    assert_ok(&out);
    let scan = read_json(&root.join("scan/scan.json"));
    let best = &scan["best"];
    let lambda = best["eigenvalue"].as_f64().unwrap();
    let tsirelson = 2.0 * 2.0f64.sqrt();
    assert!(lambda > 0.0 && lambda <= tsirelson + 1e-6, "λ = {lambda}");
    assert_eq!(scan["ranked"][0]["converged"], true);
    assert!(root.join("scan/best_state.bin").exists());

    // feed the winner back through `run`: the exact quantum S on the
    // eigenstate must reproduce the eigenvalue
    let times = |side: &str| -> (f64, f64) {
        let t = best["settings"][side].as_array().unwrap();
        (t[0].as_f64().unwrap(), t[1].as_f64().unwrap())
    };
    let (a1, a2) = times("alice_times");
    let (b1, b2) = times("bob_times");
    let run_cfg = root.join("run_eigen.toml");
    let body = format!(
        "[state]\nfile = \"scan/best_state.bin\"\n\n[settings]\n\
         alice_times = [{a1}, {a2}]\nbob_times = [{b1}, {b2}]\n\
         alice_threshold = 0.0\nbob_threshold = 0.0\n\n\
         [experiment]\nestimator = \"quantum\"\n"
    );
    fs::write(&run_cfg, body).unwrap();
    let out = pilotwave(&[
        "run",
        "--config",
        run_cfg.to_str().unwrap(),
        "--out",
        root.join("eigenrun").to_str().unwrap(),
    ]);
    assert_ok(&out);
    let results = read_json(&root.join("eigenrun/results.json"));
    let s = results["quantum"]["s"].as_f64().unwrap();
    assert!((s - lambda).abs() <= 1e-6, "S = {s} vs λ = {lambda}");
}
