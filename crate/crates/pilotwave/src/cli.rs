//! Command-line front end: reproducible run directories for preparation,
//! eigenstate search, correlation experiments, and equivariance diagnostics.
//!
//! Every invocation works out of a fresh directory (it refuses to reuse a
//! non-empty one), snapshots the config verbatim, and writes only
//! deterministic bytes — same config and seed, same files.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

use crate::bohm::{integrate_ensemble, EdgeGuard, EnsembleStats, EvolvedFields};
use crate::chsh::{
    chsh_value, mix_seed, run_collapse, run_naive_trajectories, run_quantum, CorrelationTable,
    ExperimentSettings,
};
use crate::config::{EstimatorChoice, RunConfig};
use crate::error::{Error, Result};
use crate::evolve::{free_evolve_unchecked, BOUNDARY_MASS_LIMIT};
use crate::fileio;
use crate::grid::Axis;
use crate::search::{scan_settings, ScanFailure, ScanRecord};
use crate::stats::{ks_distance, tv_distance_binned};

#[derive(Parser)]
#[command(
    name = "pilotwave",
    version,
    about = "Two-particle guidance-equation laboratory: trajectory ensembles, \
             collapse-mediated measurements, CHSH experiments"
)]
struct Cli {
    /// TOML run configuration (required).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed, overriding [experiment].seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker-thread cap for ensemble integration.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Output directory, overriding [output].dir. Must be empty or absent.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configured initial state, save it, print diagnostics.
    Prepare,
    /// Scan measurement-time combinations for the top CHSH eigenvalue.
    Search,
    /// Run the configured correlation estimator(s).
    Run,
    /// Sample |ψ₀|², transport the ensemble, compare against |ψ(t)|².
    Equivariance,
}

/// Parse argv and execute; returns the process exit code (0 success,
/// 1 usage/config, 2 numerical failure).
pub fn run() -> i32 {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Ctx {
    config: RunConfig,
    config_dir: PathBuf,
    out_dir: PathBuf,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.config.experiment.seed
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::InvalidConfig("--threads must be ≥ 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    let config_path = cli
        .config
        .ok_or_else(|| Error::InvalidConfig("--config PATH is required".into()))?;
    let (mut config, raw) = RunConfig::load(&config_path)?;
    if let Some(seed) = cli.seed {
        config.experiment.seed = seed;
    }
    let out_dir = match cli.out {
        Some(dir) => dir,
        None => config
            .output
            .as_ref()
            .map(|o| o.dir.clone())
            .ok_or_else(|| {
                Error::InvalidConfig("no output directory: set [output].dir or --out".into())
            })?,
    };
    prepare_out_dir(&out_dir, &raw)?;
    let ctx = Ctx {
        config,
        config_dir: config_path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf(),
        out_dir,
    };
    match cli.command {
        Command::Prepare => cmd_prepare(&ctx),
        Command::Search => cmd_search(&ctx),
        Command::Run => cmd_run(&ctx),
        Command::Equivariance => cmd_equivariance(&ctx),
    }
}

fn prepare_out_dir(dir: &Path, raw_config: &str) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(Error::InvalidConfig(format!(
                "output path {} exists and is not a directory",
                dir.display()
            )));
        }
        if fs::read_dir(dir)?.next().is_some() {
            return Err(Error::InvalidConfig(format!(
                "output directory {} is not empty; runs never overwrite each other",
                dir.display()
            )));
        }
    } else {
        fs::create_dir_all(dir)?;
    }
    fs::write(dir.join("config.toml"), raw_config)?;
    Ok(())
}

#[derive(Serialize)]
struct PrepareReport {
    norm_squared_before: f64,
    boundary_mass_a: f64,
    boundary_mass_b: f64,
    /// Masses of the (+,+), (+,−), (−,+), (−,−) threshold quadrants.
    quadrant_masses: [f64; 4],
    nx: usize,
    ny: usize,
    x_min: f64,
    dx: f64,
    y_min: f64,
    dy: f64,
    state_file: String,
}

fn cmd_prepare(ctx: &Ctx) -> Result<()> {
    let built = ctx.config.state(&ctx.config_dir)?;
    let norm_squared_before = built.norm_squared();
    let psi = built.normalize()?;
    psi.check_boundary_mass(BOUNDARY_MASS_LIMIT)?;
    let (ta, tb) = match &ctx.config.settings {
        Some(s) => (s.alice_threshold, s.bob_threshold),
        None => (0.0, 0.0),
    };
    let report = PrepareReport {
        norm_squared_before,
        boundary_mass_a: psi.boundary_mass(Axis::A),
        boundary_mass_b: psi.boundary_mass(Axis::B),
        quadrant_masses: psi.quadrant_masses(ta, tb),
        nx: psi.nx(),
        ny: psi.ny(),
        x_min: psi.grid_x.x_min(),
        dx: psi.grid_x.dx(),
        y_min: psi.grid_y.x_min(),
        dy: psi.grid_y.dx(),
        state_file: "state.bin".into(),
    };
    fileio::save_state(&ctx.out("state.bin"), &psi)?;
    fileio::write_json(&ctx.out("prepare.json"), &report)?;
    println!("norm² before normalization: {norm_squared_before:.12}");
    println!(
        "boundary mass: A {:.3e}, B {:.3e} (limit {BOUNDARY_MASS_LIMIT:.0e})",
        report.boundary_mass_a, report.boundary_mass_b
    );
    let q = report.quadrant_masses;
    println!(
        "quadrant masses (++ +− −+ −−): {:.4} {:.4} {:.4} {:.4}",
        q[0], q[1], q[2], q[3]
    );
    println!("wrote {}", ctx.out("state.bin").display());
    Ok(())
}

#[derive(Serialize)]
struct SearchReport {
    time_candidates: Vec<f64>,
    tol: f64,
    max_iter: usize,
    seed: u64,
    best: BestRecord,
    ranked: Vec<ScanRecord>,
    failures: Vec<ScanFailure>,
}

#[derive(Serialize)]
struct BestRecord {
    settings: ExperimentSettings,
    eigenvalue: f64,
    iterations: usize,
    residual: f64,
    state_file: String,
}

fn cmd_search(ctx: &Ctx) -> Result<()> {
    let (gx, gy) = ctx.config.grids()?;
    let params = ctx.config.params()?;
    let sc = &ctx.config.search;
    let outcome = scan_settings(
        gx,
        gy,
        &sc.time_candidates,
        &params,
        sc.tol,
        sc.max_iter,
        ctx.seed(),
    )?;
    fileio::save_state(&ctx.out("best_state.bin"), &outcome.best.state)?;
    let report = SearchReport {
        time_candidates: sc.time_candidates.clone(),
        tol: sc.tol,
        max_iter: sc.max_iter,
        seed: ctx.seed(),
        best: BestRecord {
            settings: outcome.best_settings,
            eigenvalue: outcome.best.eigenvalue,
            iterations: outcome.best.iterations,
            residual: outcome.best.residual,
            state_file: "best_state.bin".into(),
        },
        ranked: outcome.ranked.clone(),
        failures: outcome.failures.clone(),
    };
    fileio::write_json(&ctx.out("scan.json"), &report)?;
    let unconverged = outcome.ranked.iter().filter(|r| !r.converged).count();
    println!(
        "scanned {} combinations: {} unconverged at tol {:.0e}, {} failed",
        outcome.ranked.len() + outcome.failures.len(),
        unconverged,
        sc.tol,
        outcome.failures.len()
    );
    let s = outcome.best_settings;
    println!(
        "best eigenvalue {:.6} (residual {:.2e} after {} iterations) at \
         alice times ({}, {}), bob times ({}, {})",
        outcome.best.eigenvalue,
        outcome.best.residual,
        outcome.best.iterations,
        s.alice_times.0,
        s.alice_times.1,
        s.bob_times.0,
        s.bob_times.1
    );
    println!("wrote {}", ctx.out("best_state.bin").display());
    Ok(())
}

#[derive(Serialize)]
struct EstimatorReport {
    table: CorrelationTable,
    s: f64,
    stderr_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<EnsembleStats>,
}

impl EstimatorReport {
    fn new(table: CorrelationTable, diagnostics: Option<EnsembleStats>) -> Self {
        let (s, stderr_s) = chsh_value(&table);
        Self {
            table,
            s,
            stderr_s,
            diagnostics,
        }
    }
}

#[derive(Serialize)]
struct RunReport {
    settings: ExperimentSettings,
    n: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    quantum: Option<EstimatorReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    naive: Option<EstimatorReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    collapse: Option<EstimatorReport>,
}

fn cmd_run(ctx: &Ctx) -> Result<()> {
    let psi = ctx.config.state(&ctx.config_dir)?.normalize()?;
    let settings = ctx.config.settings()?;
    let params = ctx.config.params()?;
    let n = ctx.config.experiment.n;
    let seed = ctx.seed();
    let integ = &ctx.config.integrator;
    let choice = ctx.config.experiment.estimator;

    let want = |c: EstimatorChoice| choice == c || choice == EstimatorChoice::All;
    let quantum = want(EstimatorChoice::Quantum)
        .then(|| run_quantum(&psi, &settings, &params))
        .transpose()?
        .map(|t| EstimatorReport::new(t, None));
    // derived seeds keep the two Monte Carlo estimators decoupled and make
    // each independent of which others were requested
    let naive = want(EstimatorChoice::Naive)
        .then(|| run_naive_trajectories(&psi, &settings, &params, n, mix_seed(seed, 1), integ))
        .transpose()?
        .map(|est| EstimatorReport::new(est.table, Some(est.stats)));
    let collapse = want(EstimatorChoice::Collapse)
        .then(|| run_collapse(&psi, &settings, &params, n, mix_seed(seed, 2), integ))
        .transpose()?
        .map(|est| EstimatorReport::new(est.table, Some(est.stats)));

    let report = RunReport {
        settings,
        n,
        seed,
        quantum,
        naive,
        collapse,
    };
    fileio::write_json(&ctx.out("results.json"), &report)?;
    let mut tables: Vec<(&str, &CorrelationTable)> = Vec::new();
    let mut rows: Vec<(&str, &EstimatorReport)> = Vec::new();
    for (name, est) in [
        ("quantum", &report.quantum),
        ("naive", &report.naive),
        ("collapse", &report.collapse),
    ] {
        if let Some(est) = est {
            tables.push((name, &est.table));
            rows.push((name, est));
        }
    }
    fileio::write_tables_csv(&ctx.out("tables.csv"), &tables)?;

    println!("{:<9}  {:>8}  {:>8}", "estimator", "S", "stderr");
    for (name, est) in &rows {
        println!("{:<9}  {:>8.4}  {:>8.4}", name, est.s, est.stderr_s);
    }
    println!("wrote {}", ctx.out("results.json").display());
    Ok(())
}

#[derive(Serialize)]
struct EquivarianceReport {
    time: f64,
    n: usize,
    failed_trajectories: usize,
    ks_a: f64,
    ks_b: f64,
    /// 1% significance Kolmogorov–Smirnov threshold 1.63/√n.
    ks_critical_1pct: f64,
    tv_bins: usize,
    tv: f64,
    diagnostics: EnsembleStats,
}

fn cmd_equivariance(ctx: &Ctx) -> Result<()> {
    let psi = ctx.config.state(&ctx.config_dir)?.normalize()?;
    let eq = &ctx.config.equivariance;
    if eq.n == 0 {
        return Err(Error::InvalidConfig("[equivariance] n must be ≥ 1".into()));
    }
    let params = ctx.config.params()?;
    let integ = &ctx.config.integrator;
    integ.validate()?;
    let t = eq.time;

    let starts = psi.sample_positions(eq.n, ctx.seed());
    let (endpoints, stats) = if t == 0.0 {
        (starts, EnsembleStats::default())
    } else {
        let fields = EvolvedFields::with_guard(&psi, &params, 0.0, EdgeGuard::Track);
        let run = integrate_ensemble(&fields, &starts, 0.0, t, Some(&[]), integ)?;
        let failed = run.stats.failed_trajectories;
        if failed as f64 > eq.n as f64 * 1e-3 {
            return Err(Error::TooManyTrajectoryFailures {
                failed,
                total: eq.n,
            });
        }
        let endpoints = run
            .trajectories
            .iter()
            .filter_map(|r| r.as_ref().ok().map(|traj| traj.end()))
            .collect();
        (endpoints, run.stats)
    };

    // same periodic propagator the guidance fields use; edge mass is
    // reported in the diagnostics, not fatal
    let evolved = free_evolve_unchecked(&psi, t, t, &params);
    let marginal_x = evolved.marginal_x();
    let marginal_y = evolved.marginal_y();
    let mut xs: Vec<f64> = endpoints.iter().map(|q| q.0).collect();
    let mut ys: Vec<f64> = endpoints.iter().map(|q| q.1).collect();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let ks_a = ks_distance(&xs, &evolved.grid_x, &marginal_x);
    let ks_b = ks_distance(&ys, &evolved.grid_y, &marginal_y);
    let tv = tv_distance_binned(&endpoints, &evolved, eq.bins);

    let n_eff = endpoints.len();
    let report = EquivarianceReport {
        time: t,
        n: eq.n,
        failed_trajectories: stats.failed_trajectories,
        ks_a,
        ks_b,
        ks_critical_1pct: 1.63 / (n_eff as f64).sqrt(),
        tv_bins: eq.bins,
        tv,
        diagnostics: stats,
    };
    fileio::write_json(&ctx.out("equivariance.json"), &report)?;

    for (name, grid, marginal, samples) in [
        ("marginal_a.csv", &evolved.grid_x, &marginal_x, &xs),
        ("marginal_b.csv", &evolved.grid_y, &marginal_y, &ys),
    ] {
        let mut counts = vec![0usize; grid.n()];
        for &v in samples.iter() {
            counts[grid.cell_index(v)] += 1;
        }
        let observed: Vec<f64> = counts
            .iter()
            .map(|&c| c as f64 / (n_eff as f64 * grid.dx()))
            .collect();
        let expected: Vec<f64> = marginal.iter().map(|m| m / grid.dx()).collect();
        fileio::write_marginal_csv(&ctx.out(name), grid, &observed, &expected)?;
    }

    println!(
        "t = {t}: KS(A) = {ks_a:.5}, KS(B) = {ks_b:.5} (1% critical {:.5})",
        report.ks_critical_1pct
    );
    println!("TV over {0}×{0} bins: {tv:.5}", eq.bins);
    println!("wrote {}", ctx.out("equivariance.json").display());
    Ok(())
}
