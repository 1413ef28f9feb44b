//! The central comparison: three estimators of the four two-time sign
//! correlations entering S = |E₁₁ + E₁₂ + E₂₁ − E₂₂|.
//!
//! `run_quantum` evaluates the correlations exactly from the wave function.
//! `run_naive_trajectories` treats the bare trajectory ensemble as a local
//! hidden-variable model: every E_ab is read off the *same* trajectories, so
//! each sample contributes a₁(b₁+b₂) + a₂(b₁−b₂) = ±2 and the estimate can
//! never exceed 2 by more than Monte Carlo noise. `run_collapse` instead
//! draws a fresh ensemble per setting pair, reads the chronologically first
//! outcome from the particle position, projects the wave function onto that
//! outcome, and lets the other particle finish under the collapsed state.
//!
//! The collapse step leans on the grid convention from `measure`: with
//! thresholds on grid points a trajectory's own cell always survives its own
//! outcome's projection, and the surviving positions are distributed exactly
//! as |collapsed ψ|², so the second stage starts in equilibrium again.

use serde::{Deserialize, Serialize};

use crate::bohm::{
    integrate_ensemble, EdgeGuard, EnsembleStats, EvolvedFields, IntegratorConfig,
};
use crate::error::{Error, Result};
use crate::evolve::free_evolve_unchecked;
use crate::grid::{Axis, PhysicalParams};
use crate::measure::{
    collapse, outcome_probability, outcome_sign, quantum_two_time_correlation, SignObservable,
};
use crate::state::WaveFunction2D;

/// Two measurement times per side plus the position thresholds defining the
/// ±1 outcomes. Times are the two "settings" each party chooses between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub alice_times: (f64, f64),
    pub bob_times: (f64, f64),
    pub alice_threshold: f64,
    pub bob_threshold: f64,
}

impl ExperimentSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("alice_times.0", self.alice_times.0),
            ("alice_times.1", self.alice_times.1),
            ("bob_times.0", self.bob_times.0),
            ("bob_times.1", self.bob_times.1),
        ] {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be a finite time ≥ 0, got {t}"
                )));
            }
        }
        if !self.alice_threshold.is_finite() || !self.bob_threshold.is_finite() {
            return Err(Error::InvalidParameter("thresholds must be finite".into()));
        }
        Ok(())
    }

    /// Alice's observable for setting choice 0 or 1.
    pub fn alice_observable(&self, choice: usize) -> SignObservable {
        debug_assert!(choice < 2);
        SignObservable {
            axis: Axis::A,
            time: if choice == 0 {
                self.alice_times.0
            } else {
                self.alice_times.1
            },
            threshold: self.alice_threshold,
        }
    }

    pub fn bob_observable(&self, choice: usize) -> SignObservable {
        debug_assert!(choice < 2);
        SignObservable {
            axis: Axis::B,
            time: if choice == 0 {
                self.bob_times.0
            } else {
                self.bob_times.1
            },
            threshold: self.bob_threshold,
        }
    }

    pub fn all_times(&self) -> [f64; 4] {
        [
            self.alice_times.0,
            self.alice_times.1,
            self.bob_times.0,
            self.bob_times.1,
        ]
    }

    pub fn max_time(&self) -> f64 {
        self.all_times()
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// The four correlations E[a][b] for setting choices a, b ∈ {0, 1}, with
/// standard errors and single-party marginals P(+1). Marginals are stored
/// per cell so no-signalling (independence from the other party's setting)
/// is checkable rather than assumed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    #[serde(rename = "E")]
    pub e: [[f64; 2]; 2],
    pub stderr: [[f64; 2]; 2],
    #[serde(rename = "marginal_A")]
    pub marginal_a: [[f64; 2]; 2],
    #[serde(rename = "marginal_B")]
    pub marginal_b: [[f64; 2]; 2],
    /// Samples requested per cell; 0 for exact quantum tables. Failed
    /// trajectories (at most 0.1%, enforced) are dropped from the averages.
    pub n_samples: usize,
}

impl CorrelationTable {
    fn zeros() -> Self {
        Self {
            e: [[0.0; 2]; 2],
            stderr: [[0.0; 2]; 2],
            marginal_a: [[0.0; 2]; 2],
            marginal_b: [[0.0; 2]; 2],
            n_samples: 0,
        }
    }
}

/// A Monte Carlo correlation table plus integrator diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleEstimate {
    pub table: CorrelationTable,
    pub stats: EnsembleStats,
}

/// S = |E₁₁ + E₁₂ + E₂₁ − E₂₂| and its standard error (in quadrature).
pub fn chsh_value(table: &CorrelationTable) -> (f64, f64) {
    let s = (table.e[0][0] + table.e[0][1] + table.e[1][0] - table.e[1][1]).abs();
    let var: f64 = table.stderr.iter().flatten().map(|se| se * se).sum();
    (s, var.sqrt())
}

/// Exact quantum correlation table for the given settings.
pub fn run_quantum(
    psi0: &WaveFunction2D,
    settings: &ExperimentSettings,
    params: &PhysicalParams,
) -> Result<CorrelationTable> {
    settings.validate()?;
    let mut table = CorrelationTable::zeros();
    let pa = [
        outcome_probability(psi0, &settings.alice_observable(0), params),
        outcome_probability(psi0, &settings.alice_observable(1), params),
    ];
    let pb = [
        outcome_probability(psi0, &settings.bob_observable(0), params),
        outcome_probability(psi0, &settings.bob_observable(1), params),
    ];
    for a in 0..2 {
        for b in 0..2 {
            table.e[a][b] = quantum_two_time_correlation(
                psi0,
                &settings.alice_observable(a),
                &settings.bob_observable(b),
                params,
            )?;
            table.marginal_a[a][b] = pa[a];
            table.marginal_b[a][b] = pb[b];
        }
    }
    Ok(table)
}

/// splitmix64 finalizer; decorrelates derived seeds (per cell, per scan
/// entry, …) from a master seed.
pub(crate) fn mix_seed(master: u64, salt: u64) -> u64 {
    let mut z = master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > total as f64 * 1e-3 {
        return Err(Error::TooManyTrajectoryFailures { failed, total });
    }
    Ok(())
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    debug_assert!(xs.len() >= 2);
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample positions from |ψ₀|², integrate them once through the uncollapsed
/// guidance field, and read every E_ab from that single shared ensemble.
/// Whatever the settings, each trajectory supplies one value of
/// a₁(b₁+b₂) + a₂(b₁−b₂) ∈ {−2, +2}, so the CHSH estimate is bounded by 2.
pub fn run_naive_trajectories(
    psi0: &WaveFunction2D,
    settings: &ExperimentSettings,
    params: &PhysicalParams,
    n: usize,
    seed: u64,
    config: &IntegratorConfig,
) -> Result<EnsembleEstimate> {
    settings.validate()?;
    config.validate()?;
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 trajectories, got {n}"
        )));
    }
    let starts = psi0.sample_positions(n, seed);
    let times = settings.all_times();
    // torus-honest: searched eigenstates carry real edge mass, which is
    // reported in the stats rather than fatal
    let fields = EvolvedFields::with_guard(psi0, params, 0.0, EdgeGuard::Track);
    let run = integrate_ensemble(&fields, &starts, 0.0, settings.max_time(), Some(&times), config)?;
    check_failures(run.stats.failed_trajectories, n)?;

    // outcome signs per trajectory and setting choice
    let mut sa: [Vec<i8>; 2] = [Vec::new(), Vec::new()];
    let mut sb: [Vec<i8>; 2] = [Vec::new(), Vec::new()];
    for traj in run.trajectories.iter().filter_map(|r| r.as_ref().ok()) {
        for choice in 0..2 {
            let oa = settings.alice_observable(choice);
            let (x, _) = traj
                .position_at(oa.time)
                .expect("measurement times are lattice sample points");
            sa[choice].push(outcome_sign(x, oa.threshold));
            let ob = settings.bob_observable(choice);
            let (_, y) = traj
                .position_at(ob.time)
                .expect("measurement times are lattice sample points");
            sb[choice].push(outcome_sign(y, ob.threshold));
        }
    }

    let valid = sa[0].len();
    let mut table = CorrelationTable::zeros();
    table.n_samples = n;
    for a in 0..2 {
        let frac_a =
            sa[a].iter().filter(|&&s| s > 0).count() as f64 / valid as f64;
        for b in 0..2 {
            let products: Vec<f64> = sa[a]
                .iter()
                .zip(&sb[b])
                .map(|(&x, &y)| f64::from(x * y))
                .collect();
            let (mean, se) = mean_and_stderr(&products);
            table.e[a][b] = mean;
            table.stderr[a][b] = se;
            table.marginal_a[a][b] = frac_a;
            table.marginal_b[a][b] =
                sb[b].iter().filter(|&&s| s > 0).count() as f64 / valid as f64;
        }
    }
    Ok(EnsembleEstimate {
        table,
        stats: run.stats,
    })
}

struct CellEstimate {
    e: f64,
    stderr: f64,
    marginal_a: f64,
    marginal_b: f64,
    stats: EnsembleStats,
}

/// One setting pair of the collapse experiment. The chronologically first
/// measurement is read from the trajectory position, the state is projected
/// onto that outcome, and the trajectories continue under the collapsed
/// state's guidance field to the second measurement. `alice_first_on_tie`
/// picks who collapses first when both measure at the same instant.
fn run_collapse_cell(
    psi0: &WaveFunction2D,
    fields0: &EvolvedFields,
    params: &PhysicalParams,
    obs_a: SignObservable,
    obs_b: SignObservable,
    alice_first_on_tie: bool,
    n: usize,
    seed: u64,
    config: &IntegratorConfig,
) -> Result<CellEstimate> {
    let a_first =
        obs_a.time < obs_b.time || (obs_a.time == obs_b.time && alice_first_on_tie);
    let (first, second) = if a_first { (obs_a, obs_b) } else { (obs_b, obs_a) };

    let starts = psi0.sample_positions(n, seed);
    let run1 = integrate_ensemble(fields0, &starts, 0.0, first.time, Some(&[first.time]), config)?;
    let mut stats = run1.stats;

    let coord = |q: (f64, f64), axis: Axis| match axis {
        Axis::A => q.0,
        Axis::B => q.1,
    };
    let mid: Vec<Option<(f64, f64)>> = run1
        .trajectories
        .iter()
        .map(|r| {
            r.as_ref().ok().map(|traj| {
                traj.position_at(first.time)
                    .expect("first measurement time is a lattice sample point")
            })
        })
        .collect();
    let first_sign: Vec<Option<i8>> = mid
        .iter()
        .map(|m| m.map(|q| outcome_sign(coord(q, first.axis), first.threshold)))
        .collect();

    // state at the first measurement instant; both particles have evolved in
    // real time up to it. Same periodic propagator as the guidance fields —
    // unchecked so torus states (searched eigenstates) pass through.
    let at_t1 = free_evolve_unchecked(psi0, first.time, first.time, params);

    let mut second_sign: Vec<Option<i8>> = vec![None; n];
    for outcome in [1i8, -1] {
        let idx: Vec<usize> = (0..n).filter(|&i| first_sign[i] == Some(outcome)).collect();
        if idx.is_empty() {
            continue;
        }
        let (branch, _) = collapse(&at_t1, &first, outcome)?;
        // sharp projection rings at high momenta, so the branch field is
        // torus-honest rather than edge-guarded; worst edge mass is reported
        let branch_fields =
            EvolvedFields::with_guard(&branch, params, first.time, EdgeGuard::Track);
        let starts2: Vec<(f64, f64)> = idx.iter().map(|&i| mid[i].unwrap()).collect();
        let run2 = integrate_ensemble(
            &branch_fields,
            &starts2,
            first.time,
            second.time,
            Some(&[second.time]),
            config,
        )?;
        stats.merge(&run2.stats);
        stats.peak_boundary_mass = stats.peak_boundary_mass.max(branch_fields.peak_edge_mass());
        for (&slot, r) in idx.iter().zip(&run2.trajectories) {
            second_sign[slot] = r.as_ref().ok().map(|traj| {
                let q = traj
                    .position_at(second.time)
                    .expect("second measurement time is a lattice sample point");
                outcome_sign(coord(q, second.axis), second.threshold)
            });
        }
    }

    let mut products = Vec::with_capacity(n);
    let (mut plus_a, mut plus_b) = (0usize, 0usize);
    for i in 0..n {
        let (Some(s1), Some(s2)) = (first_sign[i], second_sign[i]) else {
            continue;
        };
        let (s_alice, s_bob) = if a_first { (s1, s2) } else { (s2, s1) };
        if s_alice > 0 {
            plus_a += 1;
        }
        if s_bob > 0 {
            plus_b += 1;
        }
        products.push(f64::from(s_alice * s_bob));
    }
    check_failures(n - products.len(), n)?;
    let (mean, se) = mean_and_stderr(&products);
    Ok(CellEstimate {
        e: mean,
        stderr: se,
        marginal_a: plus_a as f64 / products.len() as f64,
        marginal_b: plus_b as f64 / products.len() as f64,
        stats,
    })
}

/// Collapse-mediated experiment: a fresh equilibrium ensemble per setting
/// pair (as in a real experiment, where each pair is a separate run), each
/// measured sequentially with projection after the first outcome. Ties go to
/// Alice; order does not affect the statistics, which the tests check.
pub fn run_collapse(
    psi0: &WaveFunction2D,
    settings: &ExperimentSettings,
    params: &PhysicalParams,
    n: usize,
    seed: u64,
    config: &IntegratorConfig,
) -> Result<EnsembleEstimate> {
    settings.validate()?;
    config.validate()?;
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 trajectories per cell, got {n}"
        )));
    }
    let fields0 = EvolvedFields::with_guard(psi0, params, 0.0, EdgeGuard::Track);
    let mut table = CorrelationTable::zeros();
    table.n_samples = n;
    let mut stats = EnsembleStats::default();
    for a in 0..2 {
        for b in 0..2 {
            let cell = run_collapse_cell(
                psi0,
                &fields0,
                params,
                settings.alice_observable(a),
                settings.bob_observable(b),
                true,
                n,
                mix_seed(seed, (2 * a + b) as u64 + 1),
                config,
            )?;
            table.e[a][b] = cell.e;
            table.stderr[a][b] = cell.stderr;
            table.marginal_a[a][b] = cell.marginal_a;
            table.marginal_b[a][b] = cell.marginal_b;
            stats.merge(&cell.stats);
        }
    }
    Ok(EnsembleEstimate { table, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::state::{build_superposition, GaussianSpec};
    use rustfft::num_complex::Complex64;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    fn test_config() -> IntegratorConfig {
        IntegratorConfig {
            max_step: 0.05,
            rel_tol: 1e-5,
            abs_tol: 1e-7,
            ..IntegratorConfig::default()
        }
    }

    /// 128-point grid with the threshold 0 on a grid point; cheap enough for
    /// collapse tests, large enough for packets at ±2.5.
    fn small_grid() -> Grid1D {
        Grid1D::from_range(128, -14.0, 14.0).unwrap()
    }

    fn entangled(g: Grid1D) -> WaveFunction2D {
        build_superposition(
            g,
            g,
            &[
                (
                    one(),
                    GaussianSpec::new(2.5, 1.0, 0.0).unwrap(),
                    GaussianSpec::new(-2.5, 1.0, 0.0).unwrap(),
                ),
                (
                    one(),
                    GaussianSpec::new(-2.5, 1.0, 0.0).unwrap(),
                    GaussianSpec::new(2.5, 1.0, 0.0).unwrap(),
                ),
            ],
            &PhysicalParams::natural(),
        )
        .unwrap()
    }

    fn drifting_product(g: Grid1D) -> WaveFunction2D {
        build_superposition(
            g,
            g,
            &[(
                one(),
                GaussianSpec::new(-1.5, 0.8, 1.2).unwrap(),
                GaussianSpec::new(1.0, 0.7, -0.8).unwrap(),
            )],
            &PhysicalParams::natural(),
        )
        .unwrap()
    }

    fn settings(at: (f64, f64), bt: (f64, f64)) -> ExperimentSettings {
        ExperimentSettings {
            alice_times: at,
            bob_times: bt,
            alice_threshold: 0.0,
            bob_threshold: 0.0,
        }
    }

    #[test]
    fn chsh_value_assembles_the_right_combination() {
        let mut t = CorrelationTable::zeros();
        t.e = [[0.5, 0.5], [0.5, -0.5]];
        t.stderr = [[0.01; 2]; 2];
        let (s, se) = chsh_value(&t);
        assert!((s - 2.0).abs() < 1e-15);
        assert!((se - 0.02).abs() < 1e-15);
        t.e = [[-1.0, -1.0], [-1.0, 1.0]];
        assert!((chsh_value(&t).0 - 4.0).abs() < 1e-15);
    }

    #[test]
    fn quantum_product_state_stays_below_two() {
        let psi = drifting_product(small_grid());
        let table = run_quantum(
            &psi,
            &settings((0.3, 0.9), (0.6, 1.2)),
            &PhysicalParams::natural(),
        )
        .unwrap();
        // product states factorize, so S = |e_a1(e_b1+e_b2) + e_a2(e_b1−e_b2)| ≤ 2
        let (s, _) = chsh_value(&table);
        assert!(s <= 2.0 + 1e-10, "S {s}");
        for a in 0..2 {
            let ea = 2.0 * table.marginal_a[a][0] - 1.0;
            for b in 0..2 {
                let eb = 2.0 * table.marginal_b[a][b] - 1.0;
                assert!((table.e[a][b] - ea * eb).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_settings_collapse_to_a_single_correlation() {
        let psi = entangled(small_grid());
        let p = PhysicalParams::natural();
        let qt = run_quantum(&psi, &settings((1.0, 1.0), (1.0, 1.0)), &p).unwrap();
        assert_eq!(qt.e[0][0], qt.e[0][1]);
        assert_eq!(qt.e[0][0], qt.e[1][0]);
        assert_eq!(qt.e[0][0], qt.e[1][1]);
        assert!((chsh_value(&qt).0 - 2.0 * qt.e[0][0].abs()).abs() < 1e-12);

        let est = run_naive_trajectories(
            &psi,
            &settings((1.0, 1.0), (1.0, 1.0)),
            &p,
            300,
            7,
            &test_config(),
        )
        .unwrap();
        // same ensemble, same times: the four estimates must agree bit for bit
        assert_eq!(est.table.e[0][0], est.table.e[1][1]);
        assert_eq!(est.table.e[0][1], est.table.e[1][0]);
        assert_eq!(est.table.e[0][0], est.table.e[0][1]);
    }

    #[test]
    fn naive_chsh_never_exceeds_two() {
        // the shared-ensemble estimator is a local hidden-variable model by
        // construction; check the per-sample bound survives aggregation
        let psi = entangled(small_grid());
        let est = run_naive_trajectories(
            &psi,
            &settings((0.2, 0.9), (0.45, 0.7)),
            &PhysicalParams::natural(),
            400,
            11,
            &test_config(),
        )
        .unwrap();
        let (s, _) = chsh_value(&est.table);
        assert!(s <= 2.0 + 1e-12, "S {s}");
    }

    #[test]
    fn naive_matches_quantum_on_a_product_state() {
        let psi = drifting_product(small_grid());
        let p = PhysicalParams::natural();
        let st = settings((0.3, 0.9), (0.6, 1.2));
        let qt = run_quantum(&psi, &st, &p).unwrap();
        let est = run_naive_trajectories(&psi, &st, &p, 2000, 42, &test_config()).unwrap();
        assert_eq!(est.stats.failed_trajectories, 0);
        for a in 0..2 {
            for b in 0..2 {
                let d = (est.table.e[a][b] - qt.e[a][b]).abs();
                let tol = 3.0 * est.table.stderr[a][b];
                assert!(d <= tol, "cell ({a},{b}): |Δ| {d} > {tol}");
            }
        }
    }

    #[test]
    fn collapse_matches_quantum_on_an_entangled_state() {
        let psi = entangled(small_grid());
        let p = PhysicalParams::natural();
        let st = settings((0.0, 0.8), (0.4, 1.2));
        let qt = run_quantum(&psi, &st, &p).unwrap();
        let est = run_collapse(&psi, &st, &p, 1200, 2024, &test_config()).unwrap();
        let n = est.table.n_samples as f64;
        for a in 0..2 {
            for b in 0..2 {
                let d = (est.table.e[a][b] - qt.e[a][b]).abs();
                let tol = 3.0 * est.table.stderr[a][b];
                assert!(d <= tol, "E ({a},{b}): |Δ| {d} > {tol}");
                let pb = qt.marginal_b[a][b];
                let se = (pb * (1.0 - pb) / n).sqrt();
                let dm = (est.table.marginal_b[a][b] - pb).abs();
                assert!(dm <= 3.0 * se, "marginal_B ({a},{b}): |Δ| {dm} > {}", 3.0 * se);
            }
        }
    }

    #[test]
    fn collapse_agrees_with_naive_on_a_product_state() {
        // without entanglement the collapse step is statistically inert
        let psi = drifting_product(small_grid());
        let p = PhysicalParams::natural();
        let st = settings((0.2, 0.6), (0.4, 0.8));
        let naive = run_naive_trajectories(&psi, &st, &p, 1200, 5, &test_config()).unwrap();
        let coll = run_collapse(&psi, &st, &p, 1200, 6, &test_config()).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let d = (naive.table.e[a][b] - coll.table.e[a][b]).abs();
                let pooled = (naive.table.stderr[a][b].powi(2)
                    + coll.table.stderr[a][b].powi(2))
                .sqrt();
                assert!(d <= 3.0 * pooled, "cell ({a},{b}): |Δ| {d} > {}", 3.0 * pooled);
            }
        }
    }

    #[test]
    fn tie_break_order_does_not_change_the_statistics() {
        let psi = entangled(small_grid());
        let p = PhysicalParams::natural();
        let fields0 = EvolvedFields::new(&psi, &p, 0.0);
        let obs_a = SignObservable::new(Axis::A, 0.6, 0.0).unwrap();
        let obs_b = SignObservable::new(Axis::B, 0.6, 0.0).unwrap();
        let cfg = test_config();
        let a_first =
            run_collapse_cell(&psi, &fields0, &p, obs_a, obs_b, true, 900, 31, &cfg).unwrap();
        let b_first =
            run_collapse_cell(&psi, &fields0, &p, obs_a, obs_b, false, 900, 31, &cfg).unwrap();
        let d = (a_first.e - b_first.e).abs();
        let pooled = (a_first.stderr.powi(2) + b_first.stderr.powi(2)).sqrt();
        assert!(d <= 3.0 * pooled, "|Δ| {d} > {}", 3.0 * pooled);
    }

    #[test]
    fn runs_are_reproducible() {
        let psi = entangled(small_grid());
        let p = PhysicalParams::natural();
        let st = settings((0.2, 0.4), (0.2, 0.4));
        let cfg = test_config();
        let one = run_naive_trajectories(&psi, &st, &p, 200, 9, &cfg).unwrap();
        let two = run_naive_trajectories(&psi, &st, &p, 200, 9, &cfg).unwrap();
        assert_eq!(one.table, two.table);
        let three = run_collapse(&psi, &st, &p, 200, 9, &cfg).unwrap();
        let four = run_collapse(&psi, &st, &p, 200, 9, &cfg).unwrap();
        assert_eq!(three.table, four.table);
    }
}
