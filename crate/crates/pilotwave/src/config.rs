//! TOML run configuration: one file drives every subcommand. Unknown keys
//! are rejected so typos fail loudly instead of silently using defaults.

use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bohm::IntegratorConfig;
use crate::chsh::ExperimentSettings;
use crate::error::{Error, Result};
use crate::fileio;
use crate::grid::{Grid1D, PhysicalParams};
use crate::search::{DEFAULT_SEARCH_MAX_ITER, DEFAULT_SEARCH_TOL};
use crate::state::{build_superposition, GaussianSpec, WaveFunction2D};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Omitted → 256×256 cells on [−20, 20)². Ignored (but cross-checked)
    /// when the state comes from a file, which carries its own grids.
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub physics: PhysicsConfig,
    pub state: Option<StateConfig>,
    pub settings: Option<ExperimentSettings>,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub equivariance: EquivarianceConfig,
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            nx: 256,
            ny: 256,
            x_min: -20.0,
            x_max: 20.0,
            y_min: -20.0,
            y_max: 20.0,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<(Grid1D, Grid1D)> {
        Ok((
            Grid1D::from_range(self.nx, self.x_min, self.x_max)?,
            Grid1D::from_range(self.ny, self.y_min, self.y_max)?,
        ))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub hbar: f64,
    pub mass_a: f64,
    pub mass_b: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass_a: 1.0,
            mass_b: 1.0,
        }
    }
}

impl PhysicsConfig {
    pub fn build(&self) -> Result<PhysicalParams> {
        PhysicalParams::new(self.hbar, self.mass_a, self.mass_b)
    }
}

/// Initial state: either a path to a saved state file or an inline
/// Gaussian-superposition spec — exactly one of the two.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub file: Option<PathBuf>,
    pub terms: Option<Vec<TermConfig>>,
    /// Spectral refinement applied after the state is built or loaded: the
    /// same band-limited state resampled on a `refine`× finer grid (power of
    /// two). Costs memory and per-snapshot FFT time but shrinks the
    /// interpolation cell the trajectories see; worth it for states whose
    /// structure sits near the original grid scale.
    #[serde(default = "no_refinement")]
    pub refine: usize,
}

fn no_refinement() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    /// Complex coefficient as [re, im]; defaults to 1.
    #[serde(default = "unit_coefficient")]
    pub coefficient: [f64; 2],
    pub a: GaussianConfig,
    pub b: GaussianConfig,
}

fn unit_coefficient() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianConfig {
    pub center: f64,
    pub width: f64,
    #[serde(default)]
    pub momentum: f64,
}

impl GaussianConfig {
    fn build(&self) -> Result<GaussianSpec> {
        GaussianSpec::new(self.center, self.width, self.momentum)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    Quantum,
    Naive,
    Collapse,
    All,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub estimator: EstimatorChoice,
    /// Trajectories per correlation cell.
    pub n: usize,
    /// Master seed; every derived ensemble seed is mixed from it.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorChoice::All,
            n: 4000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub time_candidates: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            time_candidates: vec![0.0, 0.5, 1.0, 2.0],
            tol: DEFAULT_SEARCH_TOL,
            max_iter: DEFAULT_SEARCH_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquivarianceConfig {
    /// Target time for the sampled-vs-exact comparison.
    pub time: f64,
    pub n: usize,
    /// Bins per axis for the 2D total-variation distance.
    pub bins: usize,
}

impl Default for EquivarianceConfig {
    fn default() -> Self {
        Self {
            // the default σ = 1 packets double their width at t = 2√3
            time: 2.0 * 3.0f64.sqrt(),
            n: 10_000,
            bins: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl RunConfig {
    /// Parse a config file; returns the config and the raw text (snapshotted
    /// verbatim into the run directory).
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&raw)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok((config, raw))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(grid) = &self.grid {
            grid.build()?;
        }
        self.physics.build()?;
        self.integrator.validate()?;
        if let Some(settings) = &self.settings {
            settings.validate()?;
        }
        if let Some(state) = &self.state {
            match (&state.file, &state.terms) {
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidConfig(
                        "[state] must give either `file` or `terms`, not both".into(),
                    ))
                }
                (None, None) => {
                    return Err(Error::InvalidConfig(
                        "[state] must give either `file` or `terms`".into(),
                    ))
                }
                (None, Some(terms)) => {
                    if terms.is_empty() {
                        return Err(Error::InvalidConfig("[state] terms list is empty".into()));
                    }
                    for t in terms {
                        t.a.build()?;
                        t.b.build()?;
                    }
                }
                (Some(_), None) => {}
            }
            if state.refine == 0 || !state.refine.is_power_of_two() {
                return Err(Error::InvalidConfig(format!(
                    "[state] refine must be a power of two, got {}",
                    state.refine
                )));
            }
        }
        if !(self.search.tol > 0.0) || self.search.max_iter == 0 {
            return Err(Error::InvalidConfig(
                "[search] tol must be > 0 and max_iter ≥ 1".into(),
            ));
        }
        if !(self.equivariance.time >= 0.0) || !self.equivariance.time.is_finite() {
            return Err(Error::InvalidConfig(
                "[equivariance] time must be finite and ≥ 0".into(),
            ));
        }
        if self.equivariance.bins == 0 {
            return Err(Error::InvalidConfig("[equivariance] bins must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn grids(&self) -> Result<(Grid1D, Grid1D)> {
        self.grid.unwrap_or_default().build()
    }

    pub fn params(&self) -> Result<PhysicalParams> {
        self.physics.build()
    }

    /// Build the state from inline terms or load it from a file (paths
    /// resolved relative to the config file's directory). File-backed states
    /// bring their own grids; an explicit [grid] section must then agree
    /// (with the grids as stored, before any refinement).
    pub fn state(&self, config_dir: &Path) -> Result<WaveFunction2D> {
        let spec = self.state.as_ref().ok_or_else(|| {
            Error::InvalidConfig("this command needs a [state] section".into())
        })?;
        let psi = if let Some(file) = &spec.file {
            let path = if file.is_absolute() {
                file.clone()
            } else {
                config_dir.join(file)
            };
            let psi = fileio::load_state(&path)?;
            if let Some(grid) = &self.grid {
                let (gx, gy) = grid.build()?;
                if gx != psi.grid_x || gy != psi.grid_y {
                    return Err(Error::InvalidConfig(format!(
                        "[grid] disagrees with the grids stored in {}",
                        path.display()
                    )));
                }
            }
            psi
        } else {
            let terms: Vec<(Complex64, GaussianSpec, GaussianSpec)> = spec
                .terms
                .as_ref()
                .unwrap()
                .iter()
                .map(|t| {
                    Ok((
                        Complex64::new(t.coefficient[0], t.coefficient[1]),
                        t.a.build()?,
                        t.b.build()?,
                    ))
                })
                .collect::<Result<_>>()?;
            let (gx, gy) = self.grids()?;
            build_superposition(gx, gy, &terms, &self.params()?)?
        };
        if spec.refine > 1 {
            return crate::evolve::refine(&psi, spec.refine);
        }
        Ok(psi)
    }

    pub fn settings(&self) -> Result<ExperimentSettings> {
        self.settings.ok_or_else(|| {
            Error::InvalidConfig("this command needs a [settings] section".into())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
[grid]
nx = 128
ny = 128
x_min = -14.0
x_max = 14.0
y_min = -14.0
y_max = 14.0

[physics]
hbar = 1.0
mass_a = 1.0
mass_b = 2.0

[[state.terms]]
coefficient = [1.0, 0.0]
a = { center = 2.5, width = 1.0 }
b = { center = -2.5, width = 1.0, momentum = 0.5 }

[[state.terms]]
a = { center = -2.5, width = 1.0 }
b = { center = 2.5, width = 1.0 }

[settings]
alice_times = [0.5, 1.5]
bob_times = [0.5, 1.5]
alice_threshold = 0.0
bob_threshold = 0.0

[experiment]
estimator = "collapse"
n = 2000
seed = 11

[integrator]
max_step = 0.02

[search]
time_candidates = [0.0, 1.0]

[equivariance]
time = 1.0
n = 500

[output]
dir = "runs/demo"
"#;

    #[test]
    fn full_config_parses_and_builds() {
        let config: RunConfig = toml::from_str(FULL).unwrap();
        config.validate().unwrap();
        let (gx, gy) = config.grids().unwrap();
        assert_eq!(gx.n(), 128);
        assert_eq!(gy.n(), 128);
        let params = config.params().unwrap();
        assert_eq!(params.mass_b, 2.0);
        assert_eq!(config.experiment.estimator, EstimatorChoice::Collapse);
        assert_eq!(config.experiment.n, 2000);
        assert_eq!(config.integrator.max_step, 0.02);
        // untouched integrator fields keep their defaults
        assert_eq!(config.integrator.rel_tol, IntegratorConfig::default().rel_tol);
        let psi = config.state(Path::new(".")).unwrap();
        assert!((psi.norm_squared() - 1.0).abs() < 1e-12);
        let settings = config.settings().unwrap();
        assert_eq!(settings.alice_times, (0.5, 1.5));
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let config: RunConfig = toml::from_str("").unwrap();
        config.validate().unwrap();
        let (gx, _) = config.grids().unwrap();
        assert_eq!(gx.n(), 256);
        assert_eq!(config.experiment.n, 4000);
        assert_eq!(config.search.time_candidates, vec![0.0, 0.5, 1.0, 2.0]);
        assert!(config.settings().is_err());
        assert!(config.state(Path::new(".")).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[grid]\nnnx = 12\n").is_err());
        assert!(toml::from_str::<RunConfig>("[experiment]\nestimator = \"fancy\"\n").is_err());
    }

    #[test]
    fn state_section_wants_exactly_one_source() {
        let both = r#"
[state]
file = "x.state"
[[state.terms]]
a = { center = 0.0, width = 1.0 }
b = { center = 0.0, width = 1.0 }
"#;
        let config: RunConfig = toml::from_str(both).unwrap();
        assert!(config.validate().is_err());
        let neither: RunConfig = toml::from_str("[state]\n").unwrap();
        assert!(neither.validate().is_err());
    }

    #[test]
    fn state_refinement_resamples_the_grid() {
        let cfg = r#"
[grid]
nx = 32
ny = 32
x_min = -8.0
x_max = 8.0
y_min = -8.0
y_max = 8.0

[state]
refine = 2

[[state.terms]]
a = { center = 0.0, width = 1.0 }
b = { center = 0.0, width = 1.0 }
"#;
        let config: RunConfig = toml::from_str(cfg).unwrap();
        config.validate().unwrap();
        let psi = config.state(Path::new(".")).unwrap();
        assert_eq!(psi.nx(), 64);
        assert_eq!(psi.ny(), 64);
        assert!((psi.norm_squared() - 1.0).abs() < 1e-12);

        let bad: RunConfig = toml::from_str("[state]\nfile = \"x.state\"\nrefine = 3\n").unwrap();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn invalid_numbers_fail_validation() {
        let bad: RunConfig = toml::from_str("[integrator]\nmax_step = 0.0\n").unwrap();
        assert!(bad.validate().is_err());
        let bad: RunConfig = toml::from_str("[physics]\nmass_a = -1.0\n").unwrap();
        assert!(bad.validate().is_err());
    }
}
