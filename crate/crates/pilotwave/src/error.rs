//! Error types shared across the crate.

use crate::bohm::Trajectory;
use crate::grid::Axis;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("state has zero norm")]
    ZeroNorm,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "boundary mass {mass:.3e} on the {axis} axis exceeds {limit:.1e}; \
         the wave packet reached the periodic edge"
    )]
    BoundaryMass { axis: Axis, mass: f64, limit: f64 },

    #[error("point ({x}, {y}) lies outside the grid domain")]
    OutOfDomain { x: f64, y: f64 },

    #[error("trajectory produced a non-finite position at t = {t}")]
    TrajectoryDiverged { t: f64, partial: Box<Trajectory> },

    #[error("step size underflow at t = {t} (h = {h:.3e}); velocity field too rough")]
    StepUnderflow { t: f64, h: f64 },

    #[error("{failed} of {total} trajectories failed, above the 0.1% budget")]
    TooManyTrajectoryFailures { failed: usize, total: usize },

    #[error("collapse branch has probability {probability:.3e}, below 1e-12")]
    ZeroProbabilityBranch { probability: f64 },

    #[error("power iteration did not converge in {iterations} steps (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("no non-degenerate settings combinations in the candidate list")]
    EmptyScan,

    #[error("all {0} scan combinations failed")]
    AllScanFailed(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed state file: {0}")]
    MalformedStateFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code class: 1 for usage/config errors, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidGrid(_)
            | Error::InvalidParameter(_)
            | Error::Io(_)
            | Error::MalformedStateFile(_)
            | Error::EmptyScan => 1,
            _ => 2,
        }
    }
}
