//! A numerical laboratory for two-particle pilot-wave dynamics on a periodic
//! grid: split-free spectral evolution of ψ(x, y), guidance-equation
//! trajectory ensembles, threshold sign measurements with and without an
//! explicit collapse step, and CHSH correlation experiments that compare
//! three estimators of the same four-cell table —
//!
//! * `chsh::run_quantum` — exact two-time correlations from the wave function,
//! * `chsh::run_naive_trajectories` — bare trajectories read twice, with no
//!   back-action on the guiding wave,
//! * `chsh::run_collapse` — the first measurement collapses the wave and the
//!   second stage is guided by the conditional branch.
//!
//! The naive estimator is constrained to |S| ≤ 2 trajectory by trajectory;
//! the collapse estimator tracks the quantum table, which `search` can push
//! to its spectral ceiling of 2√2 by power iteration on the CHSH operator.
//!
//! Everything is deterministic given a master seed: sampling, integration,
//! and reductions are ordered independently of thread scheduling.

pub mod bohm;
pub mod chsh;
pub mod cli;
pub mod config;
pub mod error;
pub mod evolve;
mod fft;
pub mod fileio;
pub mod grid;
pub mod measure;
pub mod search;
pub mod state;
pub mod stats;

pub use error::{Error, Result};
