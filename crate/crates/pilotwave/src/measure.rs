//! Dichotomic sign-of-position observables: Born-rule outcome probabilities,
//! Heisenberg-picture two-time correlations, and projective collapse.
//!
//! The sign convention is pinned once and reused everywhere: a continuum
//! position counts as +1 iff it is ≥ the threshold, and a grid cell
//! [x_j, x_j + dx) counts as +1 iff its left edge x_j is. When the threshold
//! coincides with a grid point (the default: threshold 0 on the default
//! grid), no cell straddles it, so trajectory readouts, half-plane sums and
//! collapse projections are exactly consistent with one another.
//!
//! Expectation values here are computed with the periodic propagator as-is,
//! without the edge-mass guard: they are statements about the discretized
//! (torus) system, and must stay exactly consistent with the operator
//! algebra acting on arbitrary torus states — including post-collapse states,
//! whose sharp cut always scatters a little mass to high momenta. The guard
//! belongs to state preparation and trajectory propagation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::free_evolve_unchecked;
use crate::grid::{Axis, Grid1D, PhysicalParams};
use crate::state::WaveFunction2D;

/// Sign-of-position measurement on one particle at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignObservable {
    pub axis: Axis,
    pub time: f64,
    pub threshold: f64,
}

impl SignObservable {
    pub fn new(axis: Axis, time: f64, threshold: f64) -> Result<Self> {
        if !(time >= 0.0) || !time.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "measurement time must be ≥ 0, got {time}"
            )));
        }
        if !threshold.is_finite() {
            return Err(Error::InvalidParameter("threshold must be finite".into()));
        }
        Ok(Self {
            axis,
            time,
            threshold,
        })
    }
}

/// +1 if position ≥ threshold, else −1. Ties go to +1.
pub fn outcome_sign(position: f64, threshold: f64) -> i8 {
    if position >= threshold {
        1
    } else {
        -1
    }
}

/// Per-cell outcome signs along one axis.
pub(crate) fn sign_vector(grid: &Grid1D, threshold: f64) -> Vec<f64> {
    (0..grid.n())
        .map(|j| outcome_sign(grid.point(j), threshold) as f64)
        .collect()
}

/// Born probability of outcome +1: evolve the observable's axis from the
/// reference time 0 to its measurement time, then sum |ψ|² over the cells on
/// the positive side. The other particle's evolution cannot change this
/// marginal and is skipped.
pub fn outcome_probability(
    psi: &WaveFunction2D,
    obs: &SignObservable,
    params: &PhysicalParams,
) -> f64 {
    let evolved = match obs.axis {
        Axis::A => free_evolve_unchecked(psi, obs.time, 0.0, params),
        Axis::B => free_evolve_unchecked(psi, 0.0, obs.time, params),
    };
    let grid = match obs.axis {
        Axis::A => &evolved.grid_x,
        Axis::B => &evolved.grid_y,
    };
    let marginal = evolved.marginal(obs.axis);
    let p: f64 = marginal
        .iter()
        .enumerate()
        .filter(|(j, _)| outcome_sign(grid.point(*j), obs.threshold) > 0)
        .map(|(_, m)| m)
        .sum();
    p.clamp(0.0, 1.0)
}

/// Project onto the half-plane of the given outcome on the observable's axis
/// and renormalize. `psi` must already be the state at the measurement
/// instant; the observable's time is not applied here. Returns the collapsed
/// state and the pre-collapse probability of that outcome.
pub fn collapse(
    psi: &WaveFunction2D,
    obs: &SignObservable,
    outcome: i8,
) -> Result<(WaveFunction2D, f64)> {
    debug_assert!(outcome == 1 || outcome == -1);
    let mut projected = psi.clone();
    let (nx, ny) = (psi.nx(), psi.ny());
    match obs.axis {
        Axis::A => {
            for jx in 0..nx {
                if outcome_sign(psi.grid_x.point(jx), obs.threshold) != outcome {
                    for v in &mut projected.amplitudes[jx * ny..(jx + 1) * ny] {
                        *v = Default::default();
                    }
                }
            }
        }
        Axis::B => {
            let keep: Vec<bool> = (0..ny)
                .map(|jy| outcome_sign(psi.grid_y.point(jy), obs.threshold) == outcome)
                .collect();
            for jx in 0..nx {
                for jy in 0..ny {
                    if !keep[jy] {
                        projected.amplitudes[jx * ny + jy] = Default::default();
                    }
                }
            }
        }
    }
    let probability = projected.norm_squared() / psi.norm_squared();
    if probability <= 1e-12 {
        return Err(Error::ZeroProbabilityBranch { probability });
    }
    Ok((projected.normalize()?, probability))
}

/// Two-time correlation E(AB) = ⟨sign_A(t_A) · sign_B(t_B)⟩ for the free
/// bipartite system. The Heisenberg observables of distinct particles
/// commute, so evolving each axis by its own duration and summing
/// sign·sign·|ψ|² over the grid is exact.
pub fn quantum_two_time_correlation(
    psi0: &WaveFunction2D,
    obs_a: &SignObservable,
    obs_b: &SignObservable,
    params: &PhysicalParams,
) -> Result<f64> {
    if obs_a.axis != Axis::A || obs_b.axis != Axis::B {
        return Err(Error::InvalidParameter(
            "two-time correlation wants one observable per particle, A first".into(),
        ));
    }
    let evolved = free_evolve_unchecked(psi0, obs_a.time, obs_b.time, params);
    let sa = sign_vector(&evolved.grid_x, obs_a.threshold);
    let sb = sign_vector(&evolved.grid_y, obs_b.threshold);
    let (nx, ny) = (evolved.nx(), evolved.ny());
    let w = evolved.cell_area();
    let mut e = 0.0;
    for jx in 0..nx {
        let mut row = 0.0;
        for jy in 0..ny {
            row += sb[jy] * evolved.amplitudes[jx * ny + jy].norm_sqr();
        }
        e += sa[jx] * row;
    }
    Ok((e * w).clamp(-1.0, 1.0))
}
