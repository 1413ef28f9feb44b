//! Distribution-comparison statistics for equivariance diagnostics.

use crate::grid::Grid1D;
use crate::state::WaveFunction2D;

/// Kolmogorov–Smirnov distance between sorted samples and the exact
/// distribution with mass `marginal[j]` spread uniformly over the cell
/// [x_j, x_j + dx) — the same continuum convention the sampler's cell jitter
/// uses, so the reference CDF is piecewise linear and continuous.
pub fn ks_distance(sorted_samples: &[f64], grid: &Grid1D, marginal: &[f64]) -> f64 {
    assert!(!sorted_samples.is_empty());
    assert_eq!(marginal.len(), grid.n());
    let total: f64 = marginal.iter().sum();
    let mut cum = Vec::with_capacity(grid.n() + 1);
    cum.push(0.0);
    for m in marginal {
        cum.push(cum.last().unwrap() + m / total);
    }
    let cdf = |x: f64| -> f64 {
        if x <= grid.x_min() {
            return 0.0;
        }
        let f = (x - grid.x_min()) / grid.dx();
        if f >= grid.n() as f64 {
            return 1.0;
        }
        let j = f as usize;
        let u = f - j as f64;
        cum[j] + u * (cum[j + 1] - cum[j])
    };
    let n = sorted_samples.len() as f64;
    let mut ks = 0.0f64;
    for (i, &x) in sorted_samples.iter().enumerate() {
        let f = cdf(x);
        ks = ks.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    ks
}

/// Total-variation distance between the empirical sample histogram and the
/// exact |ψ|² mass, both rebinned to bins × bins macro-cells.
pub fn tv_distance_binned(samples: &[(f64, f64)], psi: &WaveFunction2D, bins: usize) -> f64 {
    assert!(psi.nx() % bins == 0 && psi.ny() % bins == 0);
    let cx = psi.nx() / bins;
    let cy = psi.ny() / bins;
    let mut empirical = vec![0.0; bins * bins];
    for &(x, y) in samples {
        let bx = psi.grid_x.cell_index(x) / cx;
        let by = psi.grid_y.cell_index(y) / cy;
        empirical[bx * bins + by] += 1.0 / samples.len() as f64;
    }
    let mut exact = vec![0.0; bins * bins];
    let w = psi.cell_area();
    for jx in 0..psi.nx() {
        for jy in 0..psi.ny() {
            exact[(jx / cx) * bins + jy / cy] += psi.density(jx, jy) * w;
        }
    }
    let norm: f64 = exact.iter().sum();
    empirical
        .iter()
        .zip(&exact)
        .map(|(e, q)| (e - q / norm).abs())
        .sum::<f64>()
        / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn ks_vanishes_for_cdf_quantiles() {
        // samples placed exactly at the (i+1/2)/n quantiles of a uniform
        // distribution over the grid span give KS ≈ 1/(2n)
        let grid = Grid1D::new(16, 0.0, 1.0).unwrap();
        let marginal = vec![1.0; 16];
        let n = 64;
        let samples: Vec<f64> = (0..n)
            .map(|i| 16.0 * (i as f64 + 0.5) / n as f64)
            .collect();
        let ks = ks_distance(&samples, &grid, &marginal);
        assert!((ks - 0.5 / n as f64).abs() < 1e-12, "ks {ks}");
    }

    #[test]
    fn ks_detects_a_shifted_distribution() {
        let grid = Grid1D::new(64, -8.0, 0.25).unwrap();
        // reference: uniform on [-8, -4); samples: uniform on [0, 4)
        let mut marginal = vec![0.0; 64];
        for m in marginal.iter_mut().take(16) {
            *m = 1.0;
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut samples: Vec<f64> = (0..500).map(|_| rng.gen::<f64>() * 4.0).collect();
        samples.sort_by(f64::total_cmp);
        let ks = ks_distance(&samples, &grid, &marginal);
        assert!(ks > 0.99, "ks {ks}");
    }
}
