//! Two-particle wave functions on a 2D configuration-space grid: Gaussian
//! superposition builder, normalization, marginals, and quantum-equilibrium
//! sampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid1D, PhysicalParams};

/// One Gaussian packet on a single axis. `width` is the standard deviation of
/// |g|², so the amplitude is exp(-(u-center)²/(4 width²)) times the plane-wave
/// phase exp(i momentum u / hbar). Packets are deliberately unnormalized; the
/// superposition builder normalizes the full 2D state at the end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub center: f64,
    pub width: f64,
    pub momentum: f64,
}

impl GaussianSpec {
    pub fn new(center: f64, width: f64, momentum: f64) -> Result<Self> {
        let spec = Self {
            center,
            width,
            momentum,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "packet width must be positive, got {}",
                self.width
            )));
        }
        if !self.center.is_finite() || !self.momentum.is_finite() {
            return Err(Error::InvalidParameter(
                "packet center and momentum must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Amplitude at coordinate u.
    fn amplitude(&self, u: f64, hbar: f64) -> Complex64 {
        let d = u - self.center;
        let mag = (-d * d / (4.0 * self.width * self.width)).exp();
        Complex64::from_polar(mag, self.momentum * u / hbar)
    }
}

/// State of the bipartite system: complex amplitudes on grid_x × grid_y,
/// row-major with the x (particle A) index as the slow index.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction2D {
    pub grid_x: Grid1D,
    pub grid_y: Grid1D,
    pub amplitudes: Vec<Complex64>,
}

impl WaveFunction2D {
    pub fn new(grid_x: Grid1D, grid_y: Grid1D, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid_x.n() * grid_y.n() {
            return Err(Error::InvalidGrid(format!(
                "amplitude buffer has {} entries, grid wants {}x{}",
                amplitudes.len(),
                grid_x.n(),
                grid_y.n()
            )));
        }
        Ok(Self {
            grid_x,
            grid_y,
            amplitudes,
        })
    }

    pub fn zeros(grid_x: Grid1D, grid_y: Grid1D) -> Self {
        Self {
            grid_x,
            grid_y,
            amplitudes: vec![Complex64::default(); grid_x.n() * grid_y.n()],
        }
    }

    pub fn nx(&self) -> usize {
        self.grid_x.n()
    }

    pub fn ny(&self) -> usize {
        self.grid_y.n()
    }

    /// Integration measure of one grid cell.
    pub fn cell_area(&self) -> f64 {
        self.grid_x.dx() * self.grid_y.dx()
    }

    #[inline]
    pub fn idx(&self, jx: usize, jy: usize) -> usize {
        jx * self.grid_y.n() + jy
    }

    #[inline]
    pub fn amp(&self, jx: usize, jy: usize) -> Complex64 {
        self.amplitudes[self.idx(jx, jy)]
    }

    /// Σ |ψ_jk|² dx dy.
    pub fn norm_squared(&self) -> f64 {
        let sum: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        sum * self.cell_area()
    }

    /// Rescale to unit norm by a positive real factor.
    pub fn normalize(mut self) -> Result<Self> {
        let n2 = self.norm_squared();
        if !(n2 > 1e-240) || !n2.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let scale = 1.0 / n2.sqrt();
        for a in &mut self.amplitudes {
            *a *= scale;
        }
        Ok(self)
    }

    /// L² inner product ⟨self|other⟩ with the grid measure.
    pub fn inner(&self, other: &Self) -> Complex64 {
        let sum: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        sum * self.cell_area()
    }

    pub fn scale(&mut self, factor: Complex64) {
        for a in &mut self.amplitudes {
            *a *= factor;
        }
    }

    /// self += coeff * other, elementwise.
    pub fn add_scaled(&mut self, other: &Self, coeff: Complex64) {
        for (a, b) in self.amplitudes.iter_mut().zip(&other.amplitudes) {
            *a += coeff * b;
        }
    }

    /// |ψ|² at a grid point.
    #[inline]
    pub fn density(&self, jx: usize, jy: usize) -> f64 {
        self.amplitudes[self.idx(jx, jy)].norm_sqr()
    }

    pub fn density_max(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .fold(0.0, f64::max)
    }

    /// Probability mass per x-cell: Σ_k |ψ_jk|² dx dy.
    pub fn marginal_x(&self) -> Vec<f64> {
        let (nx, ny) = (self.nx(), self.ny());
        let w = self.cell_area();
        (0..nx)
            .map(|jx| {
                (0..ny)
                    .map(|jy| self.amplitudes[jx * ny + jy].norm_sqr())
                    .sum::<f64>()
                    * w
            })
            .collect()
    }

    /// Probability mass per y-cell.
    pub fn marginal_y(&self) -> Vec<f64> {
        let (nx, ny) = (self.nx(), self.ny());
        let w = self.cell_area();
        let mut out = vec![0.0; ny];
        for jx in 0..nx {
            for jy in 0..ny {
                out[jy] += self.amplitudes[jx * ny + jy].norm_sqr();
            }
        }
        for v in &mut out {
            *v *= w;
        }
        out
    }

    pub fn marginal(&self, axis: Axis) -> Vec<f64> {
        match axis {
            Axis::A => self.marginal_x(),
            Axis::B => self.marginal_y(),
        }
    }

    /// Probability mass in the outermost two cells at either end of an axis.
    /// Free propagation is computed on a torus; mass here means the packet is
    /// about to wrap around.
    pub fn boundary_mass(&self, axis: Axis) -> f64 {
        let marg = self.marginal(axis);
        let n = marg.len();
        marg[0] + marg[1] + marg[n - 2] + marg[n - 1]
    }

    /// Error out if either axis carries more than `limit` mass at the edges.
    pub fn check_boundary_mass(&self, limit: f64) -> Result<()> {
        for axis in [Axis::A, Axis::B] {
            let mass = self.boundary_mass(axis);
            if mass >= limit {
                return Err(Error::BoundaryMass { axis, mass, limit });
            }
        }
        Ok(())
    }

    /// Mass in the four quadrants cut by (thresh_x, thresh_y), using the same
    /// cell-ownership rule as the sign observables: a cell at x_j counts as
    /// positive iff x_j >= threshold. Returned as [(+,+), (+,-), (-,+), (-,-)].
    pub fn quadrant_masses(&self, thresh_x: f64, thresh_y: f64) -> [f64; 4] {
        let (nx, ny) = (self.nx(), self.ny());
        let w = self.cell_area();
        let mut q = [0.0; 4];
        for jx in 0..nx {
            let xpos = self.grid_x.point(jx) >= thresh_x;
            for jy in 0..ny {
                let ypos = self.grid_y.point(jy) >= thresh_y;
                let which = match (xpos, ypos) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 3,
                };
                q[which] += self.amplitudes[jx * ny + jy].norm_sqr() * w;
            }
        }
        q
    }

    /// Draw `count` configuration points from p_jk = |ψ_jk|² dx dy by
    /// inverse-CDF on the x-marginal followed by the conditional y
    /// distribution, with uniform jitter inside the chosen cell [x_j, x_j+dx).
    /// Deterministic per seed.
    pub fn sample_positions(&self, count: usize, seed: u64) -> Vec<(f64, f64)> {
        let tables = CdfTables::build(self);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(tables.draw(self, &mut rng));
        }
        out
    }
}

/// Cumulative tables for inverse-CDF sampling: marginal CDF over x-cells and
/// one conditional CDF over y-cells per x-cell. Zero-mass cells occupy empty
/// intervals and are never selected.
pub(crate) struct CdfTables {
    // length nx+1, cdf_x[0] = 0, cdf_x[nx] = 1
    cdf_x: Vec<f64>,
    // row jx holds the conditional y-CDF for that column, length ny+1
    cdf_y: Vec<f64>,
    ny: usize,
}

impl CdfTables {
    pub(crate) fn build(psi: &WaveFunction2D) -> Self {
        let (nx, ny) = (psi.nx(), psi.ny());
        let mut cdf_x = Vec::with_capacity(nx + 1);
        let mut cdf_y = vec![0.0; nx * (ny + 1)];
        let mut total = 0.0;
        cdf_x.push(0.0);
        for jx in 0..nx {
            let row = &mut cdf_y[jx * (ny + 1)..(jx + 1) * (ny + 1)];
            let mut row_sum = 0.0;
            for jy in 0..ny {
                row_sum += psi.density(jx, jy);
                row[jy + 1] = row_sum;
            }
            if row_sum > 0.0 {
                for v in row.iter_mut() {
                    *v /= row_sum;
                }
                row[ny] = 1.0;
            }
            total += row_sum;
            cdf_x.push(total);
        }
        for v in &mut cdf_x {
            *v /= total;
        }
        cdf_x[nx] = 1.0;
        Self { cdf_x, cdf_y, ny }
    }

    /// First cell whose cumulative interval contains u: smallest j with
    /// cdf[j+1] > u.
    fn locate(cdf: &[f64], u: f64) -> usize {
        let n = cdf.len() - 1;
        let mut lo = 0;
        let mut hi = n - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if cdf[mid + 1] > u {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }

    pub(crate) fn draw<R: Rng>(&self, psi: &WaveFunction2D, rng: &mut R) -> (f64, f64) {
        let ux: f64 = rng.gen();
        let uy: f64 = rng.gen();
        let jitter_x: f64 = rng.gen();
        let jitter_y: f64 = rng.gen();
        let jx = Self::locate(&self.cdf_x, ux);
        let row = &self.cdf_y[jx * (self.ny + 1)..(jx + 1) * (self.ny + 1)];
        let jy = Self::locate(row, uy);
        let x = psi.grid_x.point(jx) + jitter_x * psi.grid_x.dx();
        let y = psi.grid_y.point(jy) + jitter_y * psi.grid_y.dx();
        (x, y)
    }
}

/// ψ(x,y) = N · Σ_i c_i · g_{A,i}(x) · g_{B,i}(y), normalized. The overall
/// phase is whatever the coefficients produce; only relative phases matter.
pub fn build_superposition(
    grid_x: Grid1D,
    grid_y: Grid1D,
    terms: &[(Complex64, GaussianSpec, GaussianSpec)],
    params: &PhysicalParams,
) -> Result<WaveFunction2D> {
    if terms.is_empty() {
        return Err(Error::InvalidParameter(
            "superposition needs at least one term".into(),
        ));
    }
    for (_, ga, gb) in terms {
        ga.validate()?;
        gb.validate()?;
    }
    let (nx, ny) = (grid_x.n(), grid_y.n());
    let mut amplitudes = vec![Complex64::default(); nx * ny];
    // evaluate each packet once per axis, then accumulate outer products
    for (coeff, ga, gb) in terms {
        if coeff.norm_sqr() == 0.0 {
            continue;
        }
        let col_a: Vec<Complex64> = (0..nx)
            .map(|j| ga.amplitude(grid_x.point(j), params.hbar))
            .collect();
        let col_b: Vec<Complex64> = (0..ny)
            .map(|j| gb.amplitude(grid_y.point(j), params.hbar))
            .collect();
        for jx in 0..nx {
            let ca = *coeff * col_a[jx];
            for jy in 0..ny {
                amplitudes[jx * ny + jy] += ca * col_b[jy];
            }
        }
    }
    WaveFunction2D::new(grid_x, grid_y, amplitudes)?.normalize()
}
