//! Spatial discretization of one configuration-space axis, plus the physical
//! constants of the two-particle system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which particle an axis or observable belongs to. Alice's particle lives on
/// the x axis of configuration space, Bob's on the y axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    A,
    B,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::A => write!(f, "A"),
            Axis::B => write!(f, "B"),
        }
    }
}

/// Uniform periodic grid on one axis: points x_j = x_min + j*dx, j = 0..n-1.
///
/// The cell owned by point j is the half-open interval [x_j, x_j + dx); cell
/// edges therefore land exactly on grid points, which keeps sampling,
/// half-plane sums and collapse projections mutually consistent whenever a
/// threshold coincides with a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    n: usize,
    x_min: f64,
    dx: f64,
}

impl Grid1D {
    /// Build a grid with `n` points starting at `x_min` with spacing `dx`.
    /// `n` must be a power of two and at least 8.
    pub fn new(n: usize, x_min: f64, dx: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "point count {n} must be a power of two and at least 8"
            )));
        }
        if !(dx > 0.0) || !dx.is_finite() || !x_min.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "spacing {dx} and left edge {x_min} must be finite, dx > 0"
            )));
        }
        Ok(Self { n, x_min, dx })
    }

    /// Grid covering [x_min, x_max) with `n` points, dx = (x_max - x_min)/n.
    pub fn from_range(n: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_max > x_min) {
            return Err(Error::InvalidGrid(format!(
                "empty range [{x_min}, {x_max})"
            )));
        }
        Self::new(n, x_min, (x_max - x_min) / n as f64)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Period of the torus the grid discretizes.
    pub fn length(&self) -> f64 {
        self.n as f64 * self.dx
    }

    /// Coordinate of point j.
    pub fn point(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    /// Last grid point. The final cell [last_point, x_min + length) closes
    /// the torus: its right edge is x_min again.
    pub fn last_point(&self) -> f64 {
        self.point(self.n - 1)
    }

    /// Whether x lies in the fundamental domain [x_min, x_min + length).
    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x < self.x_min + self.length()
    }

    /// Map x into the fundamental domain, identifying points one period
    /// apart.
    pub fn wrap(&self, x: f64) -> f64 {
        if self.contains(x) {
            return x;
        }
        let l = self.length();
        let w = self.x_min + (x - self.x_min).rem_euclid(l);
        // rounding at either step can land exactly on the right edge, which
        // is x_min again on the torus
        if w >= self.x_min + l {
            self.x_min
        } else {
            w
        }
    }

    /// Index of the cell [x_j, x_j + dx) containing x, clamped to the grid.
    pub fn cell_index(&self, x: f64) -> usize {
        let j = ((x - self.x_min) / self.dx).floor();
        (j.max(0.0) as usize).min(self.n - 1)
    }

    /// Angular wavenumber of Fourier mode m, wrapped to [-n/2, n/2) * 2pi/L.
    pub fn wavenumber(&self, m: usize) -> f64 {
        let half = self.n / 2;
        let wrapped = if m < half {
            m as isize
        } else {
            m as isize - self.n as isize
        };
        2.0 * std::f64::consts::PI * wrapped as f64 / self.length()
    }
}

/// Physical constants: the action quantum and the two particle masses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub hbar: f64,
    pub mass_a: f64,
    pub mass_b: f64,
}

impl PhysicalParams {
    pub fn new(hbar: f64, mass_a: f64, mass_b: f64) -> Result<Self> {
        for (name, v) in [("hbar", hbar), ("mass_a", mass_a), ("mass_b", mass_b)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(Self {
            hbar,
            mass_a,
            mass_b,
        })
    }

    /// Natural units hbar = m_A = m_B = 1.
    pub fn natural() -> Self {
        Self {
            hbar: 1.0,
            mass_a: 1.0,
            mass_b: 1.0,
        }
    }

    pub fn mass(&self, axis: Axis) -> f64 {
        match axis {
            Axis::A => self.mass_a,
            Axis::B => self.mass_b,
        }
    }
}
