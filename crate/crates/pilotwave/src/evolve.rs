//! Exact free Schrödinger propagation, diagonal in momentum space.
//!
//! The two particles are free and non-interacting, so the propagator
//! factorizes per axis and each axis may be evolved for its own duration —
//! which is what Heisenberg-picture two-time observables need. The only
//! approximation is the periodic wrap-around of the discrete transform,
//! guarded by the boundary-mass check on the result.

use rustfft::num_complex::Complex64;

use crate::error::Result;
use crate::fft;
use crate::grid::{Axis, Grid1D, PhysicalParams};
use crate::state::WaveFunction2D;

/// Mass allowed in the outermost two cells per axis before periodic
/// wrap-around is declared a corruption rather than noise.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-6;

/// Per-mode free-evolution phases exp(-i hbar k² t / (2 m)) for one axis.
pub(crate) fn phase_factors(grid: &Grid1D, t: f64, mass: f64, hbar: f64) -> Vec<Complex64> {
    (0..grid.n())
        .map(|m| {
            let k = grid.wavenumber(m);
            Complex64::from_polar(1.0, -hbar * k * k * t / (2.0 * mass))
        })
        .collect()
}

/// 2D spectrum of the state (unnormalized forward transform).
pub(crate) fn spectrum(psi: &WaveFunction2D) -> Vec<Complex64> {
    let mut data = psi.amplitudes.clone();
    fft::fft2(&mut data, psi.nx(), psi.ny());
    data
}

/// Free evolution without the boundary guard. The CHSH operator algebra uses
/// this deliberately: it acts on arbitrary (e.g. random) torus states where
/// edge mass is the rule, and the sign/evolution operators are exactly
/// unitary on the torus regardless. Callers who need wrap-around to mean
/// "the packet left the box" should use `free_evolve` instead.
pub fn free_evolve_unchecked(
    psi: &WaveFunction2D,
    t_a: f64,
    t_b: f64,
    params: &PhysicalParams,
) -> WaveFunction2D {
    if t_a == 0.0 && t_b == 0.0 {
        return psi.clone();
    }
    let (nx, ny) = (psi.nx(), psi.ny());
    let mut data = psi.amplitudes.clone();
    fft::fft2(&mut data, nx, ny);
    let px = phase_factors(&psi.grid_x, t_a, params.mass_a, params.hbar);
    let py = phase_factors(&psi.grid_y, t_b, params.mass_b, params.hbar);
    for jx in 0..nx {
        let fx = px[jx];
        for jy in 0..ny {
            data[jx * ny + jy] *= fx * py[jy];
        }
    }
    fft::ifft2(&mut data, nx, ny);
    WaveFunction2D {
        grid_x: psi.grid_x,
        grid_y: psi.grid_y,
        amplitudes: data,
    }
}

/// Free evolution of a single axis, transforming only along that axis. Same
/// result as `free_evolve_unchecked` with the other duration zero, at half
/// the cost; the operator algebra leans on this, applying it eight times per
/// CHSH operator application.
pub(crate) fn evolve_axis_unchecked(
    psi: &WaveFunction2D,
    axis: Axis,
    t: f64,
    params: &PhysicalParams,
) -> WaveFunction2D {
    if t == 0.0 {
        return psi.clone();
    }
    let (nx, ny) = (psi.nx(), psi.ny());
    let mut out = psi.clone();
    match axis {
        Axis::B => {
            let phases = phase_factors(&psi.grid_y, t, params.mass_b, params.hbar);
            fft::fft_rows(&mut out.amplitudes, nx, ny);
            for jx in 0..nx {
                for (v, ph) in out.amplitudes[jx * ny..(jx + 1) * ny].iter_mut().zip(&phases) {
                    *v *= ph;
                }
            }
            fft::ifft_rows(&mut out.amplitudes, nx, ny);
            let scale = 1.0 / ny as f64;
            for v in &mut out.amplitudes {
                *v *= scale;
            }
        }
        Axis::A => {
            let phases = phase_factors(&psi.grid_x, t, params.mass_a, params.hbar);
            let mut t_major = vec![Complex64::default(); nx * ny];
            fft::transpose(&out.amplitudes, nx, ny, &mut t_major);
            fft::fft_rows(&mut t_major, ny, nx);
            for jy in 0..ny {
                for (v, ph) in t_major[jy * nx..(jy + 1) * nx].iter_mut().zip(&phases) {
                    *v *= ph;
                }
            }
            fft::ifft_rows(&mut t_major, ny, nx);
            fft::transpose(&t_major, ny, nx, &mut out.amplitudes);
            let scale = 1.0 / nx as f64;
            for v in &mut out.amplitudes {
                *v *= scale;
            }
        }
    }
    out
}

/// Resample the state onto a `factor`× finer grid per axis by zero-padding
/// its spectrum. A lattice state is band-limited on the torus, so this is
/// exact: the same wave function sampled more densely, with values at
/// original nodes, the lattice norm, and every mode's wavenumber preserved
/// to rounding. Useful before trajectory integration of states that are
/// rough at their native grid scale — the guidance field is interpolated
/// between nodes, and refinement shrinks that error without touching the
/// state itself.
pub fn refine(psi: &WaveFunction2D, factor: usize) -> Result<WaveFunction2D> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(crate::error::Error::InvalidParameter(format!(
            "refinement factor must be a power of two, got {factor}"
        )));
    }
    if factor == 1 {
        return Ok(psi.clone());
    }
    let (nx, ny) = (psi.nx(), psi.ny());
    let (fnx, fny) = (nx * factor, ny * factor);
    let spec = spectrum(psi);
    let mut big = vec![Complex64::default(); fnx * fny];
    // ifft2 divides by the larger grid size, so carry the ratio here
    let scale = (factor * factor) as f64;
    // modes at or above n/2 are negative frequencies (see Grid1D::wavenumber)
    // and keep their k by moving to the top of the larger spectrum
    let map = |m: usize, n: usize, fn_: usize| if m < n / 2 { m } else { fn_ - (n - m) };
    for mx in 0..nx {
        let bx = map(mx, nx, fnx);
        for my in 0..ny {
            big[bx * fny + map(my, ny, fny)] = spec[mx * ny + my] * scale;
        }
    }
    fft::ifft2(&mut big, fnx, fny);
    Ok(WaveFunction2D {
        grid_x: Grid1D::new(fnx, psi.grid_x.x_min(), psi.grid_x.dx() / factor as f64)?,
        grid_y: Grid1D::new(fny, psi.grid_y.x_min(), psi.grid_y.dx() / factor as f64)?,
        amplitudes: big,
    })
}

/// Zero every mode whose wavenumber magnitude exceeds `fraction` of the
/// Nyquist wavenumber on its axis. An orthogonal projection (self-adjoint,
/// idempotent), commuting with free evolution.
///
/// A state with essential mass near Nyquist has two irreconcilable readings:
/// its per-cell Born sums (what the correlation tables integrate) and its
/// band-limited continuum density (what trajectories transport) disagree by
/// the sub-cell oscillation the grid cannot see. Restricting a variational
/// search to a sub-Nyquist band keeps both readings of the result consistent;
/// `fraction` = 1 keeps the full basis and is an exact no-op.
pub fn project_band(psi: &WaveFunction2D, fraction: f64) -> Result<WaveFunction2D> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(crate::error::Error::InvalidParameter(format!(
            "band fraction must be in (0, 1], got {fraction}"
        )));
    }
    let (nx, ny) = (psi.nx(), psi.ny());
    let kx_max = fraction * std::f64::consts::PI / psi.grid_x.dx();
    let ky_max = fraction * std::f64::consts::PI / psi.grid_y.dx();
    let mut data = spectrum(psi);
    for mx in 0..nx {
        let keep_x = psi.grid_x.wavenumber(mx).abs() <= kx_max;
        for my in 0..ny {
            if !(keep_x && psi.grid_y.wavenumber(my).abs() <= ky_max) {
                data[mx * ny + my] = Complex64::default();
            }
        }
    }
    fft::ifft2(&mut data, nx, ny);
    Ok(WaveFunction2D {
        grid_x: psi.grid_x,
        grid_y: psi.grid_y,
        amplitudes: data,
    })
}

/// Evolve axis A by t_a and axis B by t_b (either may be negative). Errors if
/// the evolved packet has reached the periodic edge.
pub fn free_evolve(
    psi: &WaveFunction2D,
    t_a: f64,
    t_b: f64,
    params: &PhysicalParams,
) -> Result<WaveFunction2D> {
    let out = free_evolve_unchecked(psi, t_a, t_b, params);
    out.check_boundary_mass(BOUNDARY_MASS_LIMIT)?;
    Ok(out)
}

/// Exact inverse of free_evolve with the same durations.
pub fn free_evolve_inverse(
    psi: &WaveFunction2D,
    t_a: f64,
    t_b: f64,
    params: &PhysicalParams,
) -> Result<WaveFunction2D> {
    free_evolve(psi, -t_a, -t_b, params)
}
