//! Guidance-equation dynamics: the velocity field v_k = (ħ/m_k) Im(ψ*∇_kψ/|ψ|²)
//! and ensemble trajectory integration through the time-dependent field.
//!
//! ψ(t) is never time-stepped; it is re-evolved exactly from the initial
//! spectrum at every field evaluation time, so the only integration error is
//! in the trajectories themselves. To keep that affordable for ensembles, all
//! trajectories march over a shared time lattice (spacing ≤ max_step): per
//! lattice interval the five Dormand–Prince stage fields are computed once
//! and shared, and each trajectory first attempts the interval as a single
//! embedded 5(4) step, falling back to dyadic bisection only when the error
//! test fails (rare away from nodes). Everything a trajectory does is
//! independent of every other trajectory, so ensembles parallelize without
//! changing results.
//!
//! The shared lattice is also the performance dial for rough states. Smooth
//! packets cross max_step = 0.01 intervals in one attempt; a violation-search
//! eigenstate is rough at the grid scale and would bisect nearly every
//! interval, paying for private stage fields trajectory by trajectory. Set
//! max_step near the step such a state actually supports (~1e-3) and the
//! stage fields are computed once per interval for the whole ensemble again.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{phase_factors, spectrum, BOUNDARY_MASS_LIMIT};
use crate::fft;
use crate::grid::{Grid1D, PhysicalParams};
use crate::state::WaveFunction2D;

/// Tolerances and safety rails for trajectory integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Interpolated |ψ|² is floored at node_epsilon times the grid maximum
    /// of |ψ|² before dividing; nodes carry no equilibrium probability, so
    /// this only matters for near-node passes.
    pub node_epsilon: f64,
    /// Hard clamp on each velocity component; clamp events are counted.
    pub max_speed: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-8,
            max_step: 0.01,
            node_epsilon: 1e-12,
            max_speed: 1e3,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("node_epsilon", self.node_epsilon),
            ("max_speed", self.max_speed),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "integrator {name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A configuration-space path. The initial entry is the hidden variable λ.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn new(t0: f64, q0: (f64, f64)) -> Self {
        Self {
            times: vec![t0],
            points: vec![q0],
        }
    }

    pub fn push(&mut self, t: f64, q: (f64, f64)) {
        debug_assert!(t > *self.times.last().unwrap());
        self.times.push(t);
        self.points.push(q);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> (f64, f64) {
        self.points[0]
    }

    pub fn end(&self) -> (f64, f64) {
        *self.points.last().unwrap()
    }

    /// Recorded position at time t, matched with a small relative tolerance.
    pub fn position_at(&self, t: f64) -> Option<(f64, f64)> {
        let eps = 1e-9 * self.times.last().unwrap().abs().max(1.0);
        let i = self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
            .unwrap_or_else(|i| i);
        for j in [i.saturating_sub(1), i, i + 1] {
            if j < self.times.len() && (self.times[j] - t).abs() <= eps {
                return Some(self.points[j]);
            }
        }
        None
    }
}

/// The velocity field's ingredients at one instant, tabulated on the grid:
/// flux_k = Im(ψ*∂_kψ) and density = |ψ|².
pub(crate) struct FieldSnapshot {
    flux_x: Vec<f64>,
    flux_y: Vec<f64>,
    density: Vec<f64>,
    density_max: f64,
}

impl FieldSnapshot {
    /// Snapshot of an explicit state (spectral derivatives, no evolution).
    pub(crate) fn from_state(psi: &WaveFunction2D) -> Self {
        let kx: Vec<f64> = (0..psi.nx()).map(|m| psi.grid_x.wavenumber(m)).collect();
        let ky: Vec<f64> = (0..psi.ny()).map(|m| psi.grid_y.wavenumber(m)).collect();
        from_spectrum(spectrum(psi), &kx, &ky, psi.nx(), psi.ny())
    }
}

/// Build flux and density tables from an (already evolved) 2D spectrum.
fn from_spectrum(spec: Vec<Complex64>, kx: &[f64], ky: &[f64], nx: usize, ny: usize) -> FieldSnapshot {
    let mut psi = spec.clone();
    fft::ifft2(&mut psi, nx, ny);

    let mut grad_x = spec.clone();
    for jx in 0..nx {
        let ik = Complex64::new(0.0, kx[jx]);
        for v in &mut grad_x[jx * ny..(jx + 1) * ny] {
            *v *= ik;
        }
    }
    fft::ifft2(&mut grad_x, nx, ny);

    let mut grad_y = spec;
    for jx in 0..nx {
        for jy in 0..ny {
            grad_y[jx * ny + jy] *= Complex64::new(0.0, ky[jy]);
        }
    }
    fft::ifft2(&mut grad_y, nx, ny);

    let mut flux_x = vec![0.0; nx * ny];
    let mut flux_y = vec![0.0; nx * ny];
    let mut density = vec![0.0; nx * ny];
    let mut density_max = 0.0f64;
    for i in 0..nx * ny {
        let p = psi[i];
        flux_x[i] = (p.conj() * grad_x[i]).im;
        flux_y[i] = (p.conj() * grad_y[i]).im;
        let d = p.norm_sqr();
        density[i] = d;
        density_max = density_max.max(d);
    }
    FieldSnapshot {
        flux_x,
        flux_y,
        density,
        density_max,
    }
}

/// What to do when an evolved state carries mass in the outermost grid cells.
///
/// Smooth packets must never get there — for them edge mass means the
/// periodic wrap-around is contaminating the answer, so `Fatal` aborts.
/// Post-collapse states are different: the sharp cut scatters a little mass
/// to high momenta at any resolution, and the comparison targets for those
/// runs are themselves computed with the periodic propagator, so `Track`
/// just records the worst edge mass seen for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeGuard {
    Fatal,
    Track,
}

/// Provider of field snapshots at arbitrary times, backed by the exact free
/// propagator applied to the stored initial spectrum, with a cache keyed by
/// requested time. `t_origin` is the absolute time the initial state belongs
/// to; snapshots are requested in absolute time.
pub struct EvolvedFields {
    grid_x: Grid1D,
    grid_y: Grid1D,
    params: PhysicalParams,
    t_origin: f64,
    spec0: Vec<Complex64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    guard: EdgeGuard,
    peak_edge: Mutex<f64>,
    cache: Mutex<HashMap<u64, Arc<FieldSnapshot>>>,
}

// Memory backstop: ~1.6 MB per snapshot on a 256² grid. Holds the dyadic
// sub-step stages of one lattice interval down to depth 3 (5 snapshots per
// sub-step), so an ensemble subdividing the same interval shares them. When
// most intervals subdivide deeper, a smaller max_step is the right tool: the
// shared lattice amortizes its snapshots over every trajectory at once.
const SNAPSHOT_CACHE_CAP: usize = 96;

impl EvolvedFields {
    pub fn new(psi0: &WaveFunction2D, params: &PhysicalParams, t_origin: f64) -> Self {
        Self::with_guard(psi0, params, t_origin, EdgeGuard::Fatal)
    }

    pub fn with_guard(
        psi0: &WaveFunction2D,
        params: &PhysicalParams,
        t_origin: f64,
        guard: EdgeGuard,
    ) -> Self {
        Self {
            grid_x: psi0.grid_x,
            grid_y: psi0.grid_y,
            params: *params,
            t_origin,
            spec0: spectrum(psi0),
            kx: (0..psi0.nx()).map(|m| psi0.grid_x.wavenumber(m)).collect(),
            ky: (0..psi0.ny()).map(|m| psi0.grid_y.wavenumber(m)).collect(),
            guard,
            peak_edge: Mutex::new(0.0),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn grid_x(&self) -> &Grid1D {
        &self.grid_x
    }

    pub fn grid_y(&self) -> &Grid1D {
        &self.grid_y
    }

    /// Largest single-axis edge mass seen so far (only grows in Track mode;
    /// Fatal mode aborts before anything notable accumulates).
    pub fn peak_edge_mass(&self) -> f64 {
        *self.peak_edge.lock().unwrap()
    }

    /// Field tables at absolute time t. Errors if the evolved state has
    /// reached the periodic edge (this provider serves the physical
    /// trajectory path, which must stay on honest, unwrapped states).
    pub(crate) fn snapshot(&self, t: f64) -> Result<Arc<FieldSnapshot>> {
        let dt = t - self.t_origin;
        let key = dt.to_bits();
        if let Some(snap) = self.cache.lock().unwrap().get(&key) {
            return Ok(snap.clone());
        }
        let snap = Arc::new(self.compute(dt)?);
        let mut cache = self.cache.lock().unwrap();
        cache.insert(key, snap.clone());
        if cache.len() > SNAPSHOT_CACHE_CAP {
            // HashMap iteration order serves as the random pick
            let victim = *cache.keys().find(|k| **k != key).unwrap();
            cache.remove(&victim);
        }
        Ok(snap)
    }

    /// Drop every cached snapshot. The ensemble integrator calls this when it
    /// crosses a lattice interval boundary: sub-step times are never shared
    /// across intervals, so keeping them only crowds out the next interval's.
    pub(crate) fn forget_snapshots(&self) {
        self.cache.lock().unwrap().clear();
    }

    fn compute(&self, dt: f64) -> Result<FieldSnapshot> {
        let (nx, ny) = (self.grid_x.n(), self.grid_y.n());
        let mut spec = self.spec0.clone();
        if dt != 0.0 {
            let px = phase_factors(&self.grid_x, dt, self.params.mass_a, self.params.hbar);
            let py = phase_factors(&self.grid_y, dt, self.params.mass_b, self.params.hbar);
            for jx in 0..nx {
                let fx = px[jx];
                for jy in 0..ny {
                    spec[jx * ny + jy] *= fx * py[jy];
                }
            }
        }
        let snap = from_spectrum(spec, &self.kx, &self.ky, nx, ny);
        self.check_edges(&snap)?;
        Ok(snap)
    }

    fn check_edges(&self, snap: &FieldSnapshot) -> Result<()> {
        let (nx, ny) = (self.grid_x.n(), self.grid_y.n());
        let w = self.grid_x.dx() * self.grid_y.dx();
        let mut mass_a = 0.0;
        for jx in [0, 1, nx - 2, nx - 1] {
            mass_a += snap.density[jx * ny..(jx + 1) * ny].iter().sum::<f64>();
        }
        mass_a *= w;
        let mut mass_b = 0.0;
        for jx in 0..nx {
            let row = &snap.density[jx * ny..(jx + 1) * ny];
            mass_b += row[0] + row[1] + row[ny - 2] + row[ny - 1];
        }
        mass_b *= w;
        match self.guard {
            EdgeGuard::Fatal => {
                for (axis, mass) in [(crate::grid::Axis::A, mass_a), (crate::grid::Axis::B, mass_b)]
                {
                    if mass >= BOUNDARY_MASS_LIMIT {
                        return Err(Error::BoundaryMass {
                            axis,
                            mass,
                            limit: BOUNDARY_MASS_LIMIT,
                        });
                    }
                }
            }
            EdgeGuard::Track => {
                let mut peak = self.peak_edge.lock().unwrap();
                *peak = peak.max(mass_a).max(mass_b);
            }
        }
        Ok(())
    }
}

/// Bilinearly interpolated, node-regularized velocity, periodic in both
/// coordinates: the position is wrapped into the fundamental domain and the
/// final cell interpolates between the last node and node 0, matching the
/// torus the propagator evolves on. Returns None only for non-finite
/// positions; otherwise the velocity and how many components hit the
/// max_speed clamp.
fn velocity(
    snap: &FieldSnapshot,
    gx: &Grid1D,
    gy: &Grid1D,
    params: &PhysicalParams,
    config: &IntegratorConfig,
    pos: [f64; 2],
) -> Option<([f64; 2], u32)> {
    let [x, y] = pos;
    if !x.is_finite() || !y.is_finite() {
        return None;
    }
    let nx = gx.n();
    let ny = gy.n();
    let fx = (gx.wrap(x) - gx.x_min()) / gx.dx();
    let fy = (gy.wrap(y) - gy.x_min()) / gy.dx();
    let jx = (fx as usize).min(nx - 1);
    let jy = (fy as usize).min(ny - 1);
    let ux = (fx - jx as f64).clamp(0.0, 1.0);
    let uy = (fy - jy as f64).clamp(0.0, 1.0);
    let jx1 = if jx + 1 == nx { 0 } else { jx + 1 };
    let jy1 = if jy + 1 == ny { 0 } else { jy + 1 };
    let w00 = (1.0 - ux) * (1.0 - uy);
    let w10 = ux * (1.0 - uy);
    let w01 = (1.0 - ux) * uy;
    let w11 = ux * uy;
    let i00 = jx * ny + jy;
    let i10 = jx1 * ny + jy;
    let i01 = jx * ny + jy1;
    let i11 = jx1 * ny + jy1;
    let pick = |v: &[f64]| v[i00] * w00 + v[i10] * w10 + v[i01] * w01 + v[i11] * w11;
    // numerator and denominator are interpolated separately; the quotient of
    // interpolants is far better behaved near nodes than an interpolated
    // quotient
    let dens = pick(&snap.density).max(config.node_epsilon * snap.density_max);
    let mut vx = params.hbar / params.mass_a * pick(&snap.flux_x) / dens;
    let mut vy = params.hbar / params.mass_b * pick(&snap.flux_y) / dens;
    let mut clamps = 0;
    if vx.abs() > config.max_speed {
        vx = vx.signum() * config.max_speed;
        clamps += 1;
    }
    if vy.abs() > config.max_speed {
        vy = vy.signum() * config.max_speed;
        clamps += 1;
    }
    Some(([vx, vy], clamps))
}

/// Guidance-equation velocity (v_A, v_B) of the configuration `point` under
/// the instantaneous state ψ. The point must lie in the fundamental domain;
/// a caller holding a wrapped-around coordinate should fold it back with
/// `Grid1D::wrap` first.
pub fn velocity_field(
    psi: &WaveFunction2D,
    params: &PhysicalParams,
    point: (f64, f64),
    config: &IntegratorConfig,
) -> Result<(f64, f64)> {
    config.validate()?;
    if !psi.grid_x.contains(point.0) || !psi.grid_y.contains(point.1) {
        return Err(Error::OutOfDomain {
            x: point.0,
            y: point.1,
        });
    }
    let snap = FieldSnapshot::from_state(psi);
    match velocity(
        &snap,
        &psi.grid_x,
        &psi.grid_y,
        params,
        config,
        [point.0, point.1],
    ) {
        Some(([vx, vy], _)) => Ok((vx, vy)),
        None => Err(Error::OutOfDomain {
            x: point.0,
            y: point.1,
        }),
    }
}

// Dormand–Prince 5(4) tableau. Stage 7 sits at the step end and equals the
// 5th-order solution, so its slope seeds the next step (FSAL).
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Stage fields for one attempted step: interior stages 2–5 plus the step
/// end (stages 6 and 7 share it).
struct StageSnaps<'a> {
    s2: &'a FieldSnapshot,
    s3: &'a FieldSnapshot,
    s4: &'a FieldSnapshot,
    s5: &'a FieldSnapshot,
    s_end: &'a FieldSnapshot,
}

enum StepOutcome {
    Accept {
        y_new: [f64; 2],
        k_new: [f64; 2],
        clamps: u32,
    },
    Reject,
    /// A stage produced a non-finite position.
    Diverged,
}

struct FieldCtx<'a> {
    gx: &'a Grid1D,
    gy: &'a Grid1D,
    params: &'a PhysicalParams,
    config: &'a IntegratorConfig,
}

fn dp_step(ctx: &FieldCtx, y: [f64; 2], k1: [f64; 2], h: f64, snaps: &StageSnaps) -> StepOutcome {
    let mut clamps = 0u32;
    let mut eval = |snap: &FieldSnapshot, pos: [f64; 2]| -> Option<[f64; 2]> {
        let (v, c) = velocity(snap, ctx.gx, ctx.gy, ctx.params, ctx.config, pos)?;
        clamps += c;
        Some(v)
    };
    macro_rules! stage {
        ($snap:expr, $coeffs:expr, $ks:expr) => {{
            let mut pos = y;
            for (a, k) in $coeffs.iter().zip($ks.iter()) {
                pos[0] += h * a * k[0];
                pos[1] += h * a * k[1];
            }
            match eval($snap, pos) {
                Some(v) => (pos, v),
                None => return StepOutcome::Diverged,
            }
        }};
    }
    let (_, k2) = stage!(snaps.s2, A2, [k1]);
    let (_, k3) = stage!(snaps.s3, A3, [k1, k2]);
    let (_, k4) = stage!(snaps.s4, A4, [k1, k2, k3]);
    let (_, k5) = stage!(snaps.s5, A5, [k1, k2, k3, k4]);
    let (_, k6) = stage!(snaps.s_end, A6, [k1, k2, k3, k4, k5]);
    let (y_new, k7) = stage!(snaps.s_end, B, [k1, k2, k3, k4, k5, k6]);

    let ks = [k1, k2, k3, k4, k5, k6, k7];
    let mut err_sq = 0.0;
    for d in 0..2 {
        let e: f64 = E.iter().zip(&ks).map(|(c, k)| c * k[d]).sum();
        let scale = ctx.config.abs_tol + ctx.config.rel_tol * y[d].abs().max(y_new[d].abs());
        let r = h * e / scale;
        err_sq += r * r;
    }
    let err = (err_sq / 2.0).sqrt();
    if err <= 1.0 {
        StepOutcome::Accept {
            y_new,
            k_new: k7,
            clamps,
        }
    } else {
        StepOutcome::Reject
    }
}

/// Aggregate integration diagnostics for an ensemble run.
#[derive(Debug, Default, Clone, Copy, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub steps_accepted: u64,
    pub steps_rejected: u64,
    /// Lattice intervals a trajectory could not cross in one step.
    pub subdivided_intervals: u64,
    pub clamp_events: u64,
    pub failed_trajectories: usize,
    /// Worst single-axis edge mass of any field snapshot evaluated under an
    /// `EdgeGuard::Track` provider (0 when every provider was Fatal-guarded).
    pub peak_boundary_mass: f64,
}

impl EnsembleStats {
    pub fn merge(&mut self, other: &EnsembleStats) {
        self.steps_accepted += other.steps_accepted;
        self.steps_rejected += other.steps_rejected;
        self.subdivided_intervals += other.subdivided_intervals;
        self.clamp_events += other.clamp_events;
        self.failed_trajectories += other.failed_trajectories;
        self.peak_boundary_mass = self.peak_boundary_mass.max(other.peak_boundary_mass);
    }
}

pub struct EnsembleRun {
    pub trajectories: Vec<Result<Trajectory>>,
    pub stats: EnsembleStats,
}

struct TrajState {
    pos: [f64; 2],
    k1: [f64; 2],
    traj: Trajectory,
    clamps: u64,
    accepted: u64,
    rejected: u64,
    subdivided: u64,
    failed: Option<Error>,
}

/// Shared time lattice: uniform points at most max_step apart, merged with
/// the requested sample instants. Returns the lattice and a per-point flag
/// saying whether positions are recorded there.
fn build_lattice(
    t0: f64,
    t1: f64,
    max_step: f64,
    sample_times: Option<&[f64]>,
) -> (Vec<f64>, Vec<bool>) {
    let span = t1 - t0;
    if span == 0.0 {
        return (vec![t0], vec![true]);
    }
    let n = (span / max_step).ceil().max(1.0) as usize;
    let mut pts: Vec<f64> = (0..=n).map(|i| t0 + span * i as f64 / n as f64).collect();
    pts[n] = t1;
    let eps = span.abs().max(1.0) * 1e-12;
    if let Some(samples) = sample_times {
        pts.extend(
            samples
                .iter()
                .copied()
                .filter(|&s| s > t0 + eps && s < t1 - eps),
        );
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= eps);
    let mut record = match sample_times {
        None => vec![true; pts.len()],
        Some(samples) => {
            let mut r = vec![false; pts.len()];
            for &s in samples {
                // nearest lattice point; sample times inside the span were
                // inserted above, so this only snaps within eps
                let i = pts
                    .partition_point(|&p| p < s)
                    .min(pts.len() - 1);
                for j in [i.saturating_sub(1), i] {
                    if (pts[j] - s).abs() <= eps {
                        r[j] = true;
                    }
                }
            }
            r
        }
    };
    record[0] = true;
    let last = pts.len() - 1;
    record[last] = true;
    (pts, record)
}

fn advance_interval(
    st: &mut TrajState,
    fields: &EvolvedFields,
    ctx: &FieldCtx,
    snaps: &StageSnaps,
    t: f64,
    t_next: f64,
    record: bool,
) {
    if st.failed.is_some() {
        return;
    }
    let h = t_next - t;
    match dp_step(ctx, st.pos, st.k1, h, snaps) {
        StepOutcome::Accept {
            y_new,
            k_new,
            clamps,
            ..
        } => {
            // positions live on the torus; fold wrap-around crossings back
            // into the fundamental domain so recorded paths and readouts
            // agree with the lattice convention
            st.pos = [ctx.gx.wrap(y_new[0]), ctx.gy.wrap(y_new[1])];
            st.k1 = k_new;
            st.clamps += clamps as u64;
            st.accepted += 1;
        }
        StepOutcome::Reject { .. } => {
            st.rejected += 1;
            st.subdivided += 1;
            subdivide(st, fields, ctx, t, t_next, 0);
        }
        StepOutcome::Diverged => {
            // a smaller step cannot un-NaN a position
            st.failed = Some(Error::TrajectoryDiverged {
                t,
                partial: Box::new(st.traj.clone()),
            });
        }
    }
    if st.failed.is_none() && record {
        st.traj.push(t_next, (st.pos[0], st.pos[1]));
    }
}

/// Deepest dyadic halving of one lattice interval before a trajectory is
/// declared stuck (h bottoms out at max_step / 2^28 ≈ 4e-11 time units).
const MAX_BISECT_DEPTH: u32 = 28;

/// Sub-stepping across [a, b] for one trajectory that failed the shared
/// whole-interval step: bisect until the error test passes, recursively.
/// Halving is dyadic on purpose — every trajectory subdividing this lattice
/// interval then requests the identical snapshot times, so the field cache
/// computes each sub-step's stages once for the whole ensemble instead of
/// once per trajectory. Rejoins the lattice exactly at b.
fn subdivide(
    st: &mut TrajState,
    fields: &EvolvedFields,
    ctx: &FieldCtx,
    a: f64,
    b: f64,
    depth: u32,
) {
    if st.failed.is_some() {
        return;
    }
    if depth > MAX_BISECT_DEPTH {
        st.failed = Some(Error::StepUnderflow { t: a, h: b - a });
        return;
    }
    let mid = a + 0.5 * (b - a);
    for (lo, hi) in [(a, mid), (mid, b)] {
        if st.failed.is_some() {
            return;
        }
        let h = hi - lo;
        let snap_result = (|| -> Result<[Arc<FieldSnapshot>; 5]> {
            Ok([
                fields.snapshot(lo + C[1] * h)?,
                fields.snapshot(lo + C[2] * h)?,
                fields.snapshot(lo + C[3] * h)?,
                fields.snapshot(lo + C[4] * h)?,
                fields.snapshot(hi)?,
            ])
        })();
        let arcs = match snap_result {
            Ok(a) => a,
            Err(e) => {
                st.failed = Some(e);
                return;
            }
        };
        let snaps = StageSnaps {
            s2: &arcs[0],
            s3: &arcs[1],
            s4: &arcs[2],
            s5: &arcs[3],
            s_end: &arcs[4],
        };
        match dp_step(ctx, st.pos, st.k1, h, &snaps) {
            StepOutcome::Accept {
                y_new,
                k_new,
                clamps,
                ..
            } => {
                st.pos = [ctx.gx.wrap(y_new[0]), ctx.gy.wrap(y_new[1])];
                st.k1 = k_new;
                st.clamps += clamps as u64;
                st.accepted += 1;
            }
            StepOutcome::Reject { .. } => {
                st.rejected += 1;
                subdivide(st, fields, ctx, lo, hi, depth + 1);
            }
            StepOutcome::Diverged => {
                st.failed = Some(Error::TrajectoryDiverged {
                    t: lo,
                    partial: Box::new(st.traj.clone()),
                });
            }
        }
    }
}

/// Integrate one trajectory per start point from t0 to t1 under the shared
/// evolving field, recording positions at the requested sample instants
/// (every lattice point when `sample_times` is None; the endpoints always).
pub fn integrate_ensemble(
    fields: &EvolvedFields,
    starts: &[(f64, f64)],
    t0: f64,
    t1: f64,
    sample_times: Option<&[f64]>,
    config: &IntegratorConfig,
) -> Result<EnsembleRun> {
    config.validate()?;
    if t1 < t0 {
        return Err(Error::InvalidParameter(format!(
            "cannot integrate backwards: t0 {t0}, t1 {t1}"
        )));
    }
    let (lattice, record) = build_lattice(t0, t1, config.max_step, sample_times);
    let snap0 = fields.snapshot(t0)?;
    let ctx = FieldCtx {
        gx: &fields.grid_x,
        gy: &fields.grid_y,
        params: &fields.params,
        config,
    };
    let mut states: Vec<TrajState> = starts
        .iter()
        .map(|&(x, y)| {
            let pos = [x, y];
            let mut st = TrajState {
                pos,
                k1: [0.0, 0.0],
                traj: Trajectory::new(t0, (x, y)),
                clamps: 0,
                accepted: 0,
                rejected: 0,
                subdivided: 0,
                failed: None,
            };
            // starts must be handed in already inside the fundamental
            // domain; only the integrator itself gets to wrap
            if !ctx.gx.contains(x) || !ctx.gy.contains(y) {
                st.failed = Some(Error::OutOfDomain { x, y });
            } else {
                match velocity(&snap0, ctx.gx, ctx.gy, ctx.params, config, pos) {
                    Some((v, c)) => {
                        st.k1 = v;
                        st.clamps += c as u64;
                    }
                    None => st.failed = Some(Error::OutOfDomain { x, y }),
                }
            }
            st
        })
        .collect();
    drop(snap0);

    for i in 0..lattice.len().saturating_sub(1) {
        let t = lattice[i];
        let t_next = lattice[i + 1];
        let h = t_next - t;
        // sub-step times are private to an interval; see forget_snapshots
        fields.forget_snapshots();
        let arcs = [
            fields.snapshot(t + C[1] * h)?,
            fields.snapshot(t + C[2] * h)?,
            fields.snapshot(t + C[3] * h)?,
            fields.snapshot(t + C[4] * h)?,
            fields.snapshot(t_next)?,
        ];
        let rec = record[i + 1];
        states.par_iter_mut().for_each(|st| {
            let snaps = StageSnaps {
                s2: &arcs[0],
                s3: &arcs[1],
                s4: &arcs[2],
                s5: &arcs[3],
                s_end: &arcs[4],
            };
            advance_interval(st, fields, &ctx, &snaps, t, t_next, rec);
        });
    }

    let mut stats = EnsembleStats::default();
    let trajectories = states
        .into_iter()
        .map(|st| {
            stats.steps_accepted += st.accepted;
            stats.steps_rejected += st.rejected;
            stats.subdivided_intervals += st.subdivided;
            stats.clamp_events += st.clamps;
            match st.failed {
                Some(e) => {
                    stats.failed_trajectories += 1;
                    Err(e)
                }
                None => Ok(st.traj),
            }
        })
        .collect();
    stats.peak_boundary_mass = fields.peak_edge_mass();
    Ok(EnsembleRun {
        trajectories,
        stats,
    })
}

/// Single-trajectory convenience wrapper: ψ(t0) = psi0, recorded at every
/// lattice point.
pub fn integrate_trajectory(
    psi0: &WaveFunction2D,
    params: &PhysicalParams,
    q0: (f64, f64),
    t0: f64,
    t1: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    let fields = EvolvedFields::new(psi0, params, t0);
    let run = integrate_ensemble(&fields, &[q0], t0, t1, None, config)?;
    run.trajectories.into_iter().next().unwrap()
}
