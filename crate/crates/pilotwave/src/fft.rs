//! Thin layer over rustfft: cached plans and row/column transforms for
//! row-major 2D arrays.
//!
//! Plans are cached process-wide per (size, direction) because planning is
//! far more expensive than executing for the sizes we use, and every module
//! transforms the same handful of grid sizes over and over.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(PartialEq, Eq, Hash, Clone, Copy)]
struct PlanKey {
    len: usize,
    inverse: bool,
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<PlanKey, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry(PlanKey { len, inverse })
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// Forward transform of every row of a row-major `rows x cols` array, in place.
/// Unnormalized, matching the rustfft convention.
pub fn fft_rows(data: &mut [Complex64], rows: usize, cols: usize) {
    debug_assert_eq!(data.len(), rows * cols);
    let p = plan(cols, false);
    let mut scratch = vec![Complex64::default(); p.get_inplace_scratch_len()];
    for r in 0..rows {
        p.process_with_scratch(&mut data[r * cols..(r + 1) * cols], &mut scratch);
    }
}

/// Inverse transform of every row, in place. Unnormalized: ifft(fft(x)) = n*x.
pub fn ifft_rows(data: &mut [Complex64], rows: usize, cols: usize) {
    debug_assert_eq!(data.len(), rows * cols);
    let p = plan(cols, true);
    let mut scratch = vec![Complex64::default(); p.get_inplace_scratch_len()];
    for r in 0..rows {
        p.process_with_scratch(&mut data[r * cols..(r + 1) * cols], &mut scratch);
    }
}

/// Transpose a row-major `rows x cols` array into a `cols x rows` array.
pub fn transpose(src: &[Complex64], rows: usize, cols: usize, dst: &mut [Complex64]) {
    debug_assert_eq!(src.len(), rows * cols);
    debug_assert_eq!(dst.len(), rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// Full 2D forward transform (unnormalized) of a row-major `rows x cols`
/// array: transform rows, then columns.
pub fn fft2(data: &mut Vec<Complex64>, rows: usize, cols: usize) {
    fft_rows(data, rows, cols);
    let mut t = vec![Complex64::default(); data.len()];
    transpose(data, rows, cols, &mut t);
    fft_rows(&mut t, cols, rows);
    transpose(&t, cols, rows, data);
}

/// Full 2D inverse transform, normalized so that ifft2(fft2(x)) = x.
pub fn ifft2(data: &mut Vec<Complex64>, rows: usize, cols: usize) {
    ifft_rows(data, rows, cols);
    let mut t = vec![Complex64::default(); data.len()];
    transpose(data, rows, cols, &mut t);
    ifft_rows(&mut t, cols, rows);
    transpose(&t, cols, rows, data);
    let scale = 1.0 / (rows * cols) as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_2d() {
        let rows = 8;
        let cols = 16;
        let orig: Vec<Complex64> = (0..rows * cols)
            .map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.7).cos()))
            .collect();
        let mut data = orig.clone();
        fft2(&mut data, rows, cols);
        ifft2(&mut data, rows, cols);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_mode_lands_in_right_bin() {
        // e^{2 pi i (2 r / rows + 3 c / cols)} should produce one spike.
        let rows = 8;
        let cols = 8;
        let tau = std::f64::consts::TAU;
        let mut data: Vec<Complex64> = (0..rows * cols)
            .map(|i| {
                let r = (i / cols) as f64;
                let c = (i % cols) as f64;
                Complex64::from_polar(1.0, tau * (2.0 * r / rows as f64 + 3.0 * c / cols as f64))
            })
            .collect();
        fft2(&mut data, rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let v = data[r * cols + c].norm();
                if r == 2 && c == 3 {
                    assert!((v - (rows * cols) as f64).abs() < 1e-9);
                } else {
                    assert!(v < 1e-9, "leakage at ({r},{c}): {v}");
                }
            }
        }
    }
}
