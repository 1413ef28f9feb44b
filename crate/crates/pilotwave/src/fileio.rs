//! On-disk formats: the binary state file plus the JSON/CSV report writers.
//!
//! State file layout (all little-endian):
//!   bytes 0..8   magic "PWAVE2D\0"
//!   u32          format version (1)
//!   u32, u32     nx, ny
//!   f64 × 4      x_min, dx, y_min, dy
//!   f64 × 2·nx·ny  amplitudes, row-major with x slowest, each as (re, im)
//!
//! Bit-exact by construction: saving and reloading reproduces every
//! amplitude identically, which is what makes run directories reproducible.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::state::WaveFunction2D;

const STATE_MAGIC: &[u8; 8] = b"PWAVE2D\0";
const STATE_VERSION: u32 = 1;
/// Refuses absurd allocations from corrupt headers.
const MAX_CELLS: u64 = 1 << 26;

pub fn save_state(path: &Path, psi: &WaveFunction2D) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(STATE_MAGIC)?;
    w.write_all(&STATE_VERSION.to_le_bytes())?;
    w.write_all(&(psi.nx() as u32).to_le_bytes())?;
    w.write_all(&(psi.ny() as u32).to_le_bytes())?;
    for v in [
        psi.grid_x.x_min(),
        psi.grid_x.dx(),
        psi.grid_y.x_min(),
        psi.grid_y.dx(),
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for amp in &psi.amplitudes {
        w.write_all(&amp.re.to_le_bytes())?;
        w.write_all(&amp.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn load_state(path: &Path) -> Result<WaveFunction2D> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::MalformedStateFile("file too short for header".into()))?;
    if &magic != STATE_MAGIC {
        return Err(Error::MalformedStateFile("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != STATE_VERSION {
        return Err(Error::MalformedStateFile(format!(
            "unsupported version {version}"
        )));
    }
    let nx = read_u32(&mut r)? as u64;
    let ny = read_u32(&mut r)? as u64;
    if nx * ny == 0 || nx * ny > MAX_CELLS {
        return Err(Error::MalformedStateFile(format!(
            "implausible dimensions {nx}×{ny}"
        )));
    }
    let x_min = read_f64(&mut r)?;
    let dx = read_f64(&mut r)?;
    let y_min = read_f64(&mut r)?;
    let dy = read_f64(&mut r)?;
    let grid_x = Grid1D::new(nx as usize, x_min, dx)?;
    let grid_y = Grid1D::new(ny as usize, y_min, dy)?;

    let cells = (nx * ny) as usize;
    let mut amplitudes = Vec::with_capacity(cells);
    for _ in 0..cells {
        let re = read_f64(&mut r)
            .map_err(|_| Error::MalformedStateFile("truncated amplitude block".into()))?;
        let im = read_f64(&mut r)
            .map_err(|_| Error::MalformedStateFile("truncated amplitude block".into()))?;
        amplitudes.push(Complex64::new(re, im));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::MalformedStateFile(
            "trailing bytes after amplitude block".into(),
        ));
    }
    WaveFunction2D::new(grid_x, grid_y, amplitudes)
}

/// Pretty-printed JSON with a trailing newline. Field order follows the
/// struct definitions, so identical values give identical bytes.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidConfig(format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Flat correlation-table CSV, one row per (estimator, a, b) cell.
pub fn write_tables_csv(
    path: &Path,
    tables: &[(&str, &crate::chsh::CorrelationTable)],
) -> Result<()> {
    let mut text = String::from("estimator,a,b,E,stderr,marginal_A,marginal_B,n_samples\n");
    for (name, table) in tables {
        for a in 0..2 {
            for b in 0..2 {
                text.push_str(&format!(
                    "{name},{},{},{},{},{},{},{}\n",
                    a + 1,
                    b + 1,
                    table.e[a][b],
                    table.stderr[a][b],
                    table.marginal_a[a][b],
                    table.marginal_b[a][b],
                    table.n_samples,
                ));
            }
        }
    }
    fs::write(path, text)?;
    Ok(())
}

/// Per-cell marginal histogram CSV: cell left edge, observed density,
/// exact |ψ|² density.
pub fn write_marginal_csv(
    path: &Path,
    grid: &Grid1D,
    observed: &[f64],
    expected: &[f64],
) -> Result<()> {
    debug_assert_eq!(observed.len(), grid.n());
    debug_assert_eq!(expected.len(), grid.n());
    let mut text = String::from("x,observed_density,expected_density\n");
    for j in 0..grid.n() {
        text.push_str(&format!(
            "{},{},{}\n",
            grid.point(j),
            observed[j],
            expected[j]
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhysicalParams;
    use crate::state::{build_superposition, GaussianSpec};
    use tempfile::tempdir;

    fn sample_state() -> WaveFunction2D {
        let g = Grid1D::from_range(32, -10.0, 10.0).unwrap();
        build_superposition(
            g,
            g,
            &[(
                Complex64::new(0.8, 0.6),
                GaussianSpec::new(1.0, 1.2, 0.3).unwrap(),
                GaussianSpec::new(-0.5, 0.9, -0.2).unwrap(),
            )],
            &PhysicalParams::natural(),
        )
        .unwrap()
    }

    #[test]
    fn state_roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s.state");
        let psi = sample_state();
        save_state(&path, &psi).unwrap();
        let back = load_state(&path).unwrap();
        assert_eq!(back.grid_x, psi.grid_x);
        assert_eq!(back.grid_y, psi.grid_y);
        for (a, b) in back.amplitudes.iter().zip(&psi.amplitudes) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s.state");
        let psi = sample_state();
        save_state(&path, &psi).unwrap();

        let good = fs::read(&path).unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] ^= 0xff;
        fs::write(&path, &bad_magic).unwrap();
        assert!(matches!(
            load_state(&path),
            Err(Error::MalformedStateFile(_))
        ));

        fs::write(&path, &good[..good.len() - 9]).unwrap();
        assert!(matches!(
            load_state(&path),
            Err(Error::MalformedStateFile(_))
        ));

        let mut trailing = good.clone();
        trailing.push(0);
        fs::write(&path, &trailing).unwrap();
        assert!(matches!(
            load_state(&path),
            Err(Error::MalformedStateFile(_))
        ));
    }

    #[test]
    fn csv_layout_is_stable() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut table = crate::chsh::CorrelationTable {
            e: [[0.25, -0.5], [0.75, 1.0]],
            stderr: [[0.01; 2]; 2],
            marginal_a: [[0.5; 2]; 2],
            marginal_b: [[0.5; 2]; 2],
            n_samples: 100,
        };
        table.e[0][0] = 0.125;
        write_tables_csv(&path, &[("quantum", &table)]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "estimator,a,b,E,stderr,marginal_A,marginal_B,n_samples"
        );
        assert_eq!(lines.next().unwrap(), "quantum,1,1,0.125,0.01,0.5,0.5,100");
        assert_eq!(text.lines().count(), 5);
    }
}
