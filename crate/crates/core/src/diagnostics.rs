//! Error measurement across resolutions: Fourier-truncation downsampling,
//! the relative L2 metric, slope fits, and radial profiles.

use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{FftPlan, Grid};
use crate::io::write_csv_table;
use crate::spectral::Field;

/// Grid size of the comparison grid per axis.
pub const COMPARISON_GRID: usize = 16;

/// Keeps the modes with `|q_j| < target / 2` on every axis and resynthesizes
/// them on a `target^dim` grid.
pub fn downsample_fourier(field: &mut Field, target: usize) -> Result<Field> {
    let grid = field.grid();
    if target > grid.n || target < 2 || !target.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("target {target} must be even and at most {}", grid.n)));
    }
    let coarse = Grid::new(grid.dim, target, grid.length);
    let src = field.spectral();
    let half = (target / 2) as i64;
    let mut out = vec![Complex64::default(); coarse.len()];
    let mut ix = [0usize; 3];
    let mut jx = [0usize; 3];
    'modes: for (idx, c) in out.iter_mut().enumerate() {
        coarse.unflatten(idx, &mut ix);
        for j in 0..grid.dim {
            let q = coarse.freq(ix[j]);
            if q.abs() >= half {
                continue 'modes;
            }
            jx[j] = q.rem_euclid(grid.n as i64) as usize;
        }
        *c = src[grid.flatten(&jx)];
    }
    let mut f = Field::from_spectral(coarse, FftPlan::new(target), out);
    f.dft_inverse();
    Ok(f)
}

/// `(L / n)^{d/2} (sum u^2)^{1/2}` on an `n^d` grid.
pub fn grid_l2_norm(values: &[f64], grid: Grid) -> f64 {
    grid.cell().powf(grid.dim as f64 / 2.0) * values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `||u1 - u2|| / max(||u1||, ||u2||)` after downsampling both to `target`.
pub fn relative_error(u1: &mut Field, u2: &mut Field, target: usize) -> Result<f64> {
    let (g1, g2) = (u1.grid(), u2.grid());
    if g1.dim != g2.dim || (g1.length - g2.length).abs() > 1e-12 * g1.length {
        return Err(Error::InvalidParameter("fields live on different domains".into()));
    }
    let a = downsample_fourier(u1, target)?;
    let b = downsample_fourier(u2, target)?;
    let (a, b) = (a.physical_ref(), b.physical_ref());
    let coarse = Grid::new(g1.dim, target, g1.length);
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let denom = grid_l2_norm(a, coarse).max(grid_l2_norm(b, coarse));
    if denom == 0.0 {
        return Err(Error::InvalidParameter("both fields vanish on the comparison grid".into()));
    }
    Ok(grid_l2_norm(&diff, coarse) / denom)
}

/// [`relative_error`] on plain nodal arrays.
pub fn relative_error_nodal(u1: &[f64], g1: Grid, u2: &[f64], g2: Grid, target: usize) -> Result<f64> {
    let mut a = Field::from_physical(g1, FftPlan::new(g1.n), u1.to_vec());
    let mut b = Field::from_physical(g2, FftPlan::new(g2.n), u2.to_vec());
    relative_error(&mut a, &mut b, target)
}

/// One row of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub h: usize,
    pub n_particles: usize,
    pub tau: f64,
    pub time: f64,
    pub error: f64,
    pub seed: u64,
    pub reference_h: usize,
}

/// Least-squares slope of `log2 E` against `log2 H`. The records exclude the
/// reference resolution, so three resolutions give two points.
pub fn convergence_slope(records: &[ErrorRecord]) -> Result<f64> {
    let mut hs: Vec<usize> = records.iter().map(|r| r.h).collect();
    hs.sort_unstable();
    hs.dedup();
    if hs.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "a slope fit needs errors at 2 or more distinct resolutions, got {}",
            hs.len()
        )));
    }
    if let Some(r) = records.iter().find(|r| !(r.error > 0.0) || !r.error.is_finite()) {
        return Err(Error::InvalidParameter(format!("error at H = {} must be positive, got {}", r.h, r.error)));
    }
    let pts: Vec<(f64, f64)> = records.iter().map(|r| ((r.h as f64).log2(), r.error.log2())).collect();
    Ok(fit_slope(&pts))
}

/// Ordinary least-squares slope through `(x, y)` pairs.
pub fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn write_convergence_csv(path: &Path, records: &[ErrorRecord]) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.h.to_string(),
                r.n_particles.to_string(),
                r.tau.to_string(),
                r.time.to_string(),
                format!("{:e}", r.error),
                r.seed.to_string(),
            ]
        })
        .collect();
    write_csv_table(path, &["H", "P", "tau", "T", "E", "seed"], &rows)
}

/// Shell averages of a nodal field around `center` (origin-relative), with
/// the minimal periodic distance. Returns `(bin centre radius, mean)` pairs
/// for nonempty bins of width `dr`.
pub fn radial_profile(values: &[f64], grid: Grid, center: &[f64], dr: f64) -> Vec<(f64, f64)> {
    let half = grid.length / 2.0;
    let bins = (half / dr).ceil() as usize;
    let mut sum = vec![0.0; bins];
    let mut cnt = vec![0usize; bins];
    for (i, &v) in values.iter().enumerate() {
        let x = grid.node(i);
        let r2: f64 = (0..grid.dim)
            .map(|j| {
                let mut d = (x[j] - center[j]).abs() % grid.length;
                if d > half {
                    d = grid.length - d;
                }
                d * d
            })
            .sum();
        let b = (r2.sqrt() / dr) as usize;
        if b < bins {
            sum[b] += v;
            cnt[b] += 1;
        }
    }
    (0..bins).filter(|&b| cnt[b] > 0).map(|b| ((b as f64 + 0.5) * dr, sum[b] / cnt[b] as f64)).collect()
}

/// Outermost radius at which the profile is still at or above `level`.
pub fn front_radius(profile: &[(f64, f64)], level: f64) -> f64 {
    profile.iter().filter(|p| p.1 >= level).map(|p| p.0).fold(0.0, f64::max)
}
