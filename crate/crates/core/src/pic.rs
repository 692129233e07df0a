//! Particle/grid transfer: assignment functions, particle-to-grid deposit,
//! and grid-to-particle interpolation.
//!
//! `Linear2` is the tensor hat function (radius one cell). `Quartic4` has
//! radius two cells: inner nodes (`p_j <= 1` on every axis) carry
//! `prod (1 - p_j) * (1 + sum p_j (1 - p_j) / 2)`, nodes with exactly one axis
//! in `(1, 2]` carry the cubic-Lagrange outer lobe
//! `-(1/6) prod_{k != j} (1 - p_k) (p_j - 1)(2 - p_j)(3 - p_j)`, and all other
//! nodes are zero. Both sum to one over the stencil.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::model::ParticleEnsemble;
use crate::spectral::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentOrder {
    Linear2,
    Quartic4,
}

impl AssignmentOrder {
    /// Support radius in cells along each axis.
    pub fn radius(self) -> usize {
        match self {
            Self::Linear2 => 1,
            Self::Quartic4 => 2,
        }
    }

    /// Nodes per axis touched by one point.
    pub fn span(self) -> usize {
        2 * self.radius()
    }
}

/// Minimal periodic distance in cell units.
#[inline]
fn periodic_cells(x: f64, node: f64, length: f64, h: f64) -> f64 {
    let mut d = (x - node).abs() % length;
    if d > 0.5 * length {
        d = length - d;
    }
    d / h
}

/// Per-axis kernel factors for a given vector of cell distances, without the
/// `h^-d` normalization (i.e. `K_h = h^d R_h`).
pub fn kernel_weight(order: AssignmentOrder, p: &[f64]) -> f64 {
    match order {
        AssignmentOrder::Linear2 => p.iter().map(|&pj| (1.0 - pj).max(0.0)).product(),
        AssignmentOrder::Quartic4 => {
            let mut outer = None;
            for (j, &pj) in p.iter().enumerate() {
                if pj > 1.0 {
                    if pj > 2.0 || outer.is_some() {
                        return 0.0;
                    }
                    outer = Some(j);
                }
            }
            match outer {
                None => {
                    let prod: f64 = p.iter().map(|&pj| 1.0 - pj).product();
                    let corr: f64 = p.iter().map(|&pj| 0.5 * pj * (1.0 - pj)).sum();
                    prod * (1.0 + corr)
                }
                Some(j) => {
                    let pj = p[j];
                    let rest: f64 = p.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, &pk)| 1.0 - pk).product();
                    -rest * (pj - 1.0) * (2.0 - pj) * (3.0 - pj) / 6.0
                }
            }
        }
    }
}

/// `R_h(x, qh)` with distances measured on the minimal periodic image.
pub fn assignment_weight(order: AssignmentOrder, x: &[f64], q: &[usize], grid: Grid) -> f64 {
    let h = grid.cell();
    let mut p = [0.0; 3];
    for j in 0..grid.dim {
        p[j] = periodic_cells(x[j], q[j] as f64 * h, grid.length, h);
    }
    kernel_weight(order, &p[..grid.dim]) / h.powi(grid.dim as i32)
}

/// Grid indices and kernel weights (`K_h`) of the nodes a point interacts with.
#[derive(Debug, Clone, Default)]
pub struct SupportStencil {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Per-axis node indices and distances of the stencil around `x`.
#[inline]
fn axis_nodes(order: AssignmentOrder, x: f64, h: f64, n: usize) -> ([usize; 4], [f64; 4]) {
    let s = x / h;
    let base = s.floor();
    let f = s - base;
    let b = base as isize;
    let ni = n as isize;
    let mut idx = [0usize; 4];
    let mut dist = [0.0; 4];
    match order {
        AssignmentOrder::Linear2 => {
            idx[0] = b.rem_euclid(ni) as usize;
            idx[1] = (b + 1).rem_euclid(ni) as usize;
            dist[0] = f;
            dist[1] = 1.0 - f;
        }
        AssignmentOrder::Quartic4 => {
            for k in 0..4 {
                idx[k] = (b - 1 + k as isize).rem_euclid(ni) as usize;
            }
            dist = [1.0 + f, f, 1.0 - f, 2.0 - f];
        }
    }
    (idx, dist)
}

/// Visits `(flat_index, K_h weight)` for every stencil node of `x`.
/// Periodic coalescing is left to the caller (nodes may repeat only when `H < span`).
#[inline]
fn for_each_node(order: AssignmentOrder, grid: Grid, x: &[f64], mut visit: impl FnMut(usize, f64)) {
    let h = grid.cell();
    let n = grid.n;
    let span = order.span();
    let mut idx = [[0usize; 4]; 3];
    let mut dist = [[0.0; 4]; 3];
    for j in 0..grid.dim {
        let (i, d) = axis_nodes(order, x[j], h, n);
        idx[j] = i;
        dist[j] = d;
    }
    let mut p = [0.0; 3];
    match grid.dim {
        2 => {
            for b in 0..span {
                for a in 0..span {
                    p[0] = dist[0][a];
                    p[1] = dist[1][b];
                    let w = kernel_weight(order, &p[..2]);
                    if w != 0.0 {
                        visit(idx[0][a] + n * idx[1][b], w);
                    }
                }
            }
        }
        _ => {
            for c in 0..span {
                for b in 0..span {
                    for a in 0..span {
                        p[0] = dist[0][a];
                        p[1] = dist[1][b];
                        p[2] = dist[2][c];
                        let w = kernel_weight(order, &p[..3]);
                        if w != 0.0 {
                            visit(idx[0][a] + n * (idx[1][b] + n * idx[2][c]), w);
                        }
                    }
                }
            }
        }
    }
}

/// The support set of `x` with kernel weights; repeated nodes are coalesced.
pub fn support(order: AssignmentOrder, grid: Grid, x: &[f64]) -> SupportStencil {
    let mut st = SupportStencil::default();
    for_each_node(order, grid, x, |i, w| {
        if let Some(k) = st.indices.iter().position(|&j| j == i) {
            st.weights[k] += w;
        } else {
            st.indices.push(i);
            st.weights.push(w);
        }
    });
    st
}

/// Number of particles accumulated into one private grid during deposit.
/// Fixed so the reduction order does not depend on the thread count.
pub const DEPOSIT_CHUNK: usize = 1 << 15;

/// Deposits particle mass onto the grid: `u(qh) = sum_p a_p R_h(X_p, qh)`.
pub fn deposit(ensemble: &ParticleEnsemble, order: AssignmentOrder, grid: Grid) -> Vec<f64> {
    assert_eq!(ensemble.dim, grid.dim);
    let dim = grid.dim;
    let inv_hd = 1.0 / grid.cell().powi(dim as i32);
    let partials: Vec<Vec<f64>> = ensemble
        .positions
        .par_chunks(DEPOSIT_CHUNK * dim)
        .zip(ensemble.weights.par_chunks(DEPOSIT_CHUNK))
        .map(|(pos, wts)| {
            let mut acc = vec![0.0; grid.len()];
            for (x, &a) in pos.chunks_exact(dim).zip(wts) {
                if a == 0.0 {
                    continue;
                }
                for_each_node(order, grid, x, |i, k| acc[i] += a * k);
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; grid.len()];
    for part in &partials {
        out.par_iter_mut().zip(part.par_iter()).for_each(|(o, &v)| *o += v);
    }
    out.par_iter_mut().for_each(|v| *v *= inv_hd);
    out
}

/// Interpolates nodal values at origin-relative points: `sum_q K_h(X, qh) f(qh)`.
pub fn interpolate(values: &[f64], grid: Grid, points: &[f64], order: AssignmentOrder) -> Vec<f64> {
    assert_eq!(values.len(), grid.len());
    points
        .par_chunks_exact(grid.dim)
        .map(|x| {
            let mut s = 0.0;
            for_each_node(order, grid, x, |i, k| s += k * values[i]);
            s
        })
        .collect()
}

/// Interpolates several nodal arrays at once (shared stencil evaluation).
pub fn interpolate_many(fields: &[&[f64]], grid: Grid, points: &[f64], order: AssignmentOrder) -> Vec<Vec<f64>> {
    let nf = fields.len();
    let flat: Vec<f64> = points
        .par_chunks_exact(grid.dim)
        .flat_map_iter(|x| {
            let mut s = [0.0; 4];
            for_each_node(order, grid, x, |i, k| {
                for (sf, f) in s.iter_mut().zip(fields) {
                    *sf += k * f[i];
                }
            });
            s.into_iter().take(nf)
        })
        .collect();
    (0..nf).map(|f| flat.iter().skip(f).step_by(nf).copied().collect()).collect()
}

/// Convenience wrapper over a spectral field.
pub fn interpolate_field(field: &mut Field, points: &[f64], order: AssignmentOrder) -> Vec<f64> {
    let grid = field.grid();
    interpolate(field.physical(), grid, points, order)
}
