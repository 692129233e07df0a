//! Explicit finite-difference solver for the 2D system, used to cross-check
//! the particle engine.
//!
//! Advection is in flux form with upwinded MUSCL (minmod) face values, so the
//! total of `u` telescopes; diffusion uses the 5-point Laplacian; reactions
//! are explicit. Time stepping is Heun's method with a CFL-limited step.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{saturate, ModelParams};
use crate::simulator::InitialData;

/// Fraction of the stability limit actually used.
pub const CFL_SAFETY: f64 = 0.8;

/// Nodal fields on an `n x n` periodic grid (x fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct MeshState {
    pub n: usize,
    pub length: f64,
    pub origin: [f64; 2],
    pub time: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub m: Vec<f64>,
    pub w: Vec<f64>,
    /// Hold `rho(w) - 1` at zero, as in the particle engine's neutral-growth mode.
    pub neutral_growth: bool,
}

struct Rates {
    u: Vec<f64>,
    v: Vec<f64>,
    m: Vec<f64>,
    w: Vec<f64>,
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

impl MeshState {
    pub fn from_initial(initial: &InitialData, n: usize, length: f64, origin: [f64; 2]) -> Result<Self> {
        if initial.dim() == Some(3) {
            return Err(Error::Unsupported("the reference solver is two-dimensional".into()));
        }
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("mesh size must be even and >= 4, got {n}")));
        }
        let h = length / n as f64;
        let eval = |f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
            (0..n * n).map(|i| f(&[origin[0] + (i % n) as f64 * h, origin[1] + (i / n) as f64 * h])).collect()
        };
        let s = Self {
            n,
            length,
            origin,
            time: 0.0,
            u: eval(&|x| initial.u0(x)),
            v: eval(&|x| initial.v0(x)),
            m: eval(&|x| initial.m0(x)),
            w: eval(&|x| initial.w0(x)),
            neutral_growth: false,
        };
        for (name, f) in [("u", &s.u), ("v", &s.v), ("m", &s.m), ("w", &s.w)] {
            if f.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::DegenerateInitial(format!("initial {name} must be finite and nonnegative")));
            }
        }
        Ok(s)
    }

    pub fn cell(&self) -> f64 {
        self.length / self.n as f64
    }

    /// `h^2 sum u`.
    pub fn mass(&self) -> f64 {
        self.cell().powi(2) * self.u.iter().sum::<f64>()
    }

    /// Largest stable step: `min(h^2 / (4 D_max), h / (2 chi max|grad v|), 1 / max reaction rate)`.
    pub fn stable_dt(&self, params: &ModelParams) -> f64 {
        let h = self.cell();
        let n = self.n;
        let dmax = params.d_u.max(params.d_m).max(params.d_w);
        let mut limit = f64::INFINITY;
        if dmax > 0.0 {
            limit = limit.min(h * h / (4.0 * dmax));
        }
        let gmax = (0..n * n)
            .into_par_iter()
            .map(|i| {
                let (x, y) = (i % n, i / n);
                let gx = (self.v[y * n + (x + 1) % n] - self.v[i]).abs() / h;
                let gy = (self.v[((y + 1) % n) * n + x] - self.v[i]).abs() / h;
                gx.max(gy)
            })
            .reduce(|| 0.0, f64::max);
        if params.chi * gmax > 0.0 {
            limit = limit.min(h / (2.0 * params.chi * gmax));
        }
        let mmax = self.m.iter().cloned().fold(0.0, f64::max);
        let rate = params.alpha * mmax + 2.0 + 1.0;
        limit.min(1.0 / rate)
    }

    fn rates(&self, p: &ModelParams, u: &[f64], v: &[f64], m: &[f64], w: &[f64]) -> Rates {
        let n = self.n;
        let h = self.cell();
        let inv_h2 = 1.0 / (h * h);
        let idx = |x: usize, y: usize| (y % n) * n + (x % n);
        let lap = |f: &[f64], x: usize, y: usize| {
            (f[idx(x + 1, y)] + f[idx(x + n - 1, y)] + f[idx(x, y + 1)] + f[idx(x, y + n - 1)] - 4.0 * f[idx(x, y)])
                * inv_h2
        };
        // upwinded face flux chi u dv/dx through the face between `a` and `b`, with neighbours `aa` and `bb`
        let face = |aa: usize, a: usize, b: usize, bb: usize| {
            let vel = p.chi * (v[b] - v[a]) / h;
            if vel >= 0.0 {
                vel * (u[a] + 0.5 * minmod(u[a] - u[aa], u[b] - u[a]))
            } else {
                vel * (u[b] - 0.5 * minmod(u[b] - u[a], u[bb] - u[b]))
            }
        };
        let neutral = self.neutral_growth;
        let mut out = Rates { u: vec![0.0; n * n], v: vec![0.0; n * n], m: vec![0.0; n * n], w: vec![0.0; n * n] };
        out.u
            .par_iter_mut()
            .zip(out.v.par_iter_mut())
            .zip(out.m.par_iter_mut().zip(out.w.par_iter_mut()))
            .enumerate()
            .for_each(|(i, ((ru, rv), (rm, rw)))| {
                let (x, y) = (i % n, i / n);
                let fxp = face(idx(x + n - 1, y), i, idx(x + 1, y), idx(x + 2, y));
                let fxm = face(idx(x + n - 2, y), idx(x + n - 1, y), i, idx(x + 1, y));
                let fyp = face(idx(x, y + n - 1), i, idx(x, y + 1), idx(x, y + 2));
                let fym = face(idx(x, y + n - 2), idx(x, y + n - 1), i, idx(x, y + 1));
                let growth = if neutral { 0.0 } else { saturate(w[i].max(0.0)) - 1.0 };
                *ru = -(fxp - fxm + fyp - fym) / h + p.d_u * lap(u, x, y) + growth * u[i];
                *rv = -p.alpha * m[i] * v[i];
                *rm = p.d_m * lap(m, x, y) - p.beta * m[i] + u[i];
                *rw = p.d_w * lap(w, x, y) - saturate(u[i].max(0.0)) * w[i] + p.gamma * v[i] - w[i];
            });
        out
    }

    fn check_finite(&self) -> Result<()> {
        for (name, f) in [("u", &self.u), ("v", &self.v), ("m", &self.m), ("w", &self.w)] {
            if f.par_iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { what: name, step: 0 });
            }
        }
        Ok(())
    }
}

/// One Heun step of size `dt`; fails when `dt` exceeds the stability limit.
pub fn reference_step(state: &MeshState, params: &ModelParams, dt: f64) -> Result<MeshState> {
    let limit = state.stable_dt(params);
    if dt > limit {
        return Err(Error::Cfl { dt, limit });
    }
    let k1 = state.rates(params, &state.u, &state.v, &state.m, &state.w);
    let axpy = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> { a.par_iter().zip(k).map(|(x, r)| x + s * r).collect() };
    let u1 = axpy(&state.u, &k1.u, dt);
    let v1 = axpy(&state.v, &k1.v, dt);
    let m1 = axpy(&state.m, &k1.m, dt);
    let w1 = axpy(&state.w, &k1.w, dt);
    let k2 = state.rates(params, &u1, &v1, &m1, &w1);
    let avg = |a: &[f64], r1: &[f64], r2: &[f64]| -> Vec<f64> {
        a.par_iter().zip(r1.par_iter().zip(r2)).map(|(x, (p, q))| x + 0.5 * dt * (p + q)).collect()
    };
    let next = MeshState {
        u: avg(&state.u, &k1.u, &k2.u),
        v: avg(&state.v, &k1.v, &k2.v),
        m: avg(&state.m, &k1.m, &k2.m),
        w: avg(&state.w, &k1.w, &k2.w),
        time: state.time + dt,
        ..state.clone()
    };
    next.check_finite()?;
    Ok(next)
}

/// Integrates to `t_final` with steps `min(dt_max, CFL_SAFETY * limit)`,
/// shortening the last one to land on `t_final`.
pub fn reference_run(mut state: MeshState, params: &ModelParams, t_final: f64, dt_max: f64) -> Result<MeshState> {
    if !(dt_max > 0.0) {
        return Err(Error::InvalidParameter(format!("dt_max must be positive, got {dt_max}")));
    }
    while state.time < t_final - 1e-12 {
        let dt = (CFL_SAFETY * state.stable_dt(params)).min(dt_max).min(t_final - state.time);
        state = reference_step(&state, params, dt)?;
    }
    Ok(state)
}
