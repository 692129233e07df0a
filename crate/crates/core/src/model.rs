//! Domain types shared by every stage of the engine: model constants, the
//! periodic box, discretization parameters, the weighted particle ensemble,
//! and the two saturating reaction nonlinearities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the four-species invasion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Haptotactic sensitivity.
    pub chi: f64,
    pub d_u: f64,
    pub d_m: f64,
    pub d_w: f64,
    /// ECM degradation rate per unit MDE.
    pub alpha: f64,
    /// MDE decay rate.
    pub beta: f64,
    /// Oxygen production rate per unit ECM.
    pub gamma: f64,
}

impl ModelParams {
    /// Builds a parameter set, requiring every constant to be strictly positive.
    pub fn new(chi: f64, d_u: f64, d_m: f64, d_w: f64, alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let p = Self { chi, d_u, d_m, d_w, alpha, beta, gamma };
        p.validate()?;
        Ok(p)
    }

    /// Parameters of the published 2D and 3D benchmarks.
    pub fn benchmark() -> Self {
        Self { chi: 0.4, d_u: 0.01, d_m: 0.01, d_w: 0.01, alpha: 5.0, beta: 0.01, gamma: 5.0 }
    }

    fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("chi", self.chi),
            ("d_u", self.d_u),
            ("d_m", self.d_m),
            ("d_w", self.d_w),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ]
    }

    /// Strict check: all constants finite and > 0.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be a positive finite number, got {v}")));
            }
        }
        Ok(())
    }

    /// Relaxed check used for limit studies (zero drift, zero diffusion).
    pub fn validate_nonnegative(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be a nonnegative finite number, got {v}")));
            }
        }
        Ok(())
    }
}

/// The periodic box `[origin, origin + length]^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub dim: usize,
    pub length: f64,
    pub origin: Vec<f64>,
}

impl DomainSpec {
    pub fn new(dim: usize, length: f64, origin: Vec<f64>) -> Result<Self> {
        let d = Self { dim, length, origin };
        d.validate()?;
        Ok(d)
    }

    /// `[0, length]^dim`.
    pub fn cube(dim: usize, length: f64) -> Result<Self> {
        Self::new(dim, length, vec![0.0; dim])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::InvalidParameter(format!("dim must be 2 or 3, got {}", self.dim)));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::InvalidParameter(format!("length must be positive, got {}", self.length)));
        }
        if self.origin.len() != self.dim || self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidParameter("origin must have `dim` finite components".into()));
        }
        Ok(())
    }

    /// Maps an absolute coordinate to its origin-relative representative in `[0, L)`.
    pub fn to_relative(&self, x: &[f64], out: &mut [f64]) {
        for ((o, &xi), &oi) in out.iter_mut().zip(x).zip(&self.origin) {
            *o = wrap(xi - oi, self.length);
        }
    }
}

/// Reduces `x` into `[0, length)`.
#[inline]
pub fn wrap(x: f64, length: f64) -> f64 {
    let y = x.rem_euclid(length);
    // rem_euclid can round up to `length` for tiny negative inputs
    if y >= length {
        0.0
    } else {
        y
    }
}

/// Grid resolution, filter scale, and time stepping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    /// Grid size per axis (`H`), even.
    pub h_modes: usize,
    /// Gaussian filter scale `H0 <= H`.
    pub h0_cutoff: f64,
    pub dt: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub n_particles: usize,
    /// Cell size `L / H`.
    pub cell: f64,
}

impl Discretization {
    /// Largest step for which the explicit reaction stage keeps `w` nonnegative.
    pub const MAX_DT: f64 = 0.5;

    pub fn new(h_modes: usize, h0_cutoff: f64, dt: f64, t_final: f64, n_particles: usize, length: f64) -> Result<Self> {
        if h_modes < 2 || !h_modes.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("grid size H must be a positive even integer, got {h_modes}")));
        }
        if !(h0_cutoff > 0.0 && h0_cutoff <= h_modes as f64) {
            return Err(Error::InvalidParameter(format!("filter scale H0 must satisfy 0 < H0 <= H, got {h0_cutoff}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("timestep must be positive, got {dt}")));
        }
        if dt > Self::MAX_DT {
            return Err(Error::InvalidParameter(format!(
                "timestep {dt} exceeds {} (positivity of the reaction stage requires tau <= 0.5)",
                Self::MAX_DT
            )));
        }
        if !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!("final time must be nonnegative, got {t_final}")));
        }
        if n_particles == 0 {
            return Err(Error::InvalidParameter("particle count must be positive".into()));
        }
        Ok(Self {
            h_modes,
            h0_cutoff,
            dt,
            t_final,
            n_steps: step_count(t_final, dt),
            n_particles,
            cell: length / h_modes as f64,
        })
    }
}

/// `ceil(T / tau)`, guarded against `T / tau` landing a hair above an integer.
pub fn step_count(t_final: f64, dt: f64) -> usize {
    if t_final <= 0.0 {
        return 0;
    }
    let r = t_final / dt;
    let n = r.round();
    if (r - n).abs() <= 1e-9 * n.max(1.0) {
        n as usize
    } else {
        r.ceil() as usize
    }
}

/// Weighted particles; positions are origin-relative and stored flat with stride `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub dim: usize,
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn new(dim: usize, positions: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if positions.len() != dim * weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} coordinates do not match {} weights in dimension {dim}",
                positions.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("particle weights must be finite and >= 0, got {w}")));
        }
        Ok(Self { dim, positions, weights })
    }

    pub fn count(&self) -> usize {
        self.weights.len()
    }

    pub fn position(&self, p: usize) -> &[f64] {
        &self.positions[p * self.dim..(p + 1) * self.dim]
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Wraps every coordinate into `[0, length)`.
    pub fn wrap_into(&mut self, length: f64) {
        for x in &mut self.positions {
            *x = wrap(*x, length);
        }
    }
}

/// Oxygen-driven proliferation `2w / (1 + w)`.
pub fn rho(w: f64) -> Result<f64> {
    if !(w >= 0.0) {
        return Err(Error::Domain(format!("rho requires w >= 0, got {w}")));
    }
    Ok(2.0 * w / (1.0 + w))
}

/// Saturating oxygen consumption `2u / (1 + u)`.
pub fn eta(u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("eta requires u >= 0, got {u}")));
    }
    Ok(2.0 * u / (1.0 + u))
}

#[inline]
pub(crate) fn saturate(x: f64) -> f64 {
    2.0 * x / (1.0 + x)
}
