//! One operator-split step of the chemical triple `(v, m, w)`.
//!
//! The reaction stage is explicit for `m` and `w` and, by default, implicit
//! for `v` (`v <- v / (1 + alpha tau m)`). The propagation stage then applies
//! the aliased diffusion/decay kernel to `m` and `w` and the low-pass filter
//! to all three. Both stages map nonnegative data to nonnegative data for
//! `tau <= 0.5`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FftPlan, Grid};
use crate::model::{saturate, ModelParams};
use crate::spectral::{
    build_kernel_flavored, lowpass_gaussian, Field, KernelFlavor, PropagationKernel, SeparableStencil,
};

/// Negative values down to `-POSITIVITY_TOL * max` are attributed to round-off.
pub const POSITIVITY_TOL: f64 = 1e-12;

/// Widest per-axis stencil applied in physical space before falling back to FFT.
pub const MAX_PHYSICAL_STENCIL: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VUpdate {
    /// `v <- v / (1 + alpha tau m)`.
    Implicit,
    /// `v <- v - tau alpha m v`, then the generic propagation path.
    ExplicitKernel,
}

/// Where the Gaussian propagation is carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationRoute {
    /// Physical stencil when narrow enough, otherwise spectral.
    Auto,
    /// Separable positive stencil in physical space.
    Physical,
    /// Mode-wise multiply between forward and inverse DFT.
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowpassSpec {
    pub enabled: bool,
    /// Filter scale `H0`; `None` means `H0 = H`.
    pub h0: Option<f64>,
    pub flavor: KernelFlavor,
}

impl Default for LowpassSpec {
    fn default() -> Self {
        Self { enabled: false, h0: None, flavor: KernelFlavor::Aliased }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChemOptions {
    pub kernel: KernelFlavor,
    pub lowpass: LowpassSpec,
    pub v_update: VUpdate,
    pub route: PropagationRoute,
}

impl Default for ChemOptions {
    fn default() -> Self {
        Self {
            kernel: KernelFlavor::Lattice,
            lowpass: LowpassSpec::default(),
            v_update: VUpdate::Implicit,
            route: PropagationRoute::Auto,
        }
    }
}

/// Kernel multiply followed by the low-pass filter for one species.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub kernel: PropagationKernel,
    /// Combined spectral multipliers (kernel times filter).
    pub multipliers: Vec<f64>,
    /// Physical-space equivalent, when the route allows it.
    pub stencil: Option<SeparableStencil>,
    pub decay_factor: f64,
    identity: bool,
}

impl Propagator {
    fn new(kernel: PropagationKernel, lowpass: &LowpassSpec, route: PropagationRoute) -> Self {
        let grid = kernel.grid;
        let n = grid.n;
        let (filter_axis, filter_weights) = if lowpass.enabled {
            let h0 = lowpass.h0.unwrap_or(n as f64);
            let g = lowpass_gaussian(grid, h0);
            (g.multiplier(lowpass.flavor), Some(g.slot_weights(lowpass.flavor)))
        } else {
            (vec![1.0; n], None)
        };
        let axis: Vec<f64> = kernel.axis.iter().zip(&filter_axis).map(|(a, b)| a * b).collect();
        let decay_factor = kernel.decay_factor();
        let multipliers: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let mut ix = [0usize; 3];
                grid.unflatten(idx, &mut ix);
                ix[..grid.dim].iter().fold(decay_factor, |acc, &k| acc * axis[k])
            })
            .collect();
        let identity = axis.iter().all(|&a| a == 1.0);

        // A physical stencil exists only when every factor has positive weights.
        let kernel_weights = kernel.gaussian().slot_weights(kernel.flavor);
        let combined = match (kernel_weights, filter_weights) {
            (Some(k), None) => Some(k),
            (Some(k), Some(Some(f))) => Some(SeparableStencil::compose_slots(&k, &f)),
            _ => None,
        };
        let stencil = match combined {
            Some(c) if route != PropagationRoute::Spectral => {
                let st = SeparableStencil::from_slot_weights(&c);
                (route == PropagationRoute::Physical || st.width() <= MAX_PHYSICAL_STENCIL).then_some(st)
            }
            _ => None,
        };
        if route == PropagationRoute::Physical && stencil.is_none() {
            panic!("physical propagation requires kernel and filter flavors with positive weights");
        }
        Self { kernel, multipliers, stencil, decay_factor, identity }
    }

    /// Applies the propagation in place to nodal data.
    pub fn apply(&self, field: &mut Field) {
        if self.identity {
            if self.decay_factor != 1.0 {
                let f = self.decay_factor;
                field.physical_mut().par_iter_mut().for_each(|v| *v *= f);
            }
            return;
        }
        match &self.stencil {
            Some(st) => {
                let grid = field.grid();
                let mut data = field.physical_mut().to_vec();
                st.apply(grid, &mut data, self.decay_factor);
                field.physical_mut().copy_from_slice(&data);
            }
            None => {
                field.apply_multiplier(&self.multipliers);
                field.dft_inverse();
            }
        }
    }
}

/// The chemical fields and their per-step propagators.
#[derive(Debug, Clone)]
pub struct ChemState {
    pub v: Field,
    pub m: Field,
    pub w: Field,
    pub params: ModelParams,
    pub tau: f64,
    pub options: ChemOptions,
    prop_v: Propagator,
    prop_m: Propagator,
    prop_w: Propagator,
    /// Maximum of the initial `v`, the cap `v` can never exceed.
    pub v_cap: f64,
}

/// Per-species source terms on the grid (the `v` term is handled implicitly).
#[derive(Debug, Clone)]
pub struct SourceTerms {
    pub s_m: Vec<f64>,
    pub s_w: Vec<f64>,
}

/// Minimum and maximum of each species after a step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChemExtrema {
    pub v: (f64, f64),
    pub m: (f64, f64),
    pub w: (f64, f64),
}

fn extrema(x: &[f64]) -> (f64, f64) {
    x.par_iter()
        .fold(|| (f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
        .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)))
}

impl ChemState {
    pub fn new(
        grid: Grid,
        plan: Arc<FftPlan>,
        v: Vec<f64>,
        m: Vec<f64>,
        w: Vec<f64>,
        params: ModelParams,
        tau: f64,
        options: ChemOptions,
    ) -> Result<Self> {
        for (name, f) in [("v", &v), ("m", &m), ("w", &w)] {
            if f.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidParameter(format!("initial {name} must be finite and nonnegative")));
            }
        }
        let build = |d: f64, r: f64| build_kernel_flavored(options.kernel, d, r, tau, grid);
        let prop_v = Propagator::new(build(0.0, 0.0), &options.lowpass, options.route);
        let prop_m = Propagator::new(build(params.d_m, params.beta), &options.lowpass, options.route);
        let prop_w = Propagator::new(build(params.d_w, 1.0), &options.lowpass, options.route);
        let v_cap = v.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            v: Field::from_physical(grid, plan.clone(), v),
            m: Field::from_physical(grid, plan.clone(), m),
            w: Field::from_physical(grid, plan, w),
            params,
            tau,
            options,
            prop_v,
            prop_m,
            prop_w,
            v_cap,
        })
    }

    pub fn grid(&self) -> Grid {
        self.v.grid()
    }

    pub fn propagator_m(&self) -> &Propagator {
        &self.prop_m
    }

    pub fn propagator_w(&self) -> &Propagator {
        &self.prop_w
    }

    pub fn extrema(&mut self) -> ChemExtrema {
        ChemExtrema { v: extrema(self.v.physical()), m: extrema(self.m.physical()), w: extrema(self.w.physical()) }
    }

    /// `S_m = u` and `S_w = gamma v - eta(u) w` on the grid.
    pub fn source_term(&mut self, u_grid: &[f64]) -> Result<SourceTerms> {
        if let Some(bad) = u_grid.iter().find(|u| !(**u >= 0.0)) {
            return Err(Error::Domain(format!("source term needs u >= 0, got {bad}")));
        }
        let gamma = self.params.gamma;
        let v = self.v.physical().to_vec();
        let w = self.w.physical();
        let s_w = u_grid
            .par_iter()
            .zip(v.par_iter())
            .zip(w.par_iter())
            .map(|((&u, &v), &w)| gamma * v - saturate(u) * w)
            .collect();
        Ok(SourceTerms { s_m: u_grid.to_vec(), s_w })
    }

    /// `v <- v / (1 + alpha tau m)` nodewise.
    pub fn update_v_implicit(&mut self, tau: f64) {
        let a = self.params.alpha * tau;
        let m = self.m.physical().to_vec();
        self.v.physical_mut().par_iter_mut().zip(m.par_iter()).for_each(|(v, &m)| *v /= 1.0 + a * m);
    }

    /// Advances `(v, m, w)` by one step given the deposited cell density.
    ///
    /// Negative deposit values (possible with the fourth-order kernel) are
    /// clamped to zero before entering the reaction terms.
    pub fn step_concentrations(&mut self, u_grid: &[f64], step: usize) -> Result<ChemExtrema> {
        let tau = self.tau;
        if tau == 0.0 {
            return Ok(self.extrema());
        }
        let p = self.params;
        let u: Vec<f64> = u_grid.par_iter().map(|&x| x.max(0.0)).collect();

        let v_old = self.v.physical().to_vec();
        let m_old = self.m.physical().to_vec();

        // reaction stage for w and m, evaluated with the old v
        {
            let w = self.w.physical_mut();
            w.par_iter_mut().zip(u.par_iter()).zip(v_old.par_iter()).for_each(|((w, &u), &v)| {
                *w += tau * (p.gamma * v - saturate(u) * *w);
            });
        }
        {
            let m = self.m.physical_mut();
            m.par_iter_mut().zip(u.par_iter()).for_each(|(m, &u)| *m += tau * u);
        }
        match self.options.v_update {
            VUpdate::Implicit => {
                let a = p.alpha * tau;
                self.v.physical_mut().par_iter_mut().zip(m_old.par_iter()).for_each(|(v, &m)| *v /= 1.0 + a * m);
            }
            VUpdate::ExplicitKernel => {
                let a = p.alpha * tau;
                self.v.physical_mut().par_iter_mut().zip(m_old.par_iter()).for_each(|(v, &m)| *v -= a * m * *v);
            }
        }

        self.prop_v.apply(&mut self.v);
        self.prop_m.apply(&mut self.m);
        self.prop_w.apply(&mut self.w);

        let ext = self.extrema();
        for (name, (lo, hi)) in [("v", ext.v), ("m", ext.m), ("w", ext.w)] {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::NonFinite { what: name, step });
            }
            if lo < -POSITIVITY_TOL * hi.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::Positivity { field: name, step, min: lo, max: hi });
            }
        }
        Ok(ext)
    }
}
