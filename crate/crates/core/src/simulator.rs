//! The particle-field time loop: initialization from closed-form data, the
//! per-step pipeline, and snapshot emission.

use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chem::{ChemExtrema, ChemOptions, ChemState, LowpassSpec, PropagationRoute, VUpdate, POSITIVITY_TOL};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{FftPlan, Grid};
use crate::io::GridSnapshot;
use crate::model::{wrap, Discretization, DomainSpec, ModelParams, ParticleEnsemble};
use crate::particles::{
    advance_particles, mass_report, ordered_sum, residual_resample, MassReport, RngStream, StreamTag, RNG_BLOCK,
};
use crate::pic::{deposit, interpolate_many, AssignmentOrder};
use crate::spectral::{spectral_gradient, KernelFlavor};

/// When to replace the ensemble by equal-weight particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum ResamplePolicy {
    #[default]
    Off,
    Every {
        steps: usize,
    },
    RatioAbove {
        threshold: f64,
    },
}

/// Everything a run needs besides the initial data.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub domain: DomainSpec,
    pub disc: Discretization,
    pub seed: u64,
    pub deposit_order: AssignmentOrder,
    pub interp_order: AssignmentOrder,
    pub v_update: VUpdate,
    pub kernel: KernelFlavor,
    /// Apply the Gaussian low-pass filter at scale `disc.h0_cutoff` every step.
    pub filter: bool,
    pub filter_flavor: KernelFlavor,
    pub route: PropagationRoute,
    pub resample: ResamplePolicy,
    /// Snapshot period in steps; 0 keeps only the first and last.
    pub snapshot_every: usize,
    /// Grid size for the deposited `u` in snapshots.
    pub plot_grid: usize,
    pub plot_order: AssignmentOrder,
    /// Freeze particle weights (`rho(w) - 1` replaced by 0).
    pub neutral_growth: bool,
    /// Accept zero model constants (limit studies).
    pub allow_zero_params: bool,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Benchmark parameters on `[0, 6]^dim` with the given resolution.
    pub fn benchmark(dim: usize, h: usize, n_particles: usize, dt: f64, t_final: f64) -> Result<Self> {
        let domain = DomainSpec::cube(dim, 6.0)?;
        let disc = Discretization::new(h, h as f64, dt, t_final, n_particles, domain.length)?;
        Ok(Self {
            params: ModelParams::benchmark(),
            domain,
            disc,
            seed: 0,
            deposit_order: AssignmentOrder::Quartic4,
            interp_order: AssignmentOrder::Linear2,
            v_update: VUpdate::Implicit,
            kernel: KernelFlavor::Lattice,
            filter: false,
            filter_flavor: KernelFlavor::Aliased,
            route: PropagationRoute::Auto,
            resample: ResamplePolicy::Off,
            snapshot_every: 0,
            plot_grid: if dim == 2 { 128 } else { 32 },
            plot_order: AssignmentOrder::Linear2,
            neutral_growth: false,
            allow_zero_params: false,
            output_dir: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.allow_zero_params {
            self.params.validate_nonnegative()?;
        } else {
            self.params.validate()?;
        }
        self.domain.validate()?;
        let d = &self.disc;
        let fresh = Discretization::new(d.h_modes, d.h0_cutoff, d.dt, d.t_final, d.n_particles, self.domain.length)?;
        if fresh.n_steps != d.n_steps || (fresh.cell - d.cell).abs() > 1e-12 * fresh.cell {
            return Err(Error::InvalidParameter("discretization is inconsistent with the domain".into()));
        }
        if self.plot_grid < 2 || !self.plot_grid.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("plot grid must be even, got {}", self.plot_grid)));
        }
        if let ResamplePolicy::Every { steps: 0 } = self.resample {
            return Err(Error::InvalidParameter("resampling period must be positive".into()));
        }
        if let ResamplePolicy::RatioAbove { threshold } = self.resample {
            if !(threshold > 1.0) {
                return Err(Error::InvalidParameter("resampling ratio threshold must exceed 1".into()));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.domain.dim, self.disc.h_modes, self.domain.length)
    }

    pub fn chem_options(&self) -> ChemOptions {
        ChemOptions {
            kernel: self.kernel,
            lowpass: LowpassSpec { enabled: self.filter, h0: Some(self.disc.h0_cutoff), flavor: self.filter_flavor },
            v_update: self.v_update,
            route: self.route,
        }
    }

    /// Same run at another grid size (the filter scale follows `H` when it was `H`).
    pub fn with_resolution(&self, h: usize) -> Result<Self> {
        let d = &self.disc;
        let h0 = if d.h0_cutoff == d.h_modes as f64 { h as f64 } else { d.h0_cutoff.min(h as f64) };
        let mut c = self.clone();
        c.disc = Discretization::new(h, h0, d.dt, d.t_final, d.n_particles, self.domain.length)?;
        Ok(c)
    }
}

/// Closed-form initial data, in absolute coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Benchmark2d,
    Benchmark3d,
    Custom { u: Expr, v: Expr, m: Expr, w: Expr },
}

const R0_SQ: f64 = 0.3;

impl InitialData {
    pub fn custom(u: &str, v: &str, m: &str, w: &str) -> Result<Self> {
        Ok(Self::Custom { u: u.parse()?, v: v.parse()?, m: m.parse()?, w: w.parse()? })
    }

    /// Dimension the data is written for, when fixed.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Benchmark2d => Some(2),
            Self::Benchmark3d => Some(3),
            Self::Custom { .. } => None,
        }
    }

    fn dist2_center(x: &[f64]) -> f64 {
        x.iter().map(|xi| (xi - 3.0).powi(2)).sum()
    }

    pub fn u0(&self, x: &[f64]) -> f64 {
        match self {
            Self::Benchmark2d => 5.0 * (R0_SQ - Self::dist2_center(x)).max(0.0),
            Self::Benchmark3d => {
                if Self::dist2_center(x) <= R0_SQ {
                    3.0
                } else {
                    0.0
                }
            }
            Self::Custom { u, .. } => u.eval(x),
        }
    }

    pub fn v0(&self, x: &[f64]) -> f64 {
        use std::f64::consts::PI;
        let osc = 0.05 * (5.0 * PI * x[0] * x[0] / 18.0).cos() * (13.0 * PI * x[1] * x[1] / 72.0).sin();
        match self {
            Self::Benchmark2d => osc + 0.3,
            Self::Benchmark3d => osc * (PI * x[2] * x[2] / 12.0).cos() + 0.3,
            Self::Custom { v, .. } => v.eval(x),
        }
    }

    pub fn m0(&self, x: &[f64]) -> f64 {
        match self {
            Self::Custom { m, .. } => m.eval(x),
            _ => self.u0(x),
        }
    }

    pub fn w0(&self, x: &[f64]) -> f64 {
        match self {
            Self::Custom { w, .. } => w.eval(x),
            _ => 4.0 * self.v0(x),
        }
    }

    /// Proposal box for rejection sampling, absolute coordinates.
    fn proposal(&self, domain: &DomainSpec) -> (Vec<f64>, Vec<f64>) {
        match self {
            Self::Custom { .. } => (domain.origin.clone(), domain.origin.iter().map(|o| o + domain.length).collect()),
            _ => {
                let r0 = R0_SQ.sqrt();
                (vec![3.0 - r0; domain.dim], vec![3.0 + r0; domain.dim])
            }
        }
    }
}

/// Resolution of the quadrature grid used for the initial mass.
fn quadrature_size(dim: usize, h: usize) -> usize {
    let target: usize = if dim == 2 { 1024 } else { 256 };
    h * target.div_ceil(h).max(1)
}

/// `int u0` by nodal quadrature, plus the largest sampled value.
fn quadrature(initial: &InitialData, domain: &DomainSpec, q: usize) -> Result<(f64, f64)> {
    let grid = Grid::new(domain.dim, q, domain.length);
    let hd = grid.cell().powi(domain.dim as i32);
    let vals: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let r = grid.node(i);
            let mut x = [0.0; 3];
            for j in 0..domain.dim {
                x[j] = domain.origin[j] + r[j];
            }
            initial.u0(&x[..domain.dim])
        })
        .collect();
    if let Some(bad) = vals.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateInitial(format!("initial u must be finite and nonnegative, found {bad}")));
    }
    let partial: Vec<f64> = vals.par_chunks(RNG_BLOCK).map(|c| c.iter().sum()).collect();
    let max = vals.iter().cloned().fold(0.0, f64::max);
    Ok((hd * partial.iter().sum::<f64>(), max))
}

/// Lowest rejection-sampling acceptance rate tolerated.
pub const MIN_ACCEPTANCE: f64 = 1e-4;

fn sample_positions(
    initial: &InitialData,
    domain: &DomainSpec,
    count: usize,
    bound: f64,
    stream: &RngStream,
) -> Result<Vec<f64>> {
    let dim = domain.dim;
    let (lo, hi) = initial.proposal(domain);
    let blocks = count.div_ceil(RNG_BLOCK);
    let results: Vec<Result<(Vec<f64>, u64)>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let quota = RNG_BLOCK.min(count - b * RNG_BLOCK);
            let mut rng = stream.block(StreamTag::Init, 0, b as u64);
            let mut out = Vec::with_capacity(quota * dim);
            let mut tries: u64 = 0;
            let max_tries = (quota as f64 / MIN_ACCEPTANCE) as u64 + 10_000;
            let mut x = [0.0; 3];
            while out.len() < quota * dim {
                tries += 1;
                if tries > max_tries {
                    return Err(Error::DegenerateInitial(format!(
                        "rejection sampling acceptance below {MIN_ACCEPTANCE}"
                    )));
                }
                for j in 0..dim {
                    x[j] = lo[j] + (hi[j] - lo[j]) * rng.random::<f64>();
                }
                let y = bound * rng.random::<f64>();
                if y < initial.u0(&x[..dim]) {
                    for j in 0..dim {
                        out.push(wrap(x[j] - domain.origin[j], domain.length));
                    }
                }
            }
            Ok((out, tries))
        })
        .collect();
    let mut positions = Vec::with_capacity(count * dim);
    let mut tries = 0u64;
    for r in results {
        let (p, t) = r?;
        positions.extend_from_slice(&p);
        tries += t;
    }
    let acceptance = count as f64 / tries as f64;
    if acceptance < MIN_ACCEPTANCE {
        return Err(Error::DegenerateInitial(format!(
            "rejection sampling acceptance {acceptance:e} below {MIN_ACCEPTANCE}"
        )));
    }
    Ok(positions)
}

/// Accumulated wall time per phase, seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhaseTimes {
    pub deposit: f64,
    pub fields: f64,
    pub gradient: f64,
    pub interpolate: f64,
    pub advance: f64,
    pub resample: f64,
}

impl PhaseTimes {
    /// Time spent on per-particle work.
    pub fn particle_phase(&self) -> f64 {
        self.deposit + self.interpolate + self.advance
    }

    /// Time spent on grid work.
    pub fn field_phase(&self) -> f64 {
        self.fields + self.gradient
    }
}

/// What happened in one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub chem: ChemExtrema,
    /// Smallest and largest per-particle weight factor.
    pub weight_factor: (f64, f64),
    pub mass: MassReport,
    pub resampled: bool,
}

/// Full simulation state.
#[derive(Debug, Clone)]
pub struct SimState {
    pub step: usize,
    pub time: f64,
    pub ensemble: ParticleEnsemble,
    pub chem: ChemState,
    pub config: RunConfig,
    pub mass0: f64,
    pub rng: RngStream,
    pub timings: PhaseTimes,
    /// Ensemble mass right after the last resampling (equal-weight reference).
    mass_at_resample: Option<(usize, f64)>,
}

/// Samples particles and evaluates the chemical fields at the nodes.
pub fn init_from_analytic(config: RunConfig, initial: &InitialData) -> Result<SimState> {
    config.validate()?;
    let dim = config.domain.dim;
    if let Some(d) = initial.dim() {
        if d != dim {
            return Err(Error::InvalidParameter(format!(
                "initial data is {d}-dimensional but the domain is {dim}-dimensional"
            )));
        }
    }
    let q = quadrature_size(dim, config.disc.h_modes);
    let (mass0, umax) = quadrature(initial, &config.domain, q)?;
    if !(mass0 > 0.0) || !(umax > 0.0) {
        return Err(Error::DegenerateInitial("initial u vanishes on the quadrature grid".into()));
    }
    let bound = match initial {
        InitialData::Benchmark2d => 5.0 * R0_SQ,
        InitialData::Benchmark3d => 3.0,
        // sampled maximum plus a margin for peaks between quadrature nodes
        InitialData::Custom { .. } => 1.05 * umax,
    };
    let rng = RngStream::new(config.seed);
    let p = config.disc.n_particles;
    let positions = sample_positions(initial, &config.domain, p, bound, &rng)?;
    let ensemble = ParticleEnsemble::new(dim, positions, vec![mass0 / p as f64; p])?;

    let grid = config.grid();
    let plan = FftPlan::new(grid.n);
    let nodal = |f: &(dyn Fn(&[f64]) -> f64 + Sync)| -> Vec<f64> {
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let r = grid.node(i);
                let mut x = [0.0; 3];
                for j in 0..dim {
                    x[j] = config.domain.origin[j] + r[j];
                }
                f(&x[..dim])
            })
            .collect()
    };
    let v = nodal(&|x| initial.v0(x));
    let m = nodal(&|x| initial.m0(x));
    let w = nodal(&|x| initial.w0(x));
    let chem = ChemState::new(grid, plan, v, m, w, config.params, config.disc.dt, config.chem_options())?;
    Ok(SimState {
        step: 0,
        time: 0.0,
        ensemble,
        chem,
        config,
        mass0,
        rng,
        timings: PhaseTimes::default(),
        mass_at_resample: None,
    })
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

impl SimState {
    pub fn grid(&self) -> Grid {
        self.chem.grid()
    }

    /// Advances one step: deposit, chemical update, gradient, interpolation,
    /// particle move, optional resampling.
    pub fn step(&mut self) -> Result<StepReport> {
        let cfg = &self.config;
        let grid = self.chem.grid();
        let tau = cfg.disc.dt;
        let n = self.step;

        let t = Instant::now();
        let u = deposit(&self.ensemble, cfg.deposit_order, grid);
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what: "u", step: n });
        }
        self.timings.deposit += secs(t);

        let t = Instant::now();
        let chem = self.chem.step_concentrations(&u, n)?;
        self.timings.fields += secs(t);

        let t = Instant::now();
        let grads = spectral_gradient(&mut self.chem.v);
        let grad_views: Vec<&[f64]> = grads.iter().map(|g| g.physical_ref()).collect();
        self.timings.gradient += secs(t);

        let t = Instant::now();
        let w_grid = self.chem.w.physical().to_vec();
        let mut fields = grad_views.clone();
        fields.push(&w_grid);
        let mut sampled = interpolate_many(&fields, grid, &self.ensemble.positions, cfg.interp_order);
        let mut w_at = sampled.pop().unwrap();
        let w_floor = -POSITIVITY_TOL * chem.w.1.abs().max(f64::MIN_POSITIVE);
        for (p, w) in w_at.iter_mut().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite { what: "interpolated w", step: n });
            }
            if *w < 0.0 {
                if *w < w_floor {
                    return Err(Error::Domain(format!("interpolated w = {w} < 0 at particle {p}, step {n}")));
                }
                *w = 0.0;
            }
        }
        if cfg.neutral_growth {
            w_at.iter_mut().for_each(|w| *w = 1.0);
        }
        self.timings.interpolate += secs(t);

        let t = Instant::now();
        let weight_factor = advance_particles(
            &mut self.ensemble,
            &sampled,
            &w_at,
            &cfg.params,
            tau,
            cfg.domain.length,
            &self.rng,
            n as u64,
        )?;
        self.timings.advance += secs(t);

        self.step += 1;
        self.time = self.step as f64 * tau;

        let t = Instant::now();
        let resampled = match cfg.resample {
            ResamplePolicy::Off => false,
            ResamplePolicy::Every { steps } => self.step.is_multiple_of(steps),
            ResamplePolicy::RatioAbove { threshold } => {
                let r = mass_report(&self.ensemble, self.step, tau, self.mass0);
                r.ratio > threshold
            }
        };
        if resampled {
            self.ensemble = residual_resample(&self.ensemble, &self.rng, self.step as u64)?;
            self.mass_at_resample = Some((self.step, ordered_sum(&self.ensemble.weights)));
        }
        self.timings.resample += secs(t);

        let mut mass = mass_report(&self.ensemble, self.step, tau, self.mass0);
        if let Some((s, m)) = self.mass_at_resample {
            // the weight-ratio bound restarts from the last equal-weight ensemble
            let since = mass_report(&self.ensemble, self.step - s, tau, m);
            mass.ratio_within_bound = since.ratio_within_bound;
        }
        Ok(StepReport { step: self.step, time: self.time, chem, weight_factor, mass, resampled })
    }

    /// The deposited `u` on the plotting grid and the chemical fields.
    pub fn snapshot(&mut self) -> Vec<GridSnapshot> {
        let cfg = &self.config;
        let pg = Grid::new(cfg.domain.dim, cfg.plot_grid, cfg.domain.length);
        let u = deposit(&self.ensemble, cfg.plot_order, pg);
        let grid = self.chem.grid();
        let time = self.time;
        vec![
            GridSnapshot { name: "u".into(), grid: pg, time, values: u },
            GridSnapshot { name: "v".into(), grid, time, values: self.chem.v.physical().to_vec() },
            GridSnapshot { name: "m".into(), grid, time, values: self.chem.m.physical().to_vec() },
            GridSnapshot { name: "w".into(), grid, time, values: self.chem.w.physical().to_vec() },
        ]
    }

    /// Deposited density on an arbitrary grid of the same box.
    pub fn density_on(&self, n: usize, order: AssignmentOrder) -> Vec<f64> {
        let grid = Grid::new(self.config.domain.dim, n, self.config.domain.length);
        deposit(&self.ensemble, order, grid)
    }
}

/// Final state, every snapshot set, and per-step reports.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: SimState,
    pub snapshots: Vec<(usize, Vec<GridSnapshot>)>,
    pub reports: Vec<StepReport>,
}

/// Runs to `T`, handing each snapshot set (step 0, every `snapshot_every`
/// steps, and the final step) and each step report to the callbacks.
pub fn run_with(
    config: RunConfig,
    initial: &InitialData,
    mut on_snapshot: impl FnMut(usize, Vec<GridSnapshot>) -> Result<()>,
    mut on_step: impl FnMut(&StepReport),
) -> Result<SimState> {
    let mut state = init_from_analytic(config, initial)?;
    let n_steps = state.config.disc.n_steps;
    let every = state.config.snapshot_every;
    on_snapshot(0, state.snapshot())?;
    for _ in 0..n_steps {
        let report = state.step()?;
        on_step(&report);
        let k = state.step;
        if k == n_steps || (every > 0 && k % every == 0) {
            on_snapshot(k, state.snapshot())?;
        }
    }
    Ok(state)
}

/// [`run_with`] collecting everything in memory, or writing snapshots to
/// `config.output_dir` when set.
pub fn run(config: RunConfig, initial: &InitialData) -> Result<RunOutput> {
    let dir = config.output_dir.clone();
    let mut snapshots = Vec::new();
    let mut reports = Vec::new();
    let state = run_with(
        config,
        initial,
        |k, snaps| {
            if let Some(d) = &dir {
                crate::io::write_snapshot_set(d, k, &snaps)?;
            } else {
                snapshots.push((k, snaps));
            }
            Ok(())
        },
        |r| reports.push(*r),
    )?;
    Ok(RunOutput { state, snapshots, reports })
}
