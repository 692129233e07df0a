//! Multi-run studies: self-convergence over grid sizes and comparison with
//! the mesh reference solver.

use crate::diagnostics::{convergence_slope, relative_error_nodal, ErrorRecord};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::step_count;
use crate::reference::{reference_run, MeshState};
use crate::simulator::{init_from_analytic, InitialData, RunConfig};

/// Errors of every coarser run against the finest one, and the fitted slope.
#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub records: Vec<ErrorRecord>,
    pub reference_h: usize,
    pub slope: Option<f64>,
}

/// Runs `base` at each resolution with the same seed and measures `u` at
/// `T` against the finest resolution.
///
/// Every run deposits its particles onto the finest grid before truncation,
/// so the comparison sees the particle distributions and not the different
/// smoothing of each deposit grid.
pub fn convergence_study(
    base: &RunConfig,
    initial: &InitialData,
    resolutions: &[usize],
    target: usize,
    mut progress: impl FnMut(usize, f64),
) -> Result<ConvergenceTable> {
    let mut hs = resolutions.to_vec();
    hs.sort_unstable();
    hs.dedup();
    if hs.len() < 3 {
        return Err(Error::InvalidParameter(format!("convergence needs at least 3 resolutions, got {}", hs.len())));
    }
    let finest = *hs.last().unwrap();
    let grid = Grid::new(base.domain.dim, finest, base.domain.length);
    let mut finals = Vec::with_capacity(hs.len());
    for &h in &hs {
        let start = std::time::Instant::now();
        let cfg = base.with_resolution(h)?;
        let mut state = init_from_analytic(cfg, initial)?;
        for _ in 0..state.config.disc.n_steps {
            state.step()?;
        }
        finals.push(state.density_on(finest, base.deposit_order));
        progress(h, start.elapsed().as_secs_f64());
    }
    let reference = finals.last().unwrap();
    let mut records = Vec::new();
    for (&h, u) in hs.iter().zip(&finals).take(hs.len() - 1) {
        let error = relative_error_nodal(u, grid, reference, grid, target)?;
        records.push(ErrorRecord {
            h,
            n_particles: base.disc.n_particles,
            tau: base.disc.dt,
            time: base.disc.t_final,
            error,
            seed: base.seed,
            reference_h: finest,
        });
    }
    let slope = convergence_slope(&records).ok();
    Ok(ConvergenceTable { records, reference_h: finest, slope })
}

/// One row of a particle-versus-mesh comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRecord {
    pub time: f64,
    pub error: f64,
    pub particle_mass: f64,
    pub mesh_mass: f64,
}

/// Runs the particle engine and the mesh solver (size `n_ref`, step at most
/// `dt_ref`) from the same data and reports the relative `u` error at each
/// requested time. Particle densities are deposited on the mesh grid.
pub fn compare_with_reference(
    config: &RunConfig,
    initial: &InitialData,
    times: &[f64],
    n_ref: usize,
    dt_ref: f64,
    target: usize,
) -> Result<Vec<CompareRecord>> {
    if config.domain.dim != 2 {
        return Err(Error::Unsupported("comparison with the mesh solver needs a 2D configuration".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidParameter("comparison times must be nonnegative and increasing".into()));
    }
    let o = &config.domain.origin;
    let mut mesh = MeshState::from_initial(initial, n_ref, config.domain.length, [o[0], o[1]])?;
    mesh.neutral_growth = config.neutral_growth;
    let grid = Grid::new(2, n_ref, config.domain.length);
    let mut state = init_from_analytic(config.clone(), initial)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let steps = step_count(t, config.disc.dt);
        while state.step < steps {
            state.step()?;
        }
        mesh = reference_run(mesh, &config.params, t, dt_ref)?;
        let u = state.density_on(n_ref, config.deposit_order);
        let error = relative_error_nodal(&u, grid, &mesh.u, grid, target)?;
        out.push(CompareRecord { time: t, error, particle_mass: state.ensemble.total_mass(), mesh_mass: mesh.mass() });
    }
    Ok(out)
}
