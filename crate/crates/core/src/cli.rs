//! Command-line front end: `init-config`, `run`, `convergence`, `compare`
//! and `resample-demo`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::ConfigFile;
use crate::diagnostics::{write_convergence_csv, COMPARISON_GRID};
use crate::error::{Error, Result};
use crate::io::{write_csv_table, write_snapshot_set};
use crate::model::ParticleEnsemble;
use crate::particles::{ordered_sum, residual_resample, RngStream};
use crate::simulator::run_with;
use crate::study::{compare_with_reference, convergence_study};

/// Exit status for configuration and usage errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for failures during a run.
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "sipfw", version, about = "Weighted stochastic particle-field solver for haptotactic invasion")]
pub struct Cli {
    /// Worker threads (defaults to SIPFW_THREADS, then all cores).
    #[arg(long, global = true, env = "SIPFW_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print an annotated configuration file.
    InitConfig {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one simulation and write snapshots plus a manifest.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snapshot_every: Option<usize>,
    },
    /// Self-convergence over grid sizes against the finest one.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Comma-separated grid sizes, e.g. 32,64,128,256.
        #[arg(long, value_delimiter = ',')]
        resolutions: Option<Vec<usize>>,
    },
    /// Particle engine against the 2D mesh solver.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Residual resampling of two particles with weights (1.5, 0.5).
    ResampleDemo {
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration, or a manifest.json from an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(ConfigFile, PathBuf)> {
        let mut cfg = ConfigFile::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let out = self.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("sipfw-out"));
        cfg.output.dir = Some(out.clone());
        Ok((cfg, out))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("sipfw: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Expr { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    pool.install(|| match cli.command {
        Command::InitConfig { dim, out } => cmd_init_config(dim, out.as_deref()),
        Command::Run { common, snapshot_every } => cmd_run(&common, snapshot_every, threads),
        Command::Convergence { common, resolutions } => cmd_convergence(&common, resolutions, threads),
        Command::Compare { common } => cmd_compare(&common, threads),
        Command::ResampleDemo { trials, seed, out } => cmd_resample_demo(trials, seed, out.as_deref()),
    })
}

fn cmd_init_config(dim: usize, out: Option<&Path>) -> Result<()> {
    if dim != 2 && dim != 3 {
        return Err(Error::Config(format!("--dim must be 2 or 3, got {dim}")));
    }
    let text = crate::config::template(dim);
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn write_manifest(out: &Path, cfg: &ConfigFile, threads: usize, extra: serde_json::Value) -> Result<()> {
    let mut m = json!({
        "tool": "sipfw",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "threads": threads,
        "config": cfg.to_toml(),
    });
    if let (Some(obj), serde_json::Value::Object(more)) = (m.as_object_mut(), extra) {
        obj.extend(more);
    }
    let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(out.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn prepare_out(out: &Path, cfg: &ConfigFile) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.resolved.toml"), cfg.to_toml())?;
    Ok(())
}

fn cmd_run(common: &Common, snapshot_every: Option<usize>, threads: usize) -> Result<()> {
    let (mut cfg, out) = common.load()?;
    if let Some(k) = snapshot_every {
        cfg.output.snapshot_every = k;
    }
    let run_cfg = cfg.to_run_config()?;
    let initial = cfg.initial_data()?;
    prepare_out(&out, &cfg)?;
    let start = Instant::now();
    let mut files = Vec::new();
    let mut last = None;
    let result = run_with(
        run_cfg,
        &initial,
        |k, snaps| {
            write_snapshot_set(&out, k, &snaps)?;
            files.extend(snaps.iter().map(|s| format!("{}_{k:06}.bin", s.name)));
            Ok(())
        },
        |r| last = Some(*r),
    );
    let wall = start.elapsed().as_secs_f64();
    match result {
        Ok(state) => {
            let mass = state.ensemble.total_mass();
            write_manifest(
                &out,
                &cfg,
                threads,
                json!({
                    "status": "ok",
                    "steps": state.step,
                    "final_time": state.time,
                    "initial_mass": state.mass0,
                    "final_mass": mass,
                    "wall_seconds": wall,
                    "phase_seconds": state.timings,
                    "snapshots": files,
                }),
            )?;
            println!(
                "run: {} steps to t = {:.6}, mass {:.6} -> {:.6}, {} files in {} ({wall:.1} s)",
                state.step,
                state.time,
                state.mass0,
                mass,
                files.len(),
                out.display()
            );
            Ok(())
        }
        Err(e) => {
            write_manifest(
                &out,
                &cfg,
                threads,
                json!({
                    "status": format!("failed: {e}"),
                    "last_step": last.map(|r| r.step),
                    "wall_seconds": wall,
                    "snapshots": files,
                }),
            )?;
            Err(e)
        }
    }
}

fn cmd_convergence(common: &Common, resolutions: Option<Vec<usize>>, threads: usize) -> Result<()> {
    let (mut cfg, out) = common.load()?;
    if let Some(r) = resolutions {
        cfg.convergence.resolutions = r;
    }
    let hs = cfg.convergence.resolutions.clone();
    let mut distinct = hs.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Config(format!(
            "convergence needs at least 3 distinct resolutions (--resolutions or convergence.resolutions), got {}",
            distinct.len()
        )));
    }
    let base = cfg.to_run_config()?;
    for &h in &distinct {
        base.with_resolution(h).map_err(|e| Error::Config(format!("resolution {h}: {e}")))?;
    }
    let initial = cfg.initial_data()?;
    let target = cfg.convergence.comparison_grid.unwrap_or(COMPARISON_GRID);
    prepare_out(&out, &cfg)?;
    let table = convergence_study(&base, &initial, &distinct, target, |h, secs| {
        eprintln!("convergence: H = {h} done in {secs:.1} s");
    })?;
    write_convergence_csv(&out.join("convergence.csv"), &table.records)?;
    for r in &table.records {
        println!("H = {:4}  E = {:.6e}", r.h, r.error);
    }
    match table.slope {
        Some(s) => println!("slope = {s:.4} (reference H = {})", table.reference_h),
        None => println!("slope undefined (reference H = {})", table.reference_h),
    }
    write_manifest(
        &out,
        &cfg,
        threads,
        json!({
            "status": "ok",
            "resolutions": distinct,
            "reference_h": table.reference_h,
            "comparison_grid": target,
            "slope": table.slope,
        }),
    )
}

fn cmd_compare(common: &Common, threads: usize) -> Result<()> {
    let (cfg, out) = common.load()?;
    let run_cfg = cfg.to_run_config()?;
    if run_cfg.domain.dim != 2 {
        return Err(Error::Unsupported("compare needs a 2D configuration; there is no 3D mesh solver".into()));
    }
    let initial = cfg.initial_data()?;
    let c = &cfg.compare;
    let t = run_cfg.disc.t_final;
    let times = c.times.clone().unwrap_or_else(|| (1..=4).map(|k| t * k as f64 / 4.0).collect());
    prepare_out(&out, &cfg)?;
    let records =
        compare_with_reference(&run_cfg, &initial, &times, c.reference_grid, c.reference_dt, c.comparison_grid)?;
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| vec![r.time.to_string(), r.error.to_string(), r.particle_mass.to_string(), r.mesh_mass.to_string()])
        .collect();
    write_csv_table(&out.join("compare.csv"), &["T", "E", "particle_mass", "mesh_mass"], &rows)?;
    for r in &records {
        println!("t = {:.4}  E = {:.6e}  mass {:.6} / {:.6}", r.time, r.error, r.particle_mass, r.mesh_mass);
    }
    write_manifest(
        &out,
        &cfg,
        threads,
        json!({
            "status": "ok",
            "reference_grid": c.reference_grid,
            "reference_dt": c.reference_dt,
            "comparison_grid": c.comparison_grid,
            "errors": records.iter().map(|r| [r.time, r.error]).collect::<Vec<_>>(),
        }),
    )
}

/// Outcome of [`resample_demo`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleDemo {
    pub trials: u64,
    pub mean_copies: [f64; 2],
    /// Standard error of the mean copy count.
    pub sigma: f64,
    pub max_mass_error: f64,
    pub count_always_preserved: bool,
}

/// Resamples the weights (1.5, 0.5) `trials` times with independent streams.
pub fn resample_demo(trials: u64, seed: u64) -> Result<ResampleDemo> {
    let ens = ParticleEnsemble::new(1, vec![0.25, 0.75], vec![1.5, 0.5])?;
    let mass = ens.total_mass();
    let mut copies = [0u64; 2];
    let mut max_mass_error = 0f64;
    let mut preserved = true;
    for k in 0..trials {
        let r = residual_resample(&ens, &RngStream::new(seed), k)?;
        preserved &= r.count() == 2;
        max_mass_error = max_mass_error.max((ordered_sum(&r.weights) - mass).abs());
        for p in 0..r.count() {
            copies[usize::from(r.position(p)[0] != 0.25)] += 1;
        }
    }
    let n = trials.max(1) as f64;
    Ok(ResampleDemo {
        trials,
        mean_copies: [copies[0] as f64 / n, copies[1] as f64 / n],
        sigma: (0.25 / n).sqrt(),
        max_mass_error,
        count_always_preserved: preserved,
    })
}

fn cmd_resample_demo(trials: u64, seed: u64, out: Option<&Path>) -> Result<()> {
    if trials == 0 {
        return Err(Error::Config("--trials must be positive".into()));
    }
    let d = resample_demo(trials, seed)?;
    println!("weights (1.5, 0.5), {} trials, seed {seed}", d.trials);
    println!(
        "mean copies ({:.4}, {:.4}), expected (1.5, 0.5), standard error {:.4}",
        d.mean_copies[0], d.mean_copies[1], d.sigma
    );
    println!("max |mass - 2| = {:e}, particle count preserved: {}", d.max_mass_error, d.count_always_preserved);
    if let Some(path) = out {
        let rows = vec![vec![
            d.trials.to_string(),
            seed.to_string(),
            d.mean_copies[0].to_string(),
            d.mean_copies[1].to_string(),
            d.sigma.to_string(),
            d.max_mass_error.to_string(),
        ]];
        write_csv_table(path, &["trials", "seed", "mean_copies_0", "mean_copies_1", "sigma", "max_mass_error"], &rows)?;
    }
    Ok(())
}
