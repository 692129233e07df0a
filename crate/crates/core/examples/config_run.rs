//! Running from a TOML configuration, the path the command-line tool takes.
//!
//! Usage: `cargo run --release --example config_run -- [config.toml]`

use sipfw::config::{template, ConfigFile};
use sipfw::simulator::run;

fn main() -> sipfw::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ConfigFile::load(path.as_ref())?,
        None => ConfigFile::parse(&template(2).replace("grid = 64 ", "grid = 32 "))?,
    };
    let mut run_cfg = cfg.to_run_config()?;
    run_cfg.output_dir = None;
    let initial = cfg.initial_data()?;
    println!(
        "{}D, H = {}, P = {}, tau = {}, {} steps",
        run_cfg.domain.dim, run_cfg.disc.h_modes, run_cfg.disc.n_particles, run_cfg.disc.dt, run_cfg.disc.n_steps
    );
    let out = run(run_cfg, &initial)?;
    for r in out.reports.iter().step_by(25) {
        println!(
            "step {:4}  mass {:.6}  weight factors [{:.6}, {:.6}]",
            r.step, r.mass.total, r.weight_factor.0, r.weight_factor.1
        );
    }
    println!("{} snapshot sets kept in memory", out.snapshots.len());
    Ok(())
}
