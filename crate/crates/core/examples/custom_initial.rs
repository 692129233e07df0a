//! Initial data from expressions, with snapshots written to disk and read back.
//!
//! Usage: `cargo run --release --example custom_initial -- [output dir]`

use std::path::PathBuf;

use sipfw::io::GridSnapshot;
use sipfw::simulator::{run, InitialData, RunConfig};

fn main() -> sipfw::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("sipfw-custom"), PathBuf::from);
    // two off-centre cell clusters on a striped ECM
    let initial = InitialData::custom(
        "4 * max(0.2 - (x1 - 2)^2 - (x2 - 3)^2, 0) + 4 * max(0.2 - (x1 - 4)^2 - (x2 - 3)^2, 0)",
        "0.3 + 0.1 * cos(2 * pi * x2 / 6)",
        "0",
        "1",
    )?;
    let mut config = RunConfig::benchmark(2, 64, 1 << 15, 2e-3, 0.4)?;
    config.snapshot_every = 50;
    config.output_dir = Some(dir.clone());
    let out = run(config, &initial)?;
    println!("wrote snapshots to {}", dir.display());

    let last = out.state.step;
    let u = GridSnapshot::read(&dir.join(format!("u_{last:06}.bin")))?;
    let h2 = u.grid.cell().powi(2);
    println!(
        "{} on {}^2 at t = {}: mass {:.4} (particles {:.4})",
        u.name,
        u.grid.n,
        u.time,
        u.values.iter().sum::<f64>() * h2,
        out.state.ensemble.total_mass()
    );
    Ok(())
}
