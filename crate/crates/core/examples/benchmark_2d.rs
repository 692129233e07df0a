//! 2D invasion benchmark at a small scale, printing mass and field ranges.
//!
//! Usage: `cargo run --release --example benchmark_2d -- [H] [log2 P] [tau] [T]`

use sipfw::simulator::{run_with, InitialData, RunConfig};

fn main() -> sipfw::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let h: usize = args.first().map_or(64, |s| s.parse().unwrap());
    let log_p: u32 = args.get(1).map_or(16, |s| s.parse().unwrap());
    let tau: f64 = args.get(2).map_or(1e-3, |s| s.parse().unwrap());
    let t_final: f64 = args.get(3).map_or(0.5, |s| s.parse().unwrap());

    let mut config = RunConfig::benchmark(2, h, 1 << log_p, tau, t_final)?;
    config.seed = 7;
    config.snapshot_every = (0.1 / tau).round() as usize;

    let start = std::time::Instant::now();
    let state = run_with(
        config,
        &InitialData::Benchmark2d,
        |step, snaps| {
            let u = &snaps[0];
            let peak = u.values.iter().cloned().fold(f64::MIN, f64::max);
            let h2 = u.grid.cell().powi(2);
            let mass: f64 = u.values.iter().sum::<f64>() * h2;
            println!("step {step:5}  t = {:.3}  mass(u) = {mass:.5}  max u = {peak:.4}", u.time);
            Ok(())
        },
        |r| {
            if r.step % 100 == 0 {
                println!(
                    "    min v/m/w = {:.3e} {:.3e} {:.3e}  particle mass = {:.5}",
                    r.chem.v.0, r.chem.m.0, r.chem.w.0, r.mass.total
                );
            }
        },
    )?;
    println!("M0 = {:.6}, wall time {:.1}s", state.mass0, start.elapsed().as_secs_f64());
    println!("{:?}", state.timings);
    Ok(())
}
