//! Particle engine against the finite-difference solver on the 2D benchmark.
//!
//! Usage: `cargo run --release --example compare_reference -- [H] [log2 P] [N] [T] [filter]`

use sipfw::diagnostics::COMPARISON_GRID;
use sipfw::simulator::{InitialData, RunConfig};
use sipfw::study::compare_with_reference;

fn main() -> sipfw::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let h: usize = args.first().map_or(64, |s| s.parse().unwrap());
    let log_p: u32 = args.get(1).map_or(16, |s| s.parse().unwrap());
    let n_ref: usize = args.get(2).map_or(128, |s| s.parse().unwrap());
    let t_final: f64 = args.get(3).map_or(1.0, |s| s.parse().unwrap());
    let filter = args.get(4).is_some_and(|s| s == "filter");

    let tau: f64 = std::env::var("TAU").map_or(2e-3, |s| s.parse().unwrap());
    let mut config = RunConfig::benchmark(2, h, 1 << log_p, tau, t_final)?;
    config.filter = filter;
    let times: Vec<f64> = (1..=4).map(|k| t_final * k as f64 / 4.0).collect();
    let start = std::time::Instant::now();
    let rows = compare_with_reference(&config, &InitialData::Benchmark2d, &times, n_ref, 1e-3, COMPARISON_GRID)?;
    println!("t,E,particle_mass,mesh_mass");
    for r in rows {
        println!("{:.3},{:.5},{:.6},{:.6}", r.time, r.error, r.particle_mass, r.mesh_mass);
    }
    eprintln!("{:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
