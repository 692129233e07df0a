//! Self-convergence of the 2D benchmark over grid sizes with a shared seed.
//!
//! Usage: `cargo run --release --example convergence -- [log2 P] [T] [H...]`

use sipfw::diagnostics::COMPARISON_GRID;
use sipfw::simulator::{InitialData, RunConfig};
use sipfw::study::convergence_study;

fn main() -> sipfw::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let log_p: u32 = args.first().map_or(16, |s| s.parse().unwrap());
    let t_final: f64 = args.get(1).map_or(0.5, |s| s.parse().unwrap());
    let mut hs: Vec<usize> = args.iter().skip(2).map(|s| s.parse().unwrap()).collect();
    if hs.is_empty() {
        hs = vec![16, 32, 64, 128];
    }
    let tau: f64 = std::env::var("TAU").map_or(2e-3, |s| s.parse().unwrap());
    let mut config = RunConfig::benchmark(2, hs[0], 1 << log_p, tau, t_final)?;
    config.seed = 1;
    let table = convergence_study(&config, &InitialData::Benchmark2d, &hs, COMPARISON_GRID, |h, secs| {
        eprintln!("H = {h:4} done in {secs:.1}s");
    })?;
    println!("H,E");
    for r in &table.records {
        println!("{},{:.6}", r.h, r.error);
    }
    match table.slope {
        Some(s) => println!("slope vs H = {}: {s:.3}", table.reference_h),
        None => println!("too few resolutions for a slope"),
    }
    Ok(())
}
