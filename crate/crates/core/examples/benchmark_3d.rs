//! 3D invasion benchmark with the radially averaged cell density.
//!
//! Usage: `cargo run --release --example benchmark_3d -- [H] [log2 P] [T]`

use sipfw::diagnostics::{front_radius, radial_profile};
use sipfw::pic::AssignmentOrder;
use sipfw::simulator::{init_from_analytic, InitialData, RunConfig};

fn main() -> sipfw::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let h: usize = args.first().map_or(32, |s| s.parse().unwrap());
    let log_p: u32 = args.get(1).map_or(17, |s| s.parse().unwrap());
    let t_final: f64 = args.get(2).map_or(0.5, |s| s.parse().unwrap());

    let config = RunConfig::benchmark(3, h, 1 << log_p, 2e-3, t_final)?;
    let mut state = init_from_analytic(config, &InitialData::Benchmark3d)?;
    let grid = state.grid();
    let profile = |s: &sipfw::simulator::SimState| {
        let u = s.density_on(h, AssignmentOrder::Linear2);
        radial_profile(&u, grid, &[3.0; 3], grid.cell())
    };

    let p0 = profile(&state);
    let n = state.config.disc.n_steps;
    for _ in 0..n {
        state.step()?;
    }
    let p1 = profile(&state);
    println!("{:>8} {:>10} {:>10}", "r", "u(0)", format!("u({t_final})"));
    for (a, b) in p0.iter().zip(&p1).take_while(|(a, _)| a.0 < 1.5) {
        println!("{:>8.3} {:>10.4} {:>10.4}", a.0, a.1, b.1);
    }
    println!(
        "front radius (u >= 0.3): {:.3} -> {:.3}; mass {:.4} -> {:.4}",
        front_radius(&p0, 0.3),
        front_radius(&p1, 0.3),
        state.mass0,
        state.ensemble.total_mass()
    );
    println!("{:?}", state.timings);
    Ok(())
}
