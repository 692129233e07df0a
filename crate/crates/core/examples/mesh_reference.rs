//! The 2D finite-difference reference solver on its own.
//!
//! Usage: `cargo run --release --example mesh_reference -- [N] [T]`

use sipfw::model::ModelParams;
use sipfw::reference::{reference_run, MeshState};
use sipfw::simulator::InitialData;

fn main() -> sipfw::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().map_or(128, |s| s.parse().unwrap());
    let t_final: f64 = args.get(1).map_or(1.0, |s| s.parse().unwrap());
    let params = ModelParams::benchmark();
    let mut mesh = MeshState::from_initial(&InitialData::Benchmark2d, n, 6.0, [0.0, 0.0])?;
    println!("N = {n}, stable dt {:.3e}", mesh.stable_dt(&params));
    for k in 1..=4 {
        let t = t_final * k as f64 / 4.0;
        mesh = reference_run(mesh, &params, t, 1e-3)?;
        let peak = mesh.u.iter().cloned().fold(0.0, f64::max);
        let vmin = mesh.v.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("t = {t:.3}  mass {:.5}  max u {peak:.4}  min v {vmin:.4}", mesh.mass());
    }
    Ok(())
}
