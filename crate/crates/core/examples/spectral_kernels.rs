//! The three diffusion kernel flavors side by side: multipliers, the
//! aliasing bound, and the sign of the physical-space weights.
//!
//! Usage: `cargo run --release --example spectral_kernels -- [D] [tau] [H]`

use sipfw::grid::{FftPlan, Grid};
use sipfw::spectral::{aliasing_bound, build_kernel_flavored, KernelFlavor};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let d: f64 = args.first().map_or(0.01, |s| s.parse().unwrap());
    let tau: f64 = args.get(1).map_or(2e-3, |s| s.parse().unwrap());
    let n: usize = args.get(2).map_or(64, |s| s.parse().unwrap());

    let grid = Grid::new(2, n, 6.0);
    let plan = FftPlan::new(n);
    println!("D = {d}, tau = {tau}, H = {n}, sqrt(2 D tau) / h = {:.3}", (2.0 * d * tau).sqrt() / grid.cell());
    let kernels: Vec<_> = [KernelFlavor::Theoretical, KernelFlavor::Aliased, KernelFlavor::Lattice]
        .into_iter()
        .map(|f| build_kernel_flavored(f, d, 0.0, tau, grid))
        .collect();

    println!("{:>4} {:>14} {:>14} {:>14}", "q", "theoretical", "aliased", "lattice");
    for q in [0usize, 1, 4, n / 8, n / 4, n / 2 - 1] {
        let i = grid.flatten(&[q, 0, 0]);
        println!(
            "{q:>4} {:>14.8} {:>14.8} {:>14.8}",
            kernels[0].multipliers[i], kernels[1].multipliers[i], kernels[2].multipliers[i]
        );
    }

    let gap =
        kernels[0].multipliers.iter().zip(&kernels[1].multipliers).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max |aliased - theoretical| = {gap:.3e}, bound {:.3e}", aliasing_bound(d, tau, grid));

    for k in &kernels {
        let w = k.physical_weights(&plan);
        let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
        let centre = w[0];
        let neighbour = w[grid.flatten(&[1, 0, 0])];
        println!("{:?}: centre weight {centre:.6}, neighbour {neighbour:.3e}, min {lo:.3e}", k.flavor);
    }
}
