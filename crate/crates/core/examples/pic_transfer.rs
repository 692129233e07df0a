//! Particle-to-grid deposit and grid-to-particle interpolation on a smooth
//! field, with the observed convergence orders of both assignment kernels.
//!
//! Usage: `cargo run --release --example pic_transfer`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sipfw::diagnostics::fit_slope;
use sipfw::grid::Grid;
use sipfw::model::ParticleEnsemble;
use sipfw::pic::{deposit, interpolate, AssignmentOrder};

fn main() -> sipfw::Result<()> {
    let l = 6.0;
    let k = 2.0 * std::f64::consts::PI / l;
    let f = |x: &[f64]| 2.0 + (k * x[0]).sin() * (2.0 * k * x[1]).cos();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let probes: Vec<f64> = (0..4000).map(|_| rng.random::<f64>() * l).collect();

    for order in [AssignmentOrder::Linear2, AssignmentOrder::Quartic4] {
        println!("{order:?}");
        let (mut ei, mut ed) = (Vec::new(), Vec::new());
        for n in [16usize, 32, 64, 128] {
            let grid = Grid::new(2, n, l);
            let nodal: Vec<f64> = (0..grid.len()).map(|i| f(&grid.node(i)[..2])).collect();

            let vals = interpolate(&nodal, grid, &probes, order);
            let e_int = vals.iter().zip(probes.chunks(2)).map(|(v, x)| (v - f(x)).abs()).fold(0.0, f64::max);

            // a quadrature "ensemble" carries f dx^2 at each point, so the deposit
            // should reproduce f at the nodes up to the kernel's smoothing error
            let m = 4 * n;
            let dx = l / m as f64;
            let mut pos = Vec::with_capacity(2 * m * m);
            let mut w = Vec::with_capacity(m * m);
            for i in 0..m {
                for j in 0..m {
                    let x = [(i as f64 + 0.3) * dx, (j as f64 + 0.7) * dx];
                    pos.extend_from_slice(&x);
                    w.push(f(&x) * dx * dx);
                }
            }
            let u = deposit(&ParticleEnsemble::new(2, pos, w)?, order, grid);
            let e_dep = u.iter().zip(&nodal).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

            println!("  H = {n:3}  interpolation {e_int:.3e}  deposit {e_dep:.3e}");
            ei.push(((n as f64).log2(), e_int.log2()));
            ed.push(((n as f64).log2(), e_dep.log2()));
        }
        println!("  orders: interpolation {:.2}, deposit {:.2}", -fit_slope(&ei), -fit_slope(&ed));
    }
    Ok(())
}
