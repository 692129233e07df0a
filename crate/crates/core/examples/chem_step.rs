//! The chemical update on its own: a fixed cell density drives MDE
//! production, ECM degradation and oxygen release.
//!
//! Usage: `cargo run --release --example chem_step -- [steps]`

use sipfw::chem::{ChemOptions, ChemState};
use sipfw::grid::{FftPlan, Grid};
use sipfw::model::ModelParams;

fn main() -> sipfw::Result<()> {
    let steps: usize = std::env::args().nth(1).map_or(500, |s| s.parse().unwrap());
    let n = 64;
    let tau = 2e-3;
    let grid = Grid::new(2, n, 6.0);
    let params = ModelParams::benchmark();
    let r2 = |i: usize| {
        let x = grid.node(i);
        (x[0] - 3.0).powi(2) + (x[1] - 3.0).powi(2)
    };
    let u: Vec<f64> = (0..grid.len()).map(|i| 5.0 * (0.3 - r2(i)).max(0.0)).collect();
    let mut chem = ChemState::new(
        grid,
        FftPlan::new(n),
        vec![0.3; grid.len()],
        vec![0.0; grid.len()],
        vec![1.2; grid.len()],
        params,
        tau,
        ChemOptions::default(),
    )?;

    let h2 = grid.cell().powi(2);
    for k in 0..steps {
        let e = chem.step_concentrations(&u, k)?;
        if (k + 1) % 100 == 0 {
            let mass_m: f64 = chem.m.physical().iter().sum::<f64>() * h2;
            println!(
                "t = {:.2}  v in [{:.4}, {:.4}]  m in [{:.4}, {:.4}] (mass {mass_m:.4})  w in [{:.4}, {:.4}]",
                (k + 1) as f64 * tau,
                e.v.0,
                e.v.1,
                e.m.0,
                e.m.1,
                e.w.0,
                e.w.1
            );
        }
    }
    Ok(())
}
