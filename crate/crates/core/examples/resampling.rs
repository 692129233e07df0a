//! Residual resampling: the two-particle example and a skewed ensemble.
//!
//! Usage: `cargo run --release --example resampling -- [trials]`

use sipfw::cli::resample_demo;
use sipfw::model::ParticleEnsemble;
use sipfw::particles::{ordered_sum, residual_copy_counts, residual_resample, RngStream};

fn main() -> sipfw::Result<()> {
    let trials: u64 = std::env::args().nth(1).map_or(10_000, |s| s.parse().unwrap());
    let d = resample_demo(trials, 1)?;
    println!(
        "(1.5, 0.5) over {trials} trials: mean copies ({:.4}, {:.4}) +- {:.4}, max mass error {:e}",
        d.mean_copies[0], d.mean_copies[1], d.sigma, d.max_mass_error
    );

    println!(
        "copy counts at u = 0.2: {:?}, at u = 0.7: {:?}",
        residual_copy_counts(&[1.5, 0.5], 0.2)?,
        residual_copy_counts(&[1.5, 0.5], 0.7)?
    );

    let weights: Vec<f64> = (0..8).map(|i| 0.1 * 1.8f64.powi(i)).collect();
    let positions: Vec<f64> = (0..8).map(|i| i as f64).collect();
    let ens = ParticleEnsemble::new(1, positions, weights)?;
    let out = residual_resample(&ens, &RngStream::new(9), 0)?;
    println!("weights  {:?}", ens.weights.iter().map(|w| format!("{w:.3}")).collect::<Vec<_>>());
    println!("resampled positions {:?}", out.positions);
    println!(
        "mass {:.12} -> {:.12}, each weight {:.4}",
        ordered_sum(&ens.weights),
        ordered_sum(&out.weights),
        out.weights[0]
    );
    Ok(())
}
