//! Particle transport, weight growth, mass bookkeeping and residual resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{wrap, ModelParams, ParticleEnsemble};

/// Particles per random-number block. Each block gets its own generator keyed
/// by `(seed, purpose, step, block)`, so draws never depend on thread layout.
pub const RNG_BLOCK: usize = 4096;

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    Init = 1,
    Step = 2,
    Resample = 3,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based source of independent generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Generator for block `block` of `tag` at `step`.
    pub fn block(&self, tag: StreamTag, step: u64, block: u64) -> ChaCha8Rng {
        let mut h = splitmix(self.seed);
        h = splitmix(h ^ tag as u64);
        h = splitmix(h ^ step);
        h = splitmix(h ^ block);
        ChaCha8Rng::seed_from_u64(h)
    }

    /// Standard normal draws, `count * dim` of them, for one step.
    pub fn normals(&self, tag: StreamTag, step: u64, count: usize, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; count * dim];
        out.par_chunks_mut(RNG_BLOCK * dim).enumerate().for_each(|(b, chunk)| {
            let mut rng = self.block(tag, step, b as u64);
            for z in chunk {
                *z = rng.sample(StandardNormal);
            }
        });
        out
    }
}

/// Weight multiplier over one step: `1 + tau rho(w) - tau`, inside `[1 - tau, 1 + tau]`.
#[inline]
pub fn weight_factor(w: f64, tau: f64) -> f64 {
    // written as 1 + tau (rho - 1) so w = 1 gives exactly 1 and the bounds hold in floating point
    let r = 2.0 * w / (1.0 + w);
    1.0 + tau * (r - 1.0)
}

/// Euler–Maruyama move plus weight update, in place.
///
/// `grad_v` holds `dim` arrays of per-particle gradient components.
/// Returns the smallest and largest weight factor applied.
pub fn advance_particles(
    ensemble: &mut ParticleEnsemble,
    grad_v: &[Vec<f64>],
    w_at: &[f64],
    params: &ModelParams,
    tau: f64,
    length: f64,
    rng: &RngStream,
    step: u64,
) -> Result<(f64, f64)> {
    let dim = ensemble.dim;
    let count = ensemble.count();
    if grad_v.len() != dim || grad_v.iter().any(|g| g.len() != count) || w_at.len() != count {
        return Err(Error::InvalidParameter("interpolated fields do not match the ensemble size".into()));
    }
    if !(tau > 0.0 && tau <= 0.5) {
        return Err(Error::InvalidParameter(format!("timestep must lie in (0, 0.5], got {tau}")));
    }
    if let Some((p, w)) = w_at.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
        return Err(Error::Domain(format!("interpolated w = {w} < 0 at particle {p}")));
    }

    let range = ensemble
        .weights
        .par_iter_mut()
        .zip(w_at.par_iter())
        .map(|(a, &w)| {
            let f = weight_factor(w, tau);
            *a *= f;
            (f, f)
        })
        .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)));

    let drift = params.chi * tau;
    let sigma = (2.0 * params.d_u * tau).sqrt();
    if drift == 0.0 && sigma == 0.0 {
        return Ok(range);
    }
    let noise = if sigma > 0.0 { Some(rng.normals(StreamTag::Step, step, count, dim)) } else { None };
    ensemble.positions.par_chunks_mut(dim).enumerate().for_each(|(p, x)| {
        for (j, xj) in x.iter_mut().enumerate() {
            let mut dx = drift * grad_v[j][p];
            if let Some(z) = &noise {
                dx += sigma * z[p * dim + j];
            }
            *xj = wrap(*xj + dx, length);
        }
    });
    Ok(range)
}

/// Sum with a reduction tree fixed by [`RNG_BLOCK`], independent of the thread pool.
pub fn ordered_sum(x: &[f64]) -> f64 {
    let partial: Vec<f64> = x.par_chunks(RNG_BLOCK).map(|c| c.iter().sum()).collect();
    partial.iter().sum()
}

/// Mass summary of an ensemble at step `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassReport {
    pub step: usize,
    pub time: f64,
    pub total: f64,
    pub max_w: f64,
    pub min_w: f64,
    /// `max_w / min_w`; infinite when some weight is zero.
    pub ratio: f64,
    /// `total` lies in `[m0 (1 - tau)^n, m0 (1 + tau)^n]`.
    pub within_step_bounds: bool,
    /// `total` lies in `[m0 e^{-t}, m0 e^{t}]`.
    pub within_exponential_bounds: bool,
    /// `ratio <= ((1 + tau) / (1 - tau))^n`, meaningful for equal initial weights.
    pub ratio_within_bound: bool,
}

/// Relative slack granted to the bound checks for floating-point summation.
const BOUND_SLACK: f64 = 1e-10;

pub fn mass_report(ensemble: &ParticleEnsemble, step: usize, tau: f64, m0: f64) -> MassReport {
    let total = ordered_sum(&ensemble.weights);
    let (min_w, max_w) = ensemble
        .weights
        .par_iter()
        .fold(|| (f64::INFINITY, 0.0f64), |(lo, hi), &w| (lo.min(w), hi.max(w)))
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    let ratio = if min_w > 0.0 { max_w / min_w } else { f64::INFINITY };
    let n = step as i32;
    let t = step as f64 * tau;
    let lo = m0 * (1.0 - tau).powi(n);
    let hi = m0 * (1.0 + tau).powi(n);
    let within_step_bounds = total >= lo * (1.0 - BOUND_SLACK) && total <= hi * (1.0 + BOUND_SLACK);
    let within_exponential_bounds =
        total >= m0 * (-t).exp() * (1.0 - BOUND_SLACK) && total <= m0 * t.exp() * (1.0 + BOUND_SLACK);
    let ratio_within_bound = ratio <= ((1.0 + tau) / (1.0 - tau)).powi(n) * (1.0 + BOUND_SLACK);
    MassReport {
        step,
        time: t,
        total,
        max_w,
        min_w,
        ratio,
        within_step_bounds,
        within_exponential_bounds,
        ratio_within_bound,
    }
}

/// Number of copies each input particle receives under residual resampling.
///
/// `u` is the uniform offset of the systematic draw over the residuals.
pub fn residual_copy_counts(weights: &[f64], u: f64) -> Result<Vec<usize>> {
    let p = weights.len();
    let total = ordered_sum(weights);
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroMass);
    }
    let a0 = total / p as f64;
    let mut counts: Vec<usize> = Vec::with_capacity(p);
    let mut residuals: Vec<f64> = Vec::with_capacity(p);
    for &a in weights {
        // tolerate a ratio that lands a few ulps under an integer
        let k = (a / a0 * (1.0 + 1e-12)).floor();
        counts.push(k as usize);
        residuals.push((a - k * a0).max(0.0));
    }
    let deterministic: usize = counts.iter().sum();
    let n_stoch = p.saturating_sub(deterministic);
    if deterministic > p {
        // only reachable through the round-off guard above; trim the largest multiplicity
        let mut excess = deterministic - p;
        while excess > 0 {
            let i = (0..p).max_by_key(|&i| counts[i]).unwrap();
            counts[i] -= 1;
            excess -= 1;
        }
    }
    if n_stoch > 0 {
        let rsum: f64 = residuals.iter().sum();
        if rsum > 0.0 {
            let step = rsum / n_stoch as f64;
            let mut next = u * step;
            let mut cum = 0.0;
            let mut drawn = 0;
            for (i, &r) in residuals.iter().enumerate() {
                cum += r;
                while drawn < n_stoch && next < cum {
                    counts[i] += 1;
                    drawn += 1;
                    next += step;
                }
            }
            // cumulative round-off can leave the last threshold just past the end
            let last = residuals.iter().rposition(|&r| r > 0.0).unwrap_or(p - 1);
            counts[last] += n_stoch - drawn;
        } else {
            let heaviest = (0..p).max_by(|&a, &b| weights[a].total_cmp(&weights[b])).unwrap();
            counts[heaviest] += n_stoch;
        }
    }
    Ok(counts)
}

/// Replaces the ensemble by `P` equal-weight particles carrying weight `sum(a) / P`.
pub fn residual_resample(ensemble: &ParticleEnsemble, rng: &RngStream, step: u64) -> Result<ParticleEnsemble> {
    let p = ensemble.count();
    let total = ordered_sum(&ensemble.weights);
    let u: f64 = rng.block(StreamTag::Resample, step, 0).random();
    let counts = residual_copy_counts(&ensemble.weights, u)?;
    let dim = ensemble.dim;
    let mut positions = Vec::with_capacity(p * dim);
    for (i, &k) in counts.iter().enumerate() {
        for _ in 0..k {
            positions.extend_from_slice(ensemble.position(i));
        }
    }
    let a0 = total / p as f64;
    ParticleEnsemble::new(dim, positions, vec![a0; p])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ensemble(weights: Vec<f64>) -> ParticleEnsemble {
        let n = weights.len();
        ParticleEnsemble::new(2, (0..2 * n).map(|i| i as f64 * 0.1).collect(), weights).unwrap()
    }

    #[test]
    fn stream_is_reproducible() {
        let s = RngStream::new(7);
        assert_eq!(s.normals(StreamTag::Step, 3, 10_000, 2), s.normals(StreamTag::Step, 3, 10_000, 2));
        assert_ne!(s.normals(StreamTag::Step, 3, 10, 2), s.normals(StreamTag::Step, 4, 10, 2));
        assert_ne!(s.normals(StreamTag::Step, 3, 10, 2), RngStream::new(8).normals(StreamTag::Step, 3, 10, 2));
    }

    #[test]
    fn stream_independent_of_thread_count() {
        let s = RngStream::new(11);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| s.normals(StreamTag::Step, 0, 20_000, 3));
        let b = four.install(|| s.normals(StreamTag::Step, 0, 20_000, 3));
        assert_eq!(a, b);
    }

    #[test]
    fn static_without_drift_or_noise() {
        let mut p = ModelParams::benchmark();
        p.chi = 0.0;
        p.d_u = 0.0;
        let mut e = ensemble(vec![1.0; 5]);
        let before = e.positions.clone();
        let g = vec![vec![3.0; 5], vec![-2.0; 5]];
        advance_particles(&mut e, &g, &[0.7; 5], &p, 1e-3, 6.0, &RngStream::new(1), 0).unwrap();
        assert_eq!(e.positions, before);
    }

    #[test]
    fn weight_factor_examples() {
        assert_eq!(weight_factor(1.0, 1e-3), 1.0);
        assert_eq!(weight_factor(0.0, 1e-3), 1.0 - 1e-3);
        let mut e = ensemble(vec![2.0; 3]);
        let g = vec![vec![0.0; 3]; 2];
        advance_particles(&mut e, &g, &[0.0; 3], &ModelParams::benchmark(), 1e-3, 6.0, &RngStream::new(1), 0).unwrap();
        assert!(e.weights.iter().all(|&a| a == 2.0 * 0.999));
        let mut e = ensemble(vec![2.0; 3]);
        assert!(advance_particles(
            &mut e,
            &g,
            &[0.0, -1e-3, 1.0],
            &ModelParams::benchmark(),
            1e-3,
            6.0,
            &RngStream::new(1),
            0
        )
        .is_err());
    }

    #[test]
    fn pure_diffusion_variance() {
        let mut p = ModelParams::benchmark();
        p.chi = 0.0;
        p.d_u = 0.05;
        let n = 100_000;
        let l = 1000.0;
        let mut e = ParticleEnsemble::new(2, vec![500.0; 2 * n], vec![1.0; n]).unwrap();
        let g = vec![vec![0.0; n]; 2];
        let tau = 0.1;
        let steps = 20;
        for k in 0..steps {
            advance_particles(&mut e, &g, &vec![1.0; n], &p, tau, l, &RngStream::new(5), k).unwrap();
        }
        let t = tau * steps as f64;
        for j in 0..2 {
            let xs: Vec<f64> = e.positions.iter().skip(j).step_by(2).copied().collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let expect = 2.0 * p.d_u * t;
            assert!((var / expect - 1.0).abs() < 0.05, "axis {j}: {var} vs {expect}");
        }
    }

    #[test]
    fn deterministic_transport_in_linear_field() {
        let mut p = ModelParams::benchmark();
        p.d_u = 0.0;
        p.chi = 0.5;
        let mut e = ParticleEnsemble::new(2, vec![1.0, 2.0], vec![1.0]).unwrap();
        // grad v = (0.2, -0.1) everywhere: straight line x(t) = x0 + chi t grad v
        let g = vec![vec![0.2], vec![-0.1]];
        for k in 0..100 {
            advance_particles(&mut e, &g, &[1.0], &p, 0.01, 6.0, &RngStream::new(0), k).unwrap();
        }
        assert!((e.positions[0] - 1.1).abs() < 1e-12);
        assert!((e.positions[1] - 1.95).abs() < 1e-12);
    }

    #[test]
    fn mass_report_examples() {
        let e = ensemble(vec![0.25; 4]);
        let r = mass_report(&e, 0, 1e-3, 1.0);
        assert_eq!(r.total, 1.0);
        assert_eq!(r.ratio, 1.0);
        assert!(r.within_step_bounds && r.within_exponential_bounds && r.ratio_within_bound);

        let mut e = ensemble(vec![0.25; 4]);
        let g = vec![vec![0.0; 4]; 2];
        advance_particles(&mut e, &g, &[0.0; 4], &ModelParams::benchmark(), 1e-3, 6.0, &RngStream::new(1), 0).unwrap();
        let r = mass_report(&e, 1, 1e-3, 1.0);
        assert!((r.total - 0.999).abs() < 1e-15);
        assert!(r.within_step_bounds);
        // (1 - tau)^n sits below e^{-t}: the exponential lower bound is the tighter one
        assert!(!r.within_exponential_bounds);

        let e = ensemble(vec![0.25; 4]);
        assert!(!mass_report(&e, 1, 1e-3, 1.5).within_step_bounds);
    }

    #[test]
    fn resample_equal_weights_is_identity() {
        let e = ensemble(vec![0.3; 6]);
        let r = residual_resample(&e, &RngStream::new(3), 0).unwrap();
        assert_eq!(r.positions, e.positions);
        assert!(r.weights.iter().all(|&a| (a - 0.3).abs() < 1e-16));
    }

    #[test]
    fn resample_integer_multiples() {
        let e = ensemble(vec![4.0, 0.0, 0.0, 0.0]);
        let r = residual_resample(&e, &RngStream::new(3), 0).unwrap();
        for p in 0..4 {
            assert_eq!(r.position(p), e.position(0));
        }
        assert_eq!(r.weights, vec![1.0; 4]);
    }

    #[test]
    fn resample_zero_mass_fails() {
        assert!(matches!(residual_resample(&ensemble(vec![0.0; 3]), &RngStream::new(0), 0), Err(Error::ZeroMass)));
    }

    #[test]
    fn resample_two_particle_example() {
        // a0 = 1, deterministic copies (1, 0), one stochastic slot with probabilities (1/2, 1/2)
        assert_eq!(residual_copy_counts(&[1.5, 0.5], 0.2).unwrap(), vec![2, 0]);
        assert_eq!(residual_copy_counts(&[1.5, 0.5], 0.7).unwrap(), vec![1, 1]);
        let e = ensemble(vec![1.5, 0.5]);
        let reps = 10_000;
        let mut copies0 = 0usize;
        for k in 0..reps {
            let r = residual_resample(&e, &RngStream::new(99), k).unwrap();
            copies0 += (0..2).filter(|&p| r.position(p) == e.position(0)).count();
        }
        let mean0 = copies0 as f64 / reps as f64;
        let sigma = (0.25f64 / reps as f64).sqrt();
        assert!((mean0 - 1.5).abs() < 3.0 * sigma, "{mean0}");
    }

    proptest! {
        #[test]
        fn resample_conserves_count_and_mass(ws in proptest::collection::vec(0.0f64..10.0, 1..60), u in 0.0f64..1.0) {
            prop_assume!(ws.iter().sum::<f64>() > 1e-6);
            let counts = residual_copy_counts(&ws, u).unwrap();
            prop_assert_eq!(counts.iter().sum::<usize>(), ws.len());
            let a0 = ws.iter().sum::<f64>() / ws.len() as f64;
            for (c, w) in counts.iter().zip(&ws) {
                // deterministic part is always present, stochastic part adds at most ceil
                prop_assert!(*c as f64 >= (w / a0).floor() - 1e-9);
                if *w == 0.0 { prop_assert_eq!(*c, 0); }
            }
            let e = ParticleEnsemble::new(1, vec![0.0; ws.len()], ws.clone()).unwrap();
            let r = residual_resample(&e, &RngStream::new(1), 0).unwrap();
            let before: f64 = ws.iter().sum();
            prop_assert!((r.total_mass() - before).abs() <= 1e-12 * before);
        }

        #[test]
        fn weight_factor_within_step_bounds(w in 0.0f64..1e6, tau in 1e-6f64..0.5) {
            let f = weight_factor(w, tau);
            prop_assert!(f >= 1.0 - tau && f <= 1.0 + tau);
        }
    }
}
