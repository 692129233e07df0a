//! Periodic spectral fields and the Gaussian propagation operators that act
//! on them.
//!
//! Spectral coefficients follow the trapezoidal approximation of the Fourier
//! series coefficient, `k_q = H^{-d} sum_p f(ph) exp(-2 pi i q.p / H)`, so a
//! constant field `c` has `k_0 = c` and inversion is a plain sum.
//!
//! Diffusion over one step (`variance = 2 D tau`) and the low-pass filter
//! (`variance = L^2 / H0^2`) are both periodic Gaussians. Each can be applied
//! with its theoretical multiplier `exp(-2 pi^2 var |q|^2 / L^2)` or with the
//! aliased multiplier, the DFT of the lattice-periodized Gaussian sampled on
//! the grid and normalized to unit mass. The aliased form is positive in
//! physical space, so it can also be applied as a separable stencil there,
//! which keeps nonnegative data nonnegative in floating point.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::grid::{FftPlan, Grid};

/// A real scalar on the periodic grid with lazily synchronized physical and
/// spectral views.
#[derive(Clone)]
pub struct Field {
    grid: Grid,
    plan: Arc<FftPlan>,
    physical: Vec<f64>,
    spectral: Vec<Complex64>,
    physical_ok: bool,
    spectral_ok: bool,
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("physical_ok", &self.physical_ok)
            .field("spectral_ok", &self.spectral_ok)
            .finish()
    }
}

impl Field {
    pub fn zeros(grid: Grid, plan: Arc<FftPlan>) -> Self {
        let len = grid.len();
        Self {
            grid,
            plan,
            physical: vec![0.0; len],
            spectral: vec![Complex64::default(); len],
            physical_ok: true,
            spectral_ok: true,
        }
    }

    pub fn from_physical(grid: Grid, plan: Arc<FftPlan>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len());
        Self {
            grid,
            plan,
            physical: values,
            spectral: vec![Complex64::default(); grid.len()],
            physical_ok: true,
            spectral_ok: false,
        }
    }

    pub fn from_spectral(grid: Grid, plan: Arc<FftPlan>, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), grid.len());
        Self { grid, plan, physical: vec![0.0; grid.len()], spectral: coeffs, physical_ok: false, spectral_ok: true }
    }

    /// Samples `f` at every node (origin-relative coordinates).
    pub fn from_fn(grid: Grid, plan: Arc<FftPlan>, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let x = grid.node(i);
                f(&x[..grid.dim])
            })
            .collect();
        Self::from_physical(grid, plan, values)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn plan(&self) -> &Arc<FftPlan> {
        &self.plan
    }

    /// Recomputes the spectral view from the physical one.
    pub fn dft_forward(&mut self) {
        let scale = 1.0 / self.grid.len() as f64;
        self.spectral.par_iter_mut().zip(self.physical.par_iter()).for_each(|(s, &p)| *s = Complex64::new(p, 0.0));
        self.plan.transform(&mut self.spectral, self.grid.dim, false);
        self.spectral.par_iter_mut().for_each(|s| *s *= scale);
        self.spectral_ok = true;
    }

    /// Recomputes the physical view from the spectral one (real part).
    pub fn dft_inverse(&mut self) {
        let mut work = self.spectral.clone();
        self.plan.transform(&mut work, self.grid.dim, true);
        self.physical.par_iter_mut().zip(work.par_iter()).for_each(|(p, s)| *p = s.re);
        self.physical_ok = true;
    }

    pub fn physical(&mut self) -> &[f64] {
        if !self.physical_ok {
            self.dft_inverse();
        }
        &self.physical
    }

    /// Physical view of a field whose physical data is known to be current.
    pub fn physical_ref(&self) -> &[f64] {
        assert!(self.physical_ok, "physical view is stale");
        &self.physical
    }

    pub fn physical_mut(&mut self) -> &mut [f64] {
        if !self.physical_ok {
            self.dft_inverse();
        }
        self.spectral_ok = false;
        &mut self.physical
    }

    pub fn spectral(&mut self) -> &[Complex64] {
        if !self.spectral_ok {
            self.dft_forward();
        }
        &self.spectral
    }

    pub fn spectral_mut(&mut self) -> &mut [Complex64] {
        if !self.spectral_ok {
            self.dft_forward();
        }
        self.physical_ok = false;
        &mut self.spectral
    }

    pub fn into_physical(mut self) -> Vec<f64> {
        if !self.physical_ok {
            self.dft_inverse();
        }
        self.physical
    }

    /// `h^d sum f`, the grid quadrature of the field.
    pub fn integral(&mut self) -> f64 {
        let hd = self.grid.cell().powi(self.grid.dim as i32);
        hd * self.physical().iter().sum::<f64>()
    }

    /// Multiplies each spectral coefficient by a real multiplier.
    pub fn apply_multiplier(&mut self, mult: &[f64]) {
        let s = self.spectral_mut();
        s.par_iter_mut().zip(mult.par_iter()).for_each(|(c, &m)| *c *= m);
    }
}

/// Which representation of a periodic Gaussian operator is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFlavor {
    /// `exp(-2 pi^2 var q^2 / L^2)`, truncated to the DFT band.
    Theoretical,
    /// DFT of the normalized lattice-periodized Gaussian; positive in physical space.
    Aliased,
    /// Semigroup of the second-order difference Laplacian,
    /// `exp(-2 var sin^2(pi q / H) / h^2)` per axis. Positive in physical space
    /// and consistent to `O(h^2)` even when the Gaussian is narrower than a cell.
    Lattice,
}

/// One-dimensional periodic Gaussian of a given physical variance on an `n`-point axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGaussian {
    pub variance: f64,
    pub n: usize,
    pub length: f64,
}

const TINY: f64 = 1e-300;

impl PeriodicGaussian {
    pub fn new(variance: f64, n: usize, length: f64) -> Self {
        assert!(variance >= 0.0 && variance.is_finite());
        Self { variance, n, length }
    }

    fn freq(&self, k: usize) -> f64 {
        if k < self.n / 2 {
            k as f64
        } else {
            k as f64 - self.n as f64
        }
    }

    /// Theoretical per-axis multipliers indexed by DFT slot.
    pub fn theoretical(&self) -> Vec<f64> {
        let c = 2.0 * PI * PI * self.variance / (self.length * self.length);
        (0..self.n)
            .map(|k| {
                let q = self.freq(k);
                (-c * q * q).exp()
            })
            .collect()
    }

    /// Un-normalized lattice sum `sum_n exp(-c (q + n H)^2)` for each slot, truncated
    /// at `|n| <= images` (`None` sums until the terms underflow).
    pub fn lattice_sum(&self, images: Option<usize>) -> Vec<f64> {
        let c = 2.0 * PI * PI * self.variance / (self.length * self.length);
        let h = self.n as f64;
        (0..self.n)
            .map(|k| {
                let q = self.freq(k);
                let mut s = (-c * q * q).exp();
                for dir in [1.0, -1.0] {
                    let mut m = 1usize;
                    loop {
                        if images.is_some_and(|lim| m > lim) {
                            break;
                        }
                        let t = (-c * (q + dir * m as f64 * h).powi(2)).exp();
                        s += t;
                        if t < TINY || (images.is_none() && t < 1e-20 * s) {
                            break;
                        }
                        m += 1;
                    }
                }
                s
            })
            .collect()
    }

    /// Per-axis multipliers of the discrete heat semigroup with the same variance.
    pub fn lattice(&self) -> Vec<f64> {
        let h = self.length / self.n as f64;
        let c = 2.0 * self.variance / (h * h);
        (0..self.n).map(|k| (-c * (PI * k as f64 / self.n as f64).sin().powi(2)).exp()).collect()
    }

    /// Physical weights of [`Self::lattice`] in slot order. They are positive
    /// (modified Bessel values); entries below `1e-15` of the peak are dropped
    /// along with the round-off of the inverse transform.
    pub fn lattice_stencil(&self) -> Vec<f64> {
        let n = self.n;
        let mult = self.lattice();
        let mut g: Vec<f64> = (0..n)
            .map(|k| {
                let s: f64 =
                    mult.iter().enumerate().map(|(q, m)| m * (2.0 * PI * ((q * k) % n) as f64 / n as f64).cos()).sum();
                s / n as f64
            })
            .collect();
        let peak = g.iter().cloned().fold(0.0, f64::max);
        g.iter_mut().for_each(|v| {
            if *v < 1e-15 * peak {
                *v = 0.0
            }
        });
        let total: f64 = g.iter().sum();
        g.iter_mut().for_each(|v| *v /= total);
        g
    }

    /// Per-axis multipliers in the requested flavor.
    pub fn multiplier(&self, flavor: KernelFlavor) -> Vec<f64> {
        match flavor {
            KernelFlavor::Theoretical => self.theoretical(),
            KernelFlavor::Aliased => self.aliased(),
            KernelFlavor::Lattice => self.lattice(),
        }
    }

    /// Nonnegative physical weights matching [`Self::multiplier`], when the flavor has them.
    pub fn slot_weights(&self, flavor: KernelFlavor) -> Option<Vec<f64>> {
        match flavor {
            KernelFlavor::Theoretical => None,
            KernelFlavor::Aliased => Some(self.stencil()),
            KernelFlavor::Lattice => Some(self.lattice_stencil()),
        }
    }

    /// Aliased per-axis multipliers: the lattice sum normalized to 1 at `q = 0`.
    pub fn aliased(&self) -> Vec<f64> {
        if self.variance == 0.0 {
            return vec![1.0; self.n];
        }
        let s = self.lattice_sum(None);
        let s0 = s[0];
        s.into_iter().map(|v| v / s0).collect()
    }

    /// Physical-space weights `g(p)` for offsets `p` in slot order (`0, 1, .., -1`),
    /// the periodized Gaussian sampled on the nodes and normalized to sum to one.
    pub fn stencil(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        if self.variance == 0.0 {
            g[0] = 1.0;
            return g;
        }
        let h = self.length / self.n as f64;
        let inv = 1.0 / (2.0 * self.variance);
        for (k, gk) in g.iter_mut().enumerate() {
            let p = self.freq(k) * h;
            let mut s = (-(p * p) * inv).exp();
            for dir in [1.0, -1.0] {
                let mut m = 1usize;
                loop {
                    let t = (-(p + dir * m as f64 * self.length).powi(2) * inv).exp();
                    s += t;
                    if t < TINY || t < 1e-20 * s {
                        break;
                    }
                    m += 1;
                }
            }
            *gk = s;
        }
        let total: f64 = g.iter().sum();
        g.iter_mut().for_each(|v| *v /= total);
        g
    }
}

/// Expands per-axis factors into a full `n^dim` multiplier array.
fn tensor_multiplier(grid: Grid, axis: &[f64], scale: f64) -> Vec<f64> {
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let mut ix = [0usize; 3];
            grid.unflatten(idx, &mut ix);
            ix[..grid.dim].iter().fold(scale, |acc, &k| acc * axis[k])
        })
        .collect()
}

/// Per-frequency propagation multipliers for one species: diffusion with
/// diffusivity `D` over `tau` followed by linear decay at rate `r`.
#[derive(Debug, Clone)]
pub struct PropagationKernel {
    pub flavor: KernelFlavor,
    pub grid: Grid,
    pub diffusivity: f64,
    pub decay: f64,
    pub tau: f64,
    /// Per-axis factors; the full multiplier is `exp(-r tau) prod_j axis[k_j]`.
    pub axis: Vec<f64>,
    pub multipliers: Vec<f64>,
}

impl PropagationKernel {
    pub fn gaussian(&self) -> PeriodicGaussian {
        PeriodicGaussian::new(2.0 * self.diffusivity * self.tau, self.grid.n, self.grid.length)
    }

    pub fn decay_factor(&self) -> f64 {
        (-self.decay * self.tau).exp()
    }

    /// Inverse DFT of the multipliers: the convolution weights the kernel
    /// applies on the grid.
    pub fn physical_weights(&self, plan: &FftPlan) -> Vec<f64> {
        let mut data: Vec<Complex64> = self.multipliers.iter().map(|&m| Complex64::new(m, 0.0)).collect();
        plan.transform(&mut data, self.grid.dim, true);
        let scale = 1.0 / self.grid.len() as f64;
        data.iter().map(|c| c.re * scale).collect()
    }
}

fn build_kernel(flavor: KernelFlavor, d: f64, r: f64, tau: f64, grid: Grid) -> PropagationKernel {
    assert!(d >= 0.0 && r >= 0.0 && tau >= 0.0, "kernel inputs must be nonnegative");
    let g = PeriodicGaussian::new(2.0 * d * tau, grid.n, grid.length);
    let axis = g.multiplier(flavor);
    let multipliers = tensor_multiplier(grid, &axis, (-r * tau).exp());
    PropagationKernel { flavor, grid, diffusivity: d, decay: r, tau, axis, multipliers }
}

/// `exp(-4 pi^2 |q|^2 D tau / L^2 - r tau)` at every DFT frequency.
pub fn build_kernel_theoretical(d: f64, r: f64, tau: f64, grid: Grid) -> PropagationKernel {
    build_kernel(KernelFlavor::Theoretical, d, r, tau, grid)
}

/// Lattice-aliased kernel `sum_n K_{q + nH}`, normalized so the zero mode
/// decays exactly by `exp(-r tau)`. Its inverse DFT is the periodized heat
/// kernel sampled on the nodes, hence positive.
pub fn build_kernel_aliased(d: f64, r: f64, tau: f64, grid: Grid) -> PropagationKernel {
    build_kernel(KernelFlavor::Aliased, d, r, tau, grid)
}

/// Discrete-Laplacian semigroup `exp(tau D Delta_h)` followed by decay `exp(-r tau)`.
pub fn build_kernel_lattice(d: f64, r: f64, tau: f64, grid: Grid) -> PropagationKernel {
    build_kernel(KernelFlavor::Lattice, d, r, tau, grid)
}

/// Builds a kernel of any flavor.
pub fn build_kernel_flavored(flavor: KernelFlavor, d: f64, r: f64, tau: f64, grid: Grid) -> PropagationKernel {
    build_kernel(flavor, d, r, tau, grid)
}

/// Upper bound on `|K_aliased - K_theoretical|` for a well-resolved kernel.
pub fn aliasing_bound(d: f64, tau: f64, grid: Grid) -> f64 {
    let h = grid.n as f64;
    4.0 * (-PI * PI * d * tau * h * h / (grid.length * grid.length)).exp()
}

/// Multiplies each mode by `exp(-2 pi^2 |q|^2 / H0^2)`.
pub fn gaussian_lowpass(field: &mut Field, h0: f64) {
    let grid = field.grid();
    let mult = lowpass_multiplier(grid, h0, KernelFlavor::Theoretical);
    field.apply_multiplier(&mult);
}

/// Full multiplier array of the low-pass filter in the requested flavor.
pub fn lowpass_multiplier(grid: Grid, h0: f64, flavor: KernelFlavor) -> Vec<f64> {
    let axis = lowpass_gaussian(grid, h0).multiplier(flavor);
    tensor_multiplier(grid, &axis, 1.0)
}

/// The filter as a Gaussian of variance `L^2 / H0^2`.
pub fn lowpass_gaussian(grid: Grid, h0: f64) -> PeriodicGaussian {
    assert!(h0 > 0.0);
    let var = if h0.is_infinite() { 0.0 } else { (grid.length / h0).powi(2) };
    PeriodicGaussian::new(var, grid.n, grid.length)
}

/// Components of the spectral gradient, each returned with a current physical view.
/// The Nyquist slot of the differentiated axis is zeroed to keep the result real.
pub fn spectral_gradient(field: &mut Field) -> Vec<Field> {
    let grid = field.grid();
    let plan = field.plan().clone();
    let coeffs = field.spectral().to_vec();
    (0..grid.dim)
        .map(|axis| {
            let stride = grid.n.pow(axis as u32);
            let c: Vec<Complex64> = coeffs
                .par_iter()
                .enumerate()
                .map(|(idx, &k)| {
                    let slot = (idx / stride) % grid.n;
                    if slot == grid.n / 2 {
                        Complex64::default()
                    } else {
                        let q = grid.freq(slot) as f64;
                        k * Complex64::new(0.0, 2.0 * PI * q / grid.length)
                    }
                })
                .collect();
            let mut f = Field::from_spectral(grid, plan.clone(), c);
            f.dft_inverse();
            f
        })
        .collect()
}

/// A symmetric nonnegative per-axis stencil, truncated where the weights fall
/// below `1e-20` of the peak and renormalized to unit sum.
#[derive(Debug, Clone)]
pub struct SeparableStencil {
    pub taps: Vec<(isize, f64)>,
}

impl SeparableStencil {
    pub fn from_slot_weights(weights: &[f64]) -> Self {
        let n = weights.len();
        let peak = weights.iter().cloned().fold(0.0, f64::max);
        let mut taps: Vec<(isize, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 1e-20 * peak)
            .map(|(k, &w)| (if k < n / 2 { k as isize } else { k as isize - n as isize }, w))
            .collect();
        let total: f64 = taps.iter().map(|t| t.1).sum();
        taps.iter_mut().for_each(|t| t.1 /= total);
        taps.sort_by_key(|t| t.0);
        Self { taps }
    }

    /// Circular convolution of two stencils given as full slot-ordered arrays.
    pub fn compose_slots(a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = a.len();
        let mut out = vec![0.0; n];
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (j, &bj) in b.iter().enumerate() {
                out[(i + j) % n] += ai * bj;
            }
        }
        out
    }

    pub fn width(&self) -> usize {
        self.taps.len()
    }

    /// Convolves `data` along every axis and scales by `scale`.
    pub fn apply(&self, grid: Grid, data: &mut Vec<f64>, scale: f64) {
        let n = grid.n;
        let ni = n as isize;
        for axis in 0..grid.dim {
            let inner = n.pow(axis as u32);
            let mut out = vec![0.0; data.len()];
            let src = &*data;
            if inner == 1 {
                out.par_chunks_mut(n).zip(src.par_chunks(n)).for_each(|(o, line)| {
                    for (i, oi) in o.iter_mut().enumerate() {
                        let mut s = 0.0;
                        for &(off, w) in &self.taps {
                            let j = (i as isize + off).rem_euclid(ni) as usize;
                            s += w * line[j];
                        }
                        *oi = s;
                    }
                });
            } else {
                out.par_chunks_mut(inner).enumerate().for_each(|(row, o)| {
                    let outer = row / n;
                    let i = row % n;
                    let base = outer * n * inner;
                    for &(off, w) in &self.taps {
                        let j = (i as isize + off).rem_euclid(ni) as usize;
                        let s = &src[base + j * inner..base + (j + 1) * inner];
                        for (oo, &v) in o.iter_mut().zip(s) {
                            *oo += w * v;
                        }
                    }
                });
            }
            *data = out;
        }
        if scale != 1.0 {
            data.par_iter_mut().for_each(|v| *v *= scale);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn setup(dim: usize, n: usize, l: f64) -> (Grid, Arc<FftPlan>) {
        (Grid::new(dim, n, l), FftPlan::new(n))
    }

    #[test]
    fn constant_field_has_only_zero_mode() {
        let (g, plan) = setup(2, 16, 6.0);
        let mut f = Field::from_fn(g, plan, |_| 2.5);
        let s = f.spectral();
        assert!((s[0] - Complex64::new(2.5, 0.0)).norm() < 1e-14);
        assert!(s[1..].iter().all(|c| c.norm() < 1e-14));
    }

    #[test]
    fn cosine_mode_coefficients() {
        let (g, plan) = setup(3, 8, 6.0);
        let mut f = Field::from_fn(g, plan, |x| (2.0 * PI * x[0] / 6.0).cos());
        let s = f.spectral().to_vec();
        assert!((s[1].re - 0.5).abs() < 1e-12);
        assert!((s[7].re - 0.5).abs() < 1e-12);
        let rest: f64 = s.iter().enumerate().filter(|(i, _)| *i != 1 && *i != 7).map(|(_, c)| c.norm()).sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn theoretical_kernel_values() {
        let g = Grid::new(2, 16, 6.0);
        let k = build_kernel_theoretical(0.01, 0.01, 1e-3, g);
        assert!((k.multipliers[0] - (-0.01f64 * 1e-3).exp()).abs() < 1e-16);
        let id = build_kernel_theoretical(0.0, 0.0, 1e-3, g);
        assert!(id.multipliers.iter().all(|&m| m == 1.0));
        let g3 = Grid::new(3, 16, 6.0);
        let k = build_kernel_theoretical(0.01, 0.0, 1e-3, g3);
        let expected = (-4.0 * PI * PI * 0.01 * 0.001 / 36.0f64).exp();
        assert!((k.multipliers[1] - expected).abs() < 1e-16);
        assert!((1.0 - k.multipliers[1] - 1.0966e-5).abs() < 1e-9);
    }

    #[test]
    fn aliased_matches_theoretical_when_resolved() {
        let g = Grid::new(2, 64, 1.0);
        let a = build_kernel_aliased(1.0, 0.5, 0.01, g);
        let t = build_kernel_theoretical(1.0, 0.5, 0.01, g);
        for (x, y) in a.multipliers.iter().zip(&t.multipliers) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn aliased_small_grid_bound() {
        let g = Grid::new(3, 8, 6.0);
        let (d, tau) = (0.01, 0.1);
        let a = build_kernel_aliased(d, 0.0, tau, g);
        let t = build_kernel_theoretical(d, 0.0, tau, g);
        let diff = a.multipliers.iter().zip(&t.multipliers).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff <= aliasing_bound(d, tau, g));
    }

    #[test]
    fn aliased_dual_routes_agree() {
        // frequency-side lattice sum vs DFT of the physical periodized Gaussian
        for &(var, n) in &[(1e-3, 16usize), (0.02, 32), (0.3, 8), (2.0, 16)] {
            let pg = PeriodicGaussian::new(var, n, 1.0);
            let alias = pg.aliased();
            let st = pg.stencil();
            for k in 0..n {
                let q = pg.freq(k);
                let dft: f64 =
                    st.iter().enumerate().map(|(p, &w)| w * (2.0 * PI * q * pg.freq(p) / n as f64).cos()).sum();
                assert!((dft - alias[k]).abs() < 1e-13, "var {var} n {n} k {k}: {dft} vs {}", alias[k]);
            }
        }
    }

    #[test]
    fn lowpass_values() {
        let (g, plan) = setup(2, 16, 6.0);
        let mult = lowpass_multiplier(g, 8.0, KernelFlavor::Theoretical);
        assert_eq!(mult[0], 1.0);
        // |q|^2 = 64 at q = (8, 0) is the Nyquist slot; use (0, 8) equivalently
        let idx = g.flatten(&[8, 0, 0]);
        assert!((mult[idx] - (-2.0 * PI * PI).exp()).abs() < 1e-20);
        assert!(((-2.0 * PI * PI).exp() - 2.675e-9).abs() < 1e-12);
        let mut f = Field::from_fn(g, plan, |x| 1.0 + x[0].sin());
        let before = f.physical().to_vec();
        gaussian_lowpass(&mut f, f64::INFINITY);
        let after = f.physical();
        for (a, b) in before.iter().zip(after) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_of_sine() {
        let (g, plan) = setup(2, 32, 6.0);
        let mut f = Field::from_fn(g, plan, |x| (2.0 * PI * x[0] / 6.0).sin());
        let grads = spectral_gradient(&mut f);
        for idx in 0..g.len() {
            let x = g.node(idx);
            let expect = 2.0 * PI / 6.0 * (2.0 * PI * x[0] / 6.0).cos();
            assert!((grads[0].physical_ref()[idx] - expect).abs() < 1e-10);
            assert!(grads[1].physical_ref()[idx].abs() < 1e-10);
        }
        let mut c = Field::from_fn(g, f.plan().clone(), |_| 3.0);
        for gr in spectral_gradient(&mut c) {
            assert!(gr.physical_ref().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn gradient_vs_fourth_order_fd() {
        // band-limited field, centered 4th-order differences as oracle
        let l = 6.0;
        let fd_err = |n: usize| {
            let (g, plan) = setup(2, n, l);
            let f_fn = |x: &[f64]| {
                (2.0 * PI * x[0] / l).sin() * (4.0 * PI * x[1] / l).cos() + 0.3 * (6.0 * PI * (x[0] + x[1]) / l).cos()
            };
            let mut f = Field::from_fn(g, plan, f_fn);
            let grads = spectral_gradient(&mut f);
            let vals = f.physical().to_vec();
            let h = g.cell();
            let mut err: f64 = 0.0;
            for j in 0..n {
                for i in 0..n {
                    let at = |di: isize| vals[g.flatten(&[(i as isize + di).rem_euclid(n as isize) as usize, j, 0])];
                    let fd = (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h);
                    err = err.max((fd - grads[0].physical_ref()[g.flatten(&[i, j, 0])]).abs());
                }
            }
            err
        };
        let (e1, e2) = (fd_err(32), fd_err(64));
        let order = (e1 / e2).log2();
        assert!(order > 3.5 && order < 4.5, "observed order {order}");
    }

    #[test]
    fn zero_mode_conserved_without_decay() {
        let (g, plan) = setup(2, 32, 6.0);
        let mut f = Field::from_fn(g, plan, |x| 1.0 + (x[0] * x[1]).cos());
        let m0 = f.spectral()[0];
        let k = build_kernel_aliased(0.05, 0.0, 0.1, g);
        f.apply_multiplier(&k.multipliers);
        assert!((f.spectral()[0] - m0).norm() < 1e-15);
    }

    #[test]
    fn lattice_kernel_is_discrete_heat_semigroup() {
        // exp(tau D Delta_h) against many small explicit steps of the 5-point Laplacian
        let (g, plan) = setup(2, 16, 6.0);
        let (d, tau) = (0.05, 0.2);
        let f0 = |x: &[f64]| if (x[0] - 3.0).abs() < 1.0 && x[1] < 2.0 { 1.0 } else { 0.0 };
        let mut f = Field::from_fn(g, plan, f0);
        let mut u = f.physical().to_vec();
        let k = build_kernel_lattice(d, 0.0, tau, g);
        f.apply_multiplier(&k.multipliers);
        let n = g.n;
        let h2 = g.cell().powi(2);
        let steps = 20_000;
        let dt = tau / steps as f64;
        for _ in 0..steps {
            let prev = u.clone();
            for i in 0..g.len() {
                let (x, y) = (i % n, i / n);
                let at = |a: usize, b: usize| prev[(b % n) * n + a % n];
                let lap = at(x + 1, y) + at(x + n - 1, y) + at(x, y + 1) + at(x, y + n - 1) - 4.0 * prev[i];
                u[i] = prev[i] + dt * d * lap / h2;
            }
        }
        for (a, b) in u.iter().zip(f.physical()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn lattice_weights_positive_and_consistent() {
        let pg = PeriodicGaussian::new(2.0 * 0.01 * 2e-3, 128, 6.0);
        let w = pg.lattice_stencil();
        assert!(w.iter().all(|&v| v >= 0.0));
        assert!(w[0] > 0.0 && w[1] > 0.0 && w[127] > 0.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // second moment of the lattice kernel equals the variance exactly
        let h = 6.0 / 128.0;
        let m2: f64 = w.iter().enumerate().map(|(k, v)| v * (pg.freq(k) * h).powi(2)).sum();
        assert!((m2 / pg.variance - 1.0).abs() < 1e-9, "{m2}");
        // agrees with the theoretical multiplier to O((q h)^2) in the exponent
        let (lat, th) = (pg.lattice(), pg.theoretical());
        for q in 1..16 {
            let rel = (lat[q].ln() / th[q].ln() - 1.0).abs();
            let qh = std::f64::consts::PI * q as f64 / 128.0;
            assert!(rel <= qh * qh / 3.0 + 1e-12, "q = {q}: {rel}");
        }
    }

    #[test]
    fn lattice_stencil_matches_spectral_route() {
        let (g, plan) = setup(3, 16, 6.0);
        let pg = PeriodicGaussian::new(0.03, g.n, g.length);
        let st = SeparableStencil::from_slot_weights(&pg.lattice_stencil());
        let mut f = Field::from_fn(g, plan, |x| (x[0] - 3.0).abs() + (x[1] * 0.7).sin().powi(2) + x[2]);
        let mut phys = f.physical().to_vec();
        st.apply(g, &mut phys, 0.7);
        f.apply_multiplier(&tensor_multiplier(g, &pg.lattice(), 0.7));
        for (a, b) in phys.iter().zip(f.physical()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stencil_matches_spectral_route() {
        let (g, plan) = setup(2, 32, 6.0);
        let pg = PeriodicGaussian::new(0.04, g.n, g.length);
        let st = SeparableStencil::from_slot_weights(&pg.stencil());
        let mut f = Field::from_fn(g, plan, |x| (x[0] - 3.0).abs() + (x[1] * 0.7).sin().powi(2));
        let mut phys = f.physical().to_vec();
        st.apply(g, &mut phys, 0.9);
        let mult = tensor_multiplier(g, &pg.aliased(), 0.9);
        f.apply_multiplier(&mult);
        for (a, b) in phys.iter().zip(f.physical()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn dft_round_trip(vals in proptest::collection::vec(-10.0f64..10.0, 64)) {
            let (g, plan) = setup(2, 8, 6.0);
            let mut f = Field::from_physical(g, plan, vals.clone());
            f.dft_forward();
            f.dft_inverse();
            for (a, b) in vals.iter().zip(f.physical()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn multipliers_in_unit_interval(d in 1e-4f64..1.0, tau in 1e-3f64..0.5, r in 0.0f64..2.0) {
            let g = Grid::new(2, 16, 6.0);
            for k in [build_kernel_aliased(d, r, tau, g), build_kernel_theoretical(d, r, tau, g)] {
                prop_assert!(k.multipliers.iter().all(|&m| m > 0.0 && m <= 1.0));
            }
        }
    }
}
