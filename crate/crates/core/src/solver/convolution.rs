//! Two routes to the stochastic convolution `Z(t) = ∫_0^t S(t-s) σ dW(s)` on a
//! recorded path of modal noise increments.

use super::SolverError;
use crate::noise::{NoiseSpectrum, NoiseStream};
use crate::scalar::Real;
use crate::spectral::SpectralBasis;

/// Modal increments `ĝ_j = ⟨σ(s_j) ΔW_j, e_k⟩` with their step start times and lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath<T> {
    mode_count: usize,
    starts: Vec<T>,
    steps: Vec<T>,
    increments: Vec<T>,
}

impl<T: Real> NoisePath<T> {
    pub fn empty(mode_count: usize) -> Self {
        Self {
            mode_count,
            starts: Vec::new(),
            steps: Vec::new(),
            increments: Vec::new(),
        }
    }

    pub fn push(&mut self, start: T, dt: T, increment: &[T]) {
        debug_assert_eq!(increment.len(), self.mode_count);
        self.starts.push(start);
        self.steps.push(dt);
        self.increments.extend_from_slice(increment);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn increment(&self, j: usize) -> &[T] {
        &self.increments[j * self.mode_count..(j + 1) * self.mode_count]
    }

    /// Grid `t_0, ..., t_n` with `t_{j+1} = t_j + dt_j`.
    pub fn times(&self) -> Vec<T> {
        let mut t = Vec::with_capacity(self.len() + 1);
        t.push(self.starts.first().copied().unwrap_or_else(T::zero));
        for (j, &dt) in self.steps.iter().enumerate() {
            let next = t[j] + dt;
            t.push(next);
        }
        t
    }

    /// Projects `σ(s_j, x) ΔW_j` onto the basis for every step of a Brownian path.
    pub fn from_brownian<F>(
        basis: &SpectralBasis<T>,
        noise: &NoiseSpectrum<T>,
        path: &BrownianPath<T>,
        sigma: F,
    ) -> Result<Self, SolverError>
    where
        F: Fn(T, T) -> T,
    {
        let j = basis.mode_count();
        if noise.mode_count() != j || path.mode_count != j {
            return Err(SolverError::Config(
                "noise spectrum, Brownian path and basis disagree on mode count".into(),
            ));
        }
        let transform = basis.transform();
        let mut out = Self::empty(j);
        let mut scaled = vec![T::zero(); j];
        let mut grid = vec![T::zero(); basis.grid_size()];
        let mut modes = vec![T::zero(); j];
        for step in 0..path.len() {
            let s = T::from_count(step) * path.dt;
            for ((c, &db), &lambda) in scaled
                .iter_mut()
                .zip(path.increment(step))
                .zip(noise.coefficients())
            {
                *c = lambda * db;
            }
            transform.inverse(&scaled, &mut grid);
            for (g, &x) in grid.iter_mut().zip(basis.grid()) {
                *g = sigma(s, x) * *g;
            }
            transform.forward(&grid, &mut modes);
            out.push(s, path.dt, &modes);
        }
        Ok(out)
    }
}

/// Independent standard Brownian increments `ΔB_k` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath<T> {
    dt: T,
    mode_count: usize,
    increments: Vec<T>,
}

impl<T: Real> BrownianPath<T> {
    pub fn sample(mode_count: usize, steps: usize, dt: T, stream: &mut NoiseStream) -> Self {
        let mut normals = vec![0.0; mode_count];
        let mut increments = Vec::with_capacity(mode_count * steps);
        let sd = dt.sqrt();
        for _ in 0..steps {
            stream.next_normals(&mut normals);
            increments.extend(normals.iter().map(|&z| sd * T::lit(z)));
        }
        Self {
            dt,
            mode_count,
            increments,
        }
    }

    pub fn len(&self) -> usize {
        self.increments.len() / self.mode_count.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn increment(&self, step: usize) -> &[T] {
        &self.increments[step * self.mode_count..(step + 1) * self.mode_count]
    }

    /// Same Brownian motion on a grid twice as coarse (pairs of increments summed).
    pub fn coarsen(&self) -> Result<Self, SolverError> {
        if self.len() % 2 != 0 {
            return Err(SolverError::Config("coarsening needs an even step count".into()));
        }
        let j = self.mode_count;
        let mut increments = Vec::with_capacity(self.increments.len() / 2);
        for pair in self.increments.chunks(2 * j) {
            increments.extend((0..j).map(|k| pair[k] + pair[j + k]));
        }
        Ok(Self {
            dt: self.dt + self.dt,
            mode_count: j,
            increments,
        })
    }
}

/// Coefficients of `Z` at each node of the path's time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionSeries<T> {
    pub times: Vec<T>,
    pub modes: Vec<Vec<T>>,
}

/// `Ẑ(t_{m+1}) = e^{-α_k dt_m} (Ẑ(t_m) + ĝ_m)`: the convolution sum evaluated recursively.
pub fn stochastic_convolution_direct<T: Real>(
    path: &NoisePath<T>,
    basis: &SpectralBasis<T>,
) -> Result<ConvolutionSeries<T>, SolverError> {
    check_modes(path, basis)?;
    let j = basis.mode_count();
    let mut z = vec![T::zero(); j];
    let mut modes = Vec::with_capacity(path.len() + 1);
    modes.push(z.clone());
    for m in 0..path.len() {
        let dt = path.steps[m];
        for ((zk, &g), &a) in z.iter_mut().zip(path.increment(m)).zip(basis.eigenvalues()) {
            *zk = (*zk + g) * (-a * dt).exp();
        }
        modes.push(z.clone());
    }
    Ok(ConvolutionSeries {
        times: path.times(),
        modes,
    })
}

/// Factorized route: `Z_α` at cell midpoints from the singular-kernel sum, then
/// `Z(t_n) = (sin πα / π) Σ_i W_{n,i} S(t_n - m_i) Z_α(m_i)` with the weights
/// `W_{n,i} = ∫_{t_i}^{t_{i+1}} (t_n - s)^{α-1} ds` integrated exactly.
pub fn stochastic_convolution_factorized<T: Real>(
    path: &NoisePath<T>,
    basis: &SpectralBasis<T>,
    alpha: T,
    eta: T,
) -> Result<ConvolutionSeries<T>, SolverError> {
    check_modes(path, basis)?;
    let limit = (T::one() - eta) / T::lit(2.0);
    if !(alpha > T::zero() && alpha < limit) {
        return Err(SolverError::FactorizationExponent {
            alpha: alpha.as_f64(),
            limit: limit.as_f64(),
        });
    }
    let n = path.len();
    let j = basis.mode_count();
    let eig = basis.eigenvalues();
    let t = path.times();
    let mid: Vec<T> = (0..n).map(|i| (t[i] + t[i + 1]) / T::lit(2.0)).collect();

    let mut z_alpha = vec![T::zero(); n * j];
    for i in 0..n {
        let row = &mut z_alpha[i * j..(i + 1) * j];
        for src in 0..=i {
            let lag = mid[i] - t[src];
            let w = lag.powf(-alpha);
            for ((r, &g), &a) in row.iter_mut().zip(path.increment(src)).zip(eig) {
                *r = *r + w * (-a * lag).exp() * g;
            }
        }
    }

    let prefactor = (T::PI() * alpha).sin() / T::PI();
    let mut modes = Vec::with_capacity(n + 1);
    modes.push(vec![T::zero(); j]);
    for q in 1..=n {
        let mut z = vec![T::zero(); j];
        for i in 0..q {
            let w = ((t[q] - t[i]).powf(alpha) - (t[q] - t[i + 1]).powf(alpha)) / alpha;
            let lag = t[q] - mid[i];
            for ((zk, &za), &a) in z.iter_mut().zip(&z_alpha[i * j..(i + 1) * j]).zip(eig) {
                *zk = *zk + w * (-a * lag).exp() * za;
            }
        }
        z.iter_mut().for_each(|zk| *zk = *zk * prefactor);
        modes.push(z);
    }
    Ok(ConvolutionSeries { times: t, modes })
}

/// Sup over time nodes and grid points of `|Z_a - Z_b|`.
pub fn convolution_discrepancy<T: Real>(
    a: &ConvolutionSeries<T>,
    b: &ConvolutionSeries<T>,
    basis: &SpectralBasis<T>,
) -> Result<T, SolverError> {
    if a.modes.len() != b.modes.len() {
        return Err(SolverError::Config("convolution series lengths differ".into()));
    }
    let transform = basis.transform();
    let mut diff = vec![T::zero(); basis.mode_count()];
    let mut grid = vec![T::zero(); basis.grid_size()];
    let mut worst = T::zero();
    for (x, y) in a.modes.iter().zip(&b.modes) {
        for ((d, &p), &q) in diff.iter_mut().zip(x).zip(y) {
            *d = p - q;
        }
        transform.inverse(&diff, &mut grid);
        worst = worst.max(crate::spectral::sup_norm(&grid));
    }
    Ok(worst)
}

fn check_modes<T: Real>(path: &NoisePath<T>, basis: &SpectralBasis<T>) -> Result<(), SolverError> {
    if path.mode_count() != basis.mode_count() {
        return Err(SolverError::Config(format!(
            "path has {} modes, basis has {}",
            path.mode_count(),
            basis.mode_count()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn frozen_sigma(s: f64, x: f64) -> f64 {
        1.0 + 0.5 * (20.0 * s).sin() * x * (1.0 - x)
    }

    #[test]
    fn zero_path_gives_zero() {
        let basis = SpectralBasis::<f64>::new(4, 16).unwrap();
        let mut path = NoisePath::empty(4);
        for j in 0..10 {
            path.push(j as f64 * 0.01, 0.01, &[0.0; 4]);
        }
        let d = stochastic_convolution_direct(&path, &basis).unwrap();
        let f = stochastic_convolution_factorized(&path, &basis, 0.3, 0.0).unwrap();
        assert!(d.modes.iter().flatten().all(|&z| z == 0.0));
        assert!(f.modes.iter().flatten().all(|&z| z == 0.0));
    }

    #[test]
    fn direct_sum_matches_explicit_kernel_sum() {
        let basis = SpectralBasis::<f64>::new(4, 16).unwrap();
        let noise = NoiseSpectrum::trace_class(4);
        let bm = BrownianPath::sample(4, 50, 0.002, &mut NoiseStream::new(3));
        let path = NoisePath::from_brownian(&basis, &noise, &bm, frozen_sigma).unwrap();
        let z = stochastic_convolution_direct(&path, &basis).unwrap();
        let t = path.times();
        let n = path.len();
        for k in 0..4 {
            let a = basis.eigenvalues()[k];
            let explicit: f64 = (0..n)
                .map(|j| (-a * (t[n] - t[j])).exp() * path.increment(j)[k])
                .sum();
            assert_abs_diff_eq!(z.modes[n][k], explicit, epsilon = 1e-12);
        }
    }

    #[test]
    fn exponent_range_is_enforced() {
        let basis = SpectralBasis::<f64>::new(4, 16).unwrap();
        let path = NoisePath::empty(4);
        for alpha in [0.0, 0.5, 0.7] {
            assert!(stochastic_convolution_factorized(&path, &basis, alpha, 0.0).is_err());
        }
        // eta shrinks the admissible range
        assert!(stochastic_convolution_factorized(&path, &basis, 0.3, 0.5).is_err());
        assert!(stochastic_convolution_factorized(&path, &basis, 0.2, 0.5).is_ok());
    }

    #[test]
    fn routes_agree_and_refinement_helps() {
        let basis = SpectralBasis::<f64>::new(8, 32).unwrap();
        let noise = NoiseSpectrum::trace_class(8);
        let fine = BrownianPath::sample(8, 400, 0.1 / 400.0, &mut NoiseStream::new(11));
        let coarse = fine.coarsen().unwrap();
        let gap = |bm: &BrownianPath<f64>| {
            let path = NoisePath::from_brownian(&basis, &noise, bm, frozen_sigma).unwrap();
            let d = stochastic_convolution_direct(&path, &basis).unwrap();
            let f = stochastic_convolution_factorized(&path, &basis, 0.3, 0.0).unwrap();
            convolution_discrepancy(&d, &f, &basis).unwrap()
        };
        let (gc, gf) = (gap(&coarse), gap(&fine));
        assert!(gc < 5e-2, "coarse gap {gc}");
        assert!(gf < gc, "fine {gf} vs coarse {gc}");
    }

    #[test]
    fn coarsening_preserves_endpoint() {
        let bm = BrownianPath::<f64>::sample(3, 8, 0.01, &mut NoiseStream::new(1));
        let c = bm.coarsen().unwrap();
        assert_eq!(c.len(), 4);
        for k in 0..3 {
            let total_f: f64 = (0..8).map(|s| bm.increment(s)[k]).sum();
            let total_c: f64 = (0..4).map(|s| c.increment(s)[k]).sum();
            assert_abs_diff_eq!(total_f, total_c, epsilon = 1e-14);
        }
        assert!(BrownianPath::<f64>::sample(1, 3, 0.1, &mut NoiseStream::new(1))
            .coarsen()
            .is_err());
    }
}
