//! Dirichlet eigenstructure of the Laplacian on the unit interval.
//!
//! The operator is `Δ` on `(0, 1)` with homogeneous Dirichlet conditions, whose
//! eigenpairs are `α_k = (kπ)²` and `e_k(x) = √2 sin(kπx)`. Fields live on `M`
//! equispaced interior points `x_i = i / (M + 1)` and are represented by their
//! first `J` sine coefficients. The heat semigroup acts diagonally on those
//! coefficients.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("mode count must be at least 1")]
    NoModes,
    #[error("grid of {grid_size} points aliases {mode_count} modes (need at least {})", 2 * .mode_count)]
    Aliasing { mode_count: usize, grid_size: usize },
    #[error("expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("kernel requires positive time, got {0}")]
    NonPositiveKernelTime(f64),
}

/// Transform between grid values and modal coefficients.
///
/// The direct implementation is a dense sine sum, adequate for a few hundred
/// modes. A fast sine transform can be slotted in behind this trait.
pub trait ModalTransform<T: Real>: Send + Sync {
    /// Grid values to the first `J` coefficients `⟨v, e_k⟩`.
    fn forward(&self, values: &[T], modes: &mut [T]);
    /// Coefficients to grid values `Σ_k c_k e_k(x_i)`.
    fn inverse(&self, modes: &[T], values: &mut [T]);
}

/// Dense sine-sum transform backed by a precomputed `J × M` table.
#[derive(Debug, Clone)]
pub struct DirectSineTransform<T> {
    mode_count: usize,
    grid_size: usize,
    spacing: T,
    // row k holds e_{k+1}(x_i)
    table: Vec<T>,
}

impl<T: Real> DirectSineTransform<T> {
    pub fn new(mode_count: usize, grid_size: usize) -> Self {
        let spacing = T::one() / T::from_count(grid_size + 1);
        let sqrt2 = T::SQRT_2();
        let mut table = Vec::with_capacity(mode_count * grid_size);
        for k in 1..=mode_count {
            // Reduce k*i modulo 2(M+1) before scaling so large products stay exact.
            let period = 2 * (grid_size + 1);
            for i in 1..=grid_size {
                let phase = (k * i) % period;
                let angle = T::PI() * T::from_count(phase) * spacing;
                table.push(sqrt2 * angle.sin());
            }
        }
        Self {
            mode_count,
            grid_size,
            spacing,
            table,
        }
    }

    #[inline]
    fn row(&self, k: usize) -> &[T] {
        &self.table[k * self.grid_size..(k + 1) * self.grid_size]
    }
}

impl<T: Real> ModalTransform<T> for DirectSineTransform<T> {
    fn forward(&self, values: &[T], modes: &mut [T]) {
        debug_assert_eq!(values.len(), self.grid_size);
        debug_assert_eq!(modes.len(), self.mode_count);
        for (k, out) in modes.iter_mut().enumerate() {
            let acc = self
                .row(k)
                .iter()
                .zip(values)
                .fold(T::zero(), |acc, (&e, &v)| acc + e * v);
            *out = acc * self.spacing;
        }
    }

    fn inverse(&self, modes: &[T], values: &mut [T]) {
        debug_assert_eq!(values.len(), self.grid_size);
        debug_assert_eq!(modes.len(), self.mode_count);
        values.iter_mut().for_each(|v| *v = T::zero());
        for (k, &c) in modes.iter().enumerate() {
            if c == T::zero() {
                continue;
            }
            for (v, &e) in values.iter_mut().zip(self.row(k)) {
                *v = *v + c * e;
            }
        }
    }
}

/// Eigenpairs of the Dirichlet Laplacian plus the grid they are sampled on.
#[derive(Debug, Clone)]
pub struct SpectralBasis<T> {
    eigenvalues: Vec<T>,
    grid: Vec<T>,
    transform: DirectSineTransform<T>,
}

impl<T: Real> SpectralBasis<T> {
    /// Builds `J` modes on `M` interior points. Requires `M ≥ 2J`.
    pub fn new(mode_count: usize, grid_size: usize) -> Result<Self, SpectralError> {
        if mode_count == 0 {
            return Err(SpectralError::NoModes);
        }
        if grid_size < 2 * mode_count {
            return Err(SpectralError::Aliasing {
                mode_count,
                grid_size,
            });
        }
        let eigenvalues = (1..=mode_count)
            .map(|k| {
                let kp = T::from_count(k) * T::PI();
                kp * kp
            })
            .collect();
        let spacing = T::one() / T::from_count(grid_size + 1);
        let grid = (1..=grid_size).map(|i| T::from_count(i) * spacing).collect();
        Ok(Self {
            eigenvalues,
            grid,
            transform: DirectSineTransform::new(mode_count, grid_size),
        })
    }

    pub fn mode_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn grid_size(&self) -> usize {
        self.grid.len()
    }

    /// `α_k` for `k = 1..=J`, stored zero-based.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    /// Grid spacing `1 / (M + 1)`.
    pub fn spacing(&self) -> T {
        self.transform.spacing
    }

    pub fn transform(&self) -> &dyn ModalTransform<T> {
        &self.transform
    }

    /// `e_k(x)` for 1-based `k`; exactly zero on and outside the boundary.
    pub fn eigenfunction(&self, k: usize, x: T) -> T {
        if x <= T::zero() || x >= T::one() {
            return T::zero();
        }
        T::SQRT_2() * (T::from_count(k) * T::PI() * x).sin()
    }

    /// Sup-norm of `e_k` on `[0, 1]`.
    pub fn eigenfunction_sup(&self, _k: usize) -> T {
        T::SQRT_2()
    }

    /// Composite trapezoid integral over `[0, 1]` of grid values that vanish at both ends.
    pub fn integrate(&self, values: &[T]) -> T {
        values.iter().fold(T::zero(), |a, &v| a + v) * self.spacing()
    }

    fn check_len(&self, values: &[T], expected: usize) -> Result<(), SpectralError> {
        if values.len() != expected {
            return Err(SpectralError::ShapeMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(())
    }

    pub fn to_modes(&self, values: &[T]) -> Result<Vec<T>, SpectralError> {
        self.check_len(values, self.grid_size())?;
        let mut modes = vec![T::zero(); self.mode_count()];
        self.transform.forward(values, &mut modes);
        Ok(modes)
    }

    pub fn to_grid(&self, modes: &[T]) -> Result<Vec<T>, SpectralError> {
        self.check_len(modes, self.mode_count())?;
        let mut values = vec![T::zero(); self.grid_size()];
        self.transform.inverse(modes, &mut values);
        Ok(values)
    }

    /// Projection onto the span of the first `J` modes.
    pub fn project(&self, values: &[T]) -> Result<Vec<T>, SpectralError> {
        let modes = self.to_modes(values)?;
        self.to_grid(&modes)
    }

    /// Multiplies coefficients in place by `e^{-α_k t}`.
    pub fn decay_modes(&self, modes: &mut [T], t: T) {
        for (c, &a) in modes.iter_mut().zip(&self.eigenvalues) {
            *c = *c * (-a * t).exp();
        }
    }

    /// `S(t) v = Σ_k e^{-α_k t} ⟨v, e_k⟩ e_k` on the grid.
    pub fn apply_semigroup(&self, values: &[T], t: T) -> Result<Vec<T>, SpectralError> {
        if t < T::zero() {
            return Err(SpectralError::NegativeTime(t.as_f64()));
        }
        let mut modes = self.to_modes(values)?;
        self.decay_modes(&mut modes, t);
        self.to_grid(&modes)
    }

    /// Truncated heat kernel `K(t, x, y) = Σ_{k ≤ J} e^{-α_k t} e_k(x) e_k(y)`.
    pub fn kernel_value(&self, t: T, x: T, y: T) -> Result<T, SpectralError> {
        if t <= T::zero() {
            return Err(SpectralError::NonPositiveKernelTime(t.as_f64()));
        }
        Ok(self
            .eigenvalues
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (idx, &a)| {
                let k = idx + 1;
                acc + (-a * t).exp() * self.eigenfunction(k, x) * self.eigenfunction(k, y)
            }))
    }
}

/// Sup-norm of a slice.
pub fn sup_norm<T: Real>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_band_limited(basis: &SpectralBasis<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let modes: Vec<f64> = (0..basis.mode_count())
            .map(|k| rng.random_range(-1.0..1.0) / (1.0 + k as f64))
            .collect();
        basis.to_grid(&modes).unwrap()
    }

    // Composite Simpson on [0, 1] with n (even) panels; independent of the grid quadrature.
    fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn first_mode_is_classical() {
        let basis = SpectralBasis::<f64>::new(1, 64).unwrap();
        assert_abs_diff_eq!(basis.eigenvalues()[0], PI * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(basis.eigenfunction(1, 0.5), 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn third_eigenvalue() {
        let basis = SpectralBasis::<f64>::new(3, 64).unwrap();
        assert_abs_diff_eq!(basis.eigenvalues()[2], 9.0 * PI * PI, epsilon = 1e-10);
    }

    #[test]
    fn rejects_aliasing_grid() {
        assert_eq!(
            SpectralBasis::<f64>::new(8, 8).unwrap_err(),
            SpectralError::Aliasing {
                mode_count: 8,
                grid_size: 8
            }
        );
        assert_eq!(
            SpectralBasis::<f64>::new(0, 8).unwrap_err(),
            SpectralError::NoModes
        );
    }

    #[test]
    fn eigenvalues_nondecreasing_and_boundary_zero() {
        let basis = SpectralBasis::<f64>::new(32, 64).unwrap();
        assert!(basis.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        for k in 1..=32 {
            assert_eq!(basis.eigenfunction(k, 0.0), 0.0);
            assert_eq!(basis.eigenfunction(k, 1.0), 0.0);
        }
    }

    #[test]
    fn discrete_normalization() {
        let basis = SpectralBasis::<f64>::new(16, 40).unwrap();
        for k in 1..=16 {
            let sq: Vec<f64> = basis
                .grid()
                .iter()
                .map(|&x| basis.eigenfunction(k, x).powi(2))
                .collect();
            assert_abs_diff_eq!(basis.integrate(&sq), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn eigenfunction_decays_exactly() {
        let basis = SpectralBasis::<f64>::new(8, 64).unwrap();
        let e1: Vec<f64> = basis.grid().iter().map(|&x| basis.eigenfunction(1, x)).collect();
        for &t in &[0.0, 0.01, 0.3] {
            let out = basis.apply_semigroup(&e1, t).unwrap();
            let factor = (-PI * PI * t).exp();
            for (o, e) in out.iter().zip(&e1) {
                assert_abs_diff_eq!(*o, factor * e, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn zero_time_is_identity_on_band_limited() {
        let basis = SpectralBasis::<f64>::new(12, 50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_band_limited(&basis, &mut rng);
        let out = basis.apply_semigroup(&v, 0.0).unwrap();
        for (a, b) in out.iter().zip(&v) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn sup_norm_contraction() {
        let basis = SpectralBasis::<f64>::new(16, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let v = random_band_limited(&basis, &mut rng);
            let t = rng.random_range(0.0..0.5);
            let out = basis.apply_semigroup(&v, t).unwrap();
            assert!(sup_norm(&out) <= sup_norm(&v) + 1e-12);
        }
    }

    #[test]
    fn semigroup_law() {
        let basis = SpectralBasis::<f64>::new(16, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_band_limited(&basis, &mut rng);
        let two_step = basis
            .apply_semigroup(&basis.apply_semigroup(&v, 0.013).unwrap(), 0.021)
            .unwrap();
        let one_step = basis.apply_semigroup(&v, 0.034).unwrap();
        for (a, b) in two_step.iter().zip(&one_step) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn kernel_symmetry_and_positive_time() {
        let basis = SpectralBasis::<f64>::new(20, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let (x, y) = (rng.random::<f64>(), rng.random::<f64>());
            let a = basis.kernel_value(0.05, x, y).unwrap();
            let b = basis.kernel_value(0.05, y, x).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert!(basis.kernel_value(0.0, 0.2, 0.3).is_err());
        assert!(basis.kernel_value(-1.0, 0.2, 0.3).is_err());
    }

    #[test]
    fn kernel_is_sub_markov() {
        let basis = SpectralBasis::<f64>::new(64, 128).unwrap();
        for &t in &[0.01, 0.1, 1.0] {
            for &x in &[0.05, 0.3, 0.5, 0.77] {
                let mass = simpson(|y| basis.kernel_value(t, x, y).unwrap(), 4000);
                assert!(mass <= 1.0 + 1e-6, "t={t} x={x} mass={mass}");
                assert!(mass > 0.0);
            }
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        let basis = SpectralBasis::<f64>::new(12, 32).unwrap();
        let (t, s) = (0.02, 0.05);
        for &(x, y) in &[(0.2, 0.7), (0.5, 0.5), (0.1, 0.35)] {
            let lhs = simpson(
                |z| basis.kernel_value(t, x, z).unwrap() * basis.kernel_value(s, z, y).unwrap(),
                4000,
            );
            let rhs = basis.kernel_value(t + s, x, y).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-6);
        }
    }

    #[test]
    fn shape_and_time_errors() {
        let basis = SpectralBasis::<f64>::new(4, 16).unwrap();
        assert!(matches!(
            basis.apply_semigroup(&[0.0; 3], 0.1),
            Err(SpectralError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            basis.apply_semigroup(&[0.0; 16], -0.1),
            Err(SpectralError::NegativeTime(_))
        ));
    }

    #[test]
    fn single_precision_basis() {
        let basis = SpectralBasis::<f32>::new(4, 16).unwrap();
        let e2: Vec<f32> = basis.grid().iter().map(|&x| basis.eigenfunction(2, x)).collect();
        let out = basis.apply_semigroup(&e2, 0.01).unwrap();
        let factor = (-4.0 * std::f32::consts::PI.powi(2) * 0.01).exp();
        for (o, e) in out.iter().zip(&e2) {
            assert!((o - factor * e).abs() < 1e-5);
        }
    }
}
