//! Gaussian noise diagonal in the eigenbasis.
//!
//! Formally `Ẇ(t, x) = Σ_j λ_j e_j(x) Ḃ_j(t)` with independent Brownian motions
//! `B_j`. The pair of exponents `(θ, ρ)` measures how rough the noise is against
//! the smoothing of the operator; the derived roughness `η = θ(ρ − 2)/ρ` must stay
//! below one for solutions to be function valued.

use num_traits::Num;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::spectral::SpectralBasis;

/// Theta used by the white-noise preset; anything above one half is admissible.
pub const WHITE_NOISE_THETA: f64 = 0.51;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum NoiseError {
    #[error("theta must be positive")]
    NonPositiveTheta,
    #[error("rho must be at least 2")]
    RhoBelowTwo,
    #[error("roughness eta is not below 1; solutions would not be function valued")]
    TooRough,
    #[error("noise coefficients must be nonnegative (index {0})")]
    NegativeCoefficient(usize),
    #[error("time step must be positive")]
    NonPositiveStep,
    #[error("spectrum has {spectrum} modes but basis has {basis}")]
    ModeMismatch { spectrum: usize, basis: usize },
}

/// Integrability exponent `ρ ∈ [2, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Rho<T> {
    Finite(T),
    Infinite,
}

/// Roughness `η = θ(ρ − 2)/ρ`, or `θ` when `ρ = ∞`.
///
/// Generic over any ordered field so the formula can be evaluated exactly on
/// rationals as well as on floats.
pub fn compute_eta<T>(theta: T, rho: Rho<T>) -> Result<T, NoiseError>
where
    T: Num + PartialOrd + Copy,
{
    let two = T::one() + T::one();
    if theta <= T::zero() {
        return Err(NoiseError::NonPositiveTheta);
    }
    let eta = match rho {
        Rho::Infinite => theta,
        Rho::Finite(r) => {
            if r < two {
                return Err(NoiseError::RhoBelowTwo);
            }
            theta * (r - two) / r
        }
    };
    if eta >= T::one() {
        return Err(NoiseError::TooRough);
    }
    Ok(eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoisePreset {
    TraceClass,
    White,
    Custom,
}

/// Noise coefficients `λ_j` with their roughness exponents.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpectrum<T> {
    coefficients: Vec<T>,
    theta: T,
    rho: Rho<T>,
    eta: T,
    preset: NoisePreset,
}

impl<T: Real> NoiseSpectrum<T> {
    pub fn new(
        coefficients: Vec<T>,
        theta: T,
        rho: Rho<T>,
        preset: NoisePreset,
    ) -> Result<Self, NoiseError> {
        if let Some(idx) = coefficients.iter().position(|&c| !(c >= T::zero())) {
            return Err(NoiseError::NegativeCoefficient(idx));
        }
        let eta = compute_eta(theta, rho)?;
        Ok(Self {
            coefficients,
            theta,
            rho,
            eta,
            preset,
        })
    }

    /// `λ_j = 1/j`, `ρ = 2`, hence `η = 0`.
    pub fn trace_class(modes: usize) -> Self {
        let coefficients = (1..=modes).map(|j| T::one() / T::from_count(j)).collect();
        Self::new(coefficients, T::one(), Rho::Finite(T::lit(2.0)), NoisePreset::TraceClass)
            .expect("trace-class preset is valid")
    }

    /// `λ_j = 1`, `ρ = ∞`, `η = θ`.
    pub fn white(modes: usize, theta: T) -> Result<Self, NoiseError> {
        Self::new(vec![T::one(); modes], theta, Rho::Infinite, NoisePreset::White)
    }

    /// All coefficients zero: the deterministic equation.
    pub fn silent(modes: usize) -> Self {
        Self::new(
            vec![T::zero(); modes],
            T::one(),
            Rho::Finite(T::lit(2.0)),
            NoisePreset::Custom,
        )
        .expect("zero spectrum is valid")
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn mode_count(&self) -> usize {
        self.coefficients.len()
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn rho(&self) -> Rho<T> {
        self.rho
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn preset(&self) -> NoisePreset {
        self.preset
    }

    pub fn is_silent(&self) -> bool {
        self.coefficients.iter().all(|&c| c == T::zero())
    }
}

/// Truncated series behind the two summability requirements, with a
/// convergence heuristic for each.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumDiagnostics<T> {
    /// `(Σ λ_j^ρ |e_j|_∞²)^{2/ρ}`, or `sup_j λ_j` when `ρ = ∞`.
    pub noise_sum: T,
    /// Ratio of the last two dyadic blocks of the noise series.
    pub noise_ratio: Option<T>,
    pub noise_converges: bool,
    /// `Σ α_k^{-θ} |e_k|_∞²`.
    pub operator_sum: T,
    pub operator_ratio: Option<T>,
    pub operator_converges: bool,
    pub warnings: Vec<String>,
}

impl<T> SpectrumDiagnostics<T> {
    pub fn passes(&self) -> bool {
        self.noise_converges && self.operator_converges
    }
}

/// Sum of `terms[lo..hi]` for 1-based block `(lo, hi]`.
fn block_sum<T: Real>(terms: &[T], lo: usize, hi: usize) -> T {
    terms[lo..hi].iter().fold(T::zero(), |a, &t| a + t)
}

/// Ratio `B_m / B_{m-1}` of the two last complete dyadic blocks
/// `B_m = Σ_{2^{m-1} < k ≤ 2^m} a_k`. A ratio below one indicates geometric decay
/// of the blocks, i.e. a convergent series for power-law terms.
pub fn dyadic_block_ratio<T: Real>(terms: &[T]) -> Option<T> {
    let n = terms.len();
    if n < 4 {
        return None;
    }
    let top = 1usize << (usize::BITS - 1 - n.leading_zeros());
    let last = block_sum(terms, top / 2, top);
    let prev = block_sum(terms, top / 4, top / 2);
    if prev == T::zero() {
        return if last == T::zero() { Some(T::zero()) } else { Some(T::infinity()) };
    }
    Some(last / prev)
}

fn verdict<T: Real>(ratio: Option<T>, name: &str, warnings: &mut Vec<String>) -> bool {
    match ratio {
        Some(r) => {
            let ok = r < T::one();
            if !ok {
                warnings.push(format!("{name} series appears divergent (dyadic ratio {r})"));
            }
            ok
        }
        None => {
            warnings.push(format!("{name} series too short for a convergence estimate"));
            true
        }
    }
}

/// Summability diagnostics for a spectrum against a basis. Never fails; problems
/// are reported through the flags and warnings.
pub fn validate_spectrum<T: Real>(
    basis: &SpectralBasis<T>,
    spec: &NoiseSpectrum<T>,
) -> SpectrumDiagnostics<T> {
    let mut warnings = Vec::new();
    if basis.mode_count() != spec.mode_count() {
        warnings.push(format!(
            "spectrum has {} modes, basis has {}",
            spec.mode_count(),
            basis.mode_count()
        ));
    }
    let modes = basis.mode_count().min(spec.mode_count());
    let sup_sq = |k: usize| basis.eigenfunction_sup(k).powi(2);

    let (noise_sum, noise_ratio, noise_converges) = match spec.rho() {
        Rho::Infinite => {
            let sup = spec.coefficients()[..modes]
                .iter()
                .fold(T::zero(), |m, &c| m.max(c));
            (sup, None, sup.is_finite())
        }
        Rho::Finite(r) => {
            let terms: Vec<T> = (0..modes)
                .map(|j| spec.coefficients()[j].powf(r) * sup_sq(j + 1))
                .collect();
            let total = terms.iter().fold(T::zero(), |a, &t| a + t);
            let ratio = dyadic_block_ratio(&terms);
            let ok = verdict(ratio, "noise", &mut warnings);
            (total.powf(T::lit(2.0) / r), ratio, ok)
        }
    };

    let op_terms: Vec<T> = basis.eigenvalues()[..modes]
        .iter()
        .enumerate()
        .map(|(idx, &a)| a.powf(-spec.theta()) * sup_sq(idx + 1))
        .collect();
    let operator_sum = op_terms.iter().fold(T::zero(), |a, &t| a + t);
    let operator_ratio = dyadic_block_ratio(&op_terms);
    let operator_converges = verdict(operator_ratio, "operator", &mut warnings);

    SpectrumDiagnostics {
        noise_sum,
        noise_ratio,
        noise_converges,
        operator_sum,
        operator_ratio,
        operator_converges,
        warnings,
    }
}

/// Counter-addressed source of standard normals.
///
/// Each draw is keyed by `(seed, counter)`: the `counter`-th call always yields
/// the same numbers for a given seed, and within one call the `j`-th normal does
/// not depend on how many modes are requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
    counter: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index of the next draw.
    pub fn position(&self) -> u64 {
        self.counter
    }

    /// Fills `out` with the standard normals at `index` without moving the stream.
    pub fn normals_at(&self, index: u64, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        for z in out.iter_mut() {
            *z = StandardNormal.sample(&mut rng);
        }
    }

    /// Fills `out` with the next batch of standard normals.
    pub fn next_normals(&mut self, out: &mut [f64]) {
        self.normals_at(self.counter, out);
        self.counter += 1;
    }
}

/// Modal increments `λ_j ΔB_j` over a step of length `dt`, written into `out`.
pub fn fill_increment<T: Real>(
    spec: &NoiseSpectrum<T>,
    dt: T,
    stream: &mut NoiseStream,
    scratch: &mut Vec<f64>,
    out: &mut [T],
) {
    let n = spec.mode_count();
    scratch.resize(n, 0.0);
    stream.next_normals(scratch);
    let sd = dt.sqrt();
    for ((o, &z), &lambda) in out.iter_mut().zip(scratch.iter()).zip(spec.coefficients()) {
        *o = lambda * sd * T::lit(z);
    }
}

/// Independent Gaussian modal increments with standard deviation `λ_j √dt`.
pub fn sample_increment<T: Real>(
    spec: &NoiseSpectrum<T>,
    dt: T,
    stream: &mut NoiseStream,
) -> Result<Vec<T>, NoiseError> {
    if !(dt > T::zero()) {
        return Err(NoiseError::NonPositiveStep);
    }
    let mut out = vec![T::zero(); spec.mode_count()];
    let mut scratch = Vec::new();
    fill_increment(spec, dt, stream, &mut scratch, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_rational::Ratio;
    use proptest::prelude::*;

    #[test]
    fn eta_examples() {
        assert_eq!(compute_eta(0.7, Rho::Finite(2.0)).unwrap(), 0.0);
        assert_eq!(compute_eta(0.6, Rho::Infinite).unwrap(), 0.6);
        assert_eq!(compute_eta(1.0, Rho::Finite(4.0)).unwrap(), 0.5);
    }

    #[test]
    fn eta_exact_on_rationals() {
        let r = |n: i64, d: i64| Ratio::new(n, d);
        assert_eq!(compute_eta(r(3, 4), Rho::Finite(r(6, 1))).unwrap(), r(1, 2));
        assert!(matches!(
            compute_eta(r(3, 2), Rho::Finite(r(6, 1))),
            Err(NoiseError::TooRough)
        ));
    }

    #[test]
    fn eta_rejections() {
        assert_eq!(compute_eta(0.0, Rho::Infinite), Err(NoiseError::NonPositiveTheta));
        assert_eq!(compute_eta(0.5, Rho::Finite(1.5)), Err(NoiseError::RhoBelowTwo));
        assert!(matches!(
            compute_eta(1.0, Rho::Infinite),
            Err(NoiseError::TooRough)
        ));
        assert!(NoiseSpectrum::<f64>::white(8, 1.2).is_err());
        assert!(NoiseSpectrum::new(vec![1.0, -0.1], 1.0, Rho::Finite(2.0), NoisePreset::Custom)
            .is_err());
    }

    proptest! {
        #[test]
        fn eta_monotone(theta in 0.01f64..0.99, dtheta in 0.0f64..0.5, rho in 2.0f64..50.0, drho in 0.0f64..50.0) {
            let base = compute_eta(theta, Rho::Finite(rho));
            let more_rho = compute_eta(theta, Rho::Finite(rho + drho));
            if let (Ok(a), Ok(b)) = (base, more_rho) {
                prop_assert!(b >= a);
            }
            if let (Ok(a), Ok(b)) = (base, compute_eta(theta + dtheta, Rho::Finite(rho))) {
                prop_assert!(b >= a);
            }
            if let (Ok(a), Ok(b)) = (base, compute_eta(theta, Rho::Infinite)) {
                prop_assert!(b >= a);
            }
        }
    }

    // Dyadic partial sums of Σ k^{-p}, computed directly: blocks grow for p < 1.
    fn dyadic_blocks(p: f64, levels: u32) -> Vec<f64> {
        (1..=levels)
            .map(|m| {
                let (lo, hi) = (1u64 << (m - 1), 1u64 << m);
                ((lo + 1)..=hi).map(|k| (k as f64).powf(-p)).sum()
            })
            .collect()
    }

    #[test]
    fn white_noise_operator_series() {
        let basis = SpectralBasis::<f64>::new(256, 512).unwrap();
        let converging = validate_spectrum(&basis, &NoiseSpectrum::white(256, 0.6).unwrap());
        assert!(converging.operator_converges);
        assert!(converging.noise_converges);

        let spec = NoiseSpectrum::new(vec![1.0; 256], 0.4, Rho::Infinite, NoisePreset::Custom)
            .unwrap();
        let diverging = validate_spectrum(&basis, &spec);
        assert!(!diverging.operator_converges);
        assert!(!diverging.warnings.is_empty());

        // oracle: raw dyadic blocks of k^{-0.8} grow, of k^{-1.2} shrink
        let grow = dyadic_blocks(0.8, 8);
        assert!(grow.windows(2).skip(2).all(|w| w[1] > w[0]));
        let shrink = dyadic_blocks(1.2, 8);
        assert!(shrink.windows(2).skip(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn trace_class_noise_sum_is_finite() {
        let basis = SpectralBasis::<f64>::new(64, 128).unwrap();
        let spec = NoiseSpectrum::<f64>::trace_class(64);
        assert_eq!(spec.eta(), 0.0);
        let diag = validate_spectrum(&basis, &spec);
        assert!(diag.noise_converges);
        // Σ 2/j² over 64 terms, ρ = 2 so the outer power is 1
        let oracle: f64 = (1..=64).map(|j| 2.0 / (j as f64).powi(2)).sum();
        assert_relative_eq!(diag.noise_sum, oracle, max_relative = 1e-12);
        assert!(oracle < std::f64::consts::PI.powi(2) / 3.0);
    }

    #[test]
    fn silent_spectrum_gives_zero() {
        let spec = NoiseSpectrum::<f64>::silent(5);
        let mut stream = NoiseStream::new(1);
        assert_eq!(sample_increment(&spec, 0.1, &mut stream).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn increments_are_deterministic_and_prefix_stable() {
        let spec = NoiseSpectrum::<f64>::trace_class(6);
        let a = sample_increment(&spec, 0.01, &mut NoiseStream::new(77)).unwrap();
        let b = sample_increment(&spec, 0.01, &mut NoiseStream::new(77)).unwrap();
        assert_eq!(a, b);
        let short = sample_increment(&NoiseSpectrum::<f64>::trace_class(3), 0.01, &mut NoiseStream::new(77))
            .unwrap();
        assert_eq!(&a[..3], &short[..]);
        assert!(sample_increment(&spec, 0.0, &mut NoiseStream::new(1)).is_err());
    }

    #[test]
    fn increment_moments() {
        let spec = NoiseSpectrum::<f64>::trace_class(4);
        let dt = 0.02;
        let n = 100_000;
        let mut stream = NoiseStream::new(2024);
        let mut sum = [0.0; 4];
        let mut sq = [0.0; 4];
        for _ in 0..n {
            let inc = sample_increment(&spec, dt, &mut stream).unwrap();
            for j in 0..4 {
                sum[j] += inc[j];
                sq[j] += inc[j] * inc[j];
            }
        }
        for j in 0..4 {
            let lambda = spec.coefficients()[j];
            let var = lambda * lambda * dt;
            let mean = sum[j] / n as f64;
            let se = (var / n as f64).sqrt();
            assert!(mean.abs() < 4.0 * se, "mode {j}: mean {mean} se {se}");
            let sample_var = sq[j] / n as f64 - mean * mean;
            assert!((sample_var / var - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn variance_over_horizon_independent_of_step_count() {
        let spec = NoiseSpectrum::<f64>::white(2, 0.6).unwrap();
        let horizon = 0.5;
        let reps = 20_000;
        for steps in [1usize, 10, 50] {
            let dt = horizon / steps as f64;
            let mut stream = NoiseStream::new(steps as u64);
            let mut sq = 0.0;
            for _ in 0..reps {
                let mut total = 0.0;
                for _ in 0..steps {
                    total += sample_increment(&spec, dt, &mut stream).unwrap()[0];
                }
                sq += total * total;
            }
            let var = sq / reps as f64;
            assert!((var / horizon - 1.0).abs() < 0.05, "steps {steps}: var {var}");
        }
    }
}
