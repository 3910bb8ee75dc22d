//! Scalar diffusion `dX = X^{-β} dt + s X^{-γ} dB` on `(ε, b)`: exit probabilities
//! through the scale function and through Euler–Maruyama.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{integrate, QuadratureError};
use crate::scalar::Real;
use crate::solver::adaptive_step;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    #[error("need beta >= 0 and gamma >= 0")]
    NegativeExponent,
    #[error("need 0 < lower < x0 < upper (got {lower}, {x0}, {upper})")]
    BadInterval { lower: f64, x0: f64, upper: f64 },
    #[error("noise scale must be nonnegative")]
    NegativeNoise,
    #[error("at least 100 trials are required (got {0})")]
    TooFewTrials(usize),
    #[error("invalid Monte Carlo settings: {0}")]
    Settings(&'static str),
    #[error("scale integral over [{from}, {to}] failed: {source}")]
    Quadrature {
        from: f64,
        to: f64,
        #[source]
        source: QuadratureError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeProblem<T> {
    pub beta: T,
    pub gamma: T,
    pub x0: T,
    pub lower: T,
    pub upper: T,
    /// Multiplier `s` on the noise; zero gives the deterministic flow.
    pub noise_scale: T,
}

impl<T: Real> SdeProblem<T> {
    pub fn new(beta: T, gamma: T, x0: T, lower: T) -> Result<Self, SdeError> {
        let p = Self {
            beta,
            gamma,
            x0,
            lower,
            upper: T::one(),
            noise_scale: T::one(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SdeError> {
        if !(self.beta >= T::zero() && self.gamma >= T::zero()) {
            return Err(SdeError::NegativeExponent);
        }
        if !(self.noise_scale >= T::zero()) {
            return Err(SdeError::NegativeNoise);
        }
        if !(T::zero() < self.lower && self.lower < self.x0 && self.x0 < self.upper)
            || !self.upper.is_finite()
        {
            return Err(SdeError::BadInterval {
                lower: self.lower.as_f64(),
                x0: self.x0.as_f64(),
                upper: self.upper.as_f64(),
            });
        }
        Ok(())
    }

    /// `log s'(y) = -(2/s²) ∫_{x0}^{y} z^{2γ-β} dz`.
    fn log_scale_density(&self, y: T) -> T {
        let p1 = T::lit(2.0) * self.gamma - self.beta + T::one();
        let primitive = if p1.abs() < T::lit(1e-12) {
            (y / self.x0).ln()
        } else {
            (y.powf(p1) - self.x0.powf(p1)) / p1
        };
        -T::lit(2.0) * primitive / (self.noise_scale * self.noise_scale)
    }

    /// `L(a + t) - L(a)` without cancellation between two large values.
    fn log_density_increment(&self, a: T, t: T) -> T {
        let p1 = T::lit(2.0) * self.gamma - self.beta + T::one();
        let r = (t / a).ln_1p();
        let primitive = if p1.abs() < T::lit(1e-12) {
            r
        } else {
            a.powf(p1) * (p1 * r).exp_m1() / p1
        };
        -T::lit(2.0) * primitive / (self.noise_scale * self.noise_scale)
    }

    fn log_scale_slope(&self, y: T) -> T {
        -T::lit(2.0) * y.powf(T::lit(2.0) * self.gamma - self.beta) / (self.noise_scale * self.noise_scale)
    }
}

const QUAD_REL_TOL: f64 = 1e-10;
const QUAD_MAX_INTERVALS: usize = 2000;

/// `log ∫_a^b s'(y) dy` for the decreasing density `s'`, computed relative to
/// its peak at `a` with the integration variable `t = y - a`.
///
/// The range is cut at `h·2^k` with `h = 1/|L'(a)|`, the decay length at the
/// peak, and at `a(2^k - 1)`, so the quadrature sees the mass however sharply it
/// sits at `a`.
fn log_integral<T: Real>(problem: &SdeProblem<T>, a: T, b: T) -> Result<T, SdeError> {
    let len = b - a;
    let mut cuts = vec![T::zero(), len];
    let mut h = problem.log_scale_slope(a).abs().recip();
    while h < len {
        cuts.push(h);
        h = h + h;
    }
    let mut c = a;
    while c < len {
        cuts.push(c);
        c = c + c;
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    cuts.dedup();
    let mut total = T::zero();
    for w in cuts.windows(2) {
        // later pieces only need to be accurate relative to what has accumulated
        let abs_tol = total * T::lit(QUAD_REL_TOL) * T::lit(0.1);
        let q = integrate(
            |t| problem.log_density_increment(a, t).exp(),
            w[0],
            w[1],
            abs_tol,
            T::lit(QUAD_REL_TOL),
            QUAD_MAX_INTERVALS,
        )
        .map_err(|source| SdeError::Quadrature {
            from: (a + w[0]).as_f64(),
            to: (a + w[1]).as_f64(),
            source,
        })?;
        total = total + q.value;
    }
    if !(total > T::zero()) {
        return Err(SdeError::Quadrature {
            from: a.as_f64(),
            to: b.as_f64(),
            source: QuadratureError {
                value: total.as_f64(),
                error: f64::NAN,
                intervals: cuts.len() - 1,
            },
        });
    }
    Ok(total.ln() + problem.log_scale_density(a))
}

/// Probability of reaching `lower` before `upper`, `(s(b) - s(x0)) / (s(b) - s(ε))`,
/// evaluated in log space.
pub fn exit_prob_scale<T: Real>(problem: &SdeProblem<T>) -> Result<T, SdeError> {
    problem.validate()?;
    if problem.noise_scale == T::zero() {
        return Ok(T::zero());
    }
    Ok(T::one() / (T::one() + log_odds_against(problem)?.exp()))
}

/// `ln P(hit lower first)`, resolving probabilities far below `f64` underflow.
pub fn exit_log_prob_scale<T: Real>(problem: &SdeProblem<T>) -> Result<T, SdeError> {
    problem.validate()?;
    if problem.noise_scale == T::zero() {
        return Ok(T::neg_infinity());
    }
    let d = log_odds_against(problem)?;
    // -ln(1 + e^d), arranged to avoid overflow for large d
    Ok(if d > T::zero() {
        -(d + (-d).exp().ln_1p())
    } else {
        -d.exp().ln_1p()
    })
}

/// `ln[(s(x0) - s(ε)) / (s(b) - s(x0))]`.
fn log_odds_against<T: Real>(problem: &SdeProblem<T>) -> Result<T, SdeError> {
    let (x0, lo, hi) = (problem.x0, problem.lower, problem.upper);
    let log_above = log_integral(problem, x0, hi)?;
    let log_below = log_integral(problem, lo, x0)?;
    Ok(log_below - log_above)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSettings<T> {
    pub dt_base: T,
    pub kappa: T,
    pub max_steps: u64,
    /// Brownian-bridge test for barrier crossings between grid points.
    pub bridge: bool,
}

impl<T: Real> Default for McSettings<T> {
    fn default() -> Self {
        Self {
            dt_base: T::lit(1e-4),
            kappa: T::lit(0.05),
            max_steps: 10_000_000,
            bridge: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub trials: usize,
    pub hits_low: usize,
    pub hits_high: usize,
    pub over_budget: usize,
    /// Hit-low frequency among trials that exited.
    pub p_hat: f64,
    pub std_error: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Exit {
    Low,
    High,
    Budget,
}

fn run_path<T: Real>(problem: &SdeProblem<T>, settings: &McSettings<T>, rng: &mut ChaCha8Rng) -> Exit {
    let (lo, hi) = (problem.lower, problem.upper);
    let two = T::lit(2.0);
    let mut x = problem.x0;
    for _ in 0..settings.max_steps {
        let dt = adaptive_step(x, problem.beta, problem.gamma, settings.dt_base, settings.kappa);
        let vol = problem.noise_scale * x.powf(-problem.gamma);
        let z: f64 = rng.sample(StandardNormal);
        let next = x + x.powf(-problem.beta) * dt + vol * dt.sqrt() * T::lit(z);
        if next <= lo {
            return Exit::Low;
        }
        if next >= hi {
            return Exit::High;
        }
        if settings.bridge && vol > T::zero() {
            let var = vol * vol * dt;
            let p_low = (-two * (x - lo) * (next - lo) / var).exp();
            let p_high = (-two * (hi - x) * (hi - next) / var).exp();
            let u = T::lit(rng.random::<f64>());
            if u < p_low {
                return Exit::Low;
            }
            if u < p_low + p_high {
                return Exit::High;
            }
        }
        x = next;
    }
    Exit::Budget
}

/// Trial `i` uses its own ChaCha8 stream, so the estimate does not depend on
/// how trials are spread over threads.
pub fn exit_prob_mc<T: Real>(
    problem: &SdeProblem<T>,
    settings: &McSettings<T>,
    trials: usize,
    seed: u64,
) -> Result<McEstimate, SdeError> {
    problem.validate()?;
    if trials < 100 {
        return Err(SdeError::TooFewTrials(trials));
    }
    if !(settings.dt_base > T::zero() && settings.kappa > T::zero()) {
        return Err(SdeError::Settings("dt_base and kappa must be positive"));
    }
    let (low, high, budget) = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            match run_path(problem, settings, &mut rng) {
                Exit::Low => (1usize, 0usize, 0usize),
                Exit::High => (0, 1, 0),
                Exit::Budget => (0, 0, 1),
            }
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let exited = low + high;
    let p_hat = if exited == 0 { 0.0 } else { low as f64 / exited as f64 };
    let std_error = if exited == 0 {
        f64::NAN
    } else {
        (p_hat * (1.0 - p_hat) / exited as f64).sqrt()
    };
    Ok(McEstimate {
        trials,
        hits_low: low,
        hits_high: high,
        over_budget: budget,
        p_hat,
        std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn unit_drift_closed_form() {
        let p = SdeProblem::new(0.0, 0.0, 0.5, 0.1).unwrap();
        let e = |y: f64| (-2.0 * y).exp();
        let expect = (e(1.0) - e(0.5)) / (e(1.0) - e(0.1));
        assert_relative_eq!(exit_prob_scale(&p).unwrap(), expect, max_relative = 1e-9);
        assert_relative_eq!(exit_log_prob_scale(&p).unwrap(), expect.ln(), max_relative = 1e-9);
    }

    #[test]
    fn logarithmic_primitive_branch() {
        // 2γ - β = -1: s'(y) = (x0/y)^2, s(y) ∝ -1/y
        let p = SdeProblem::new(1.0, 0.0, 0.5, 0.1).unwrap();
        let s = |y: f64| -1.0 / y;
        let expect = (s(1.0) - s(0.5)) / (s(1.0) - s(0.1));
        assert_relative_eq!(exit_prob_scale(&p).unwrap(), expect, max_relative = 1e-9);
    }

    #[test]
    fn strong_drift_suppresses_exit_as_barrier_shrinks() {
        let logs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&eps| exit_log_prob_scale(&SdeProblem::new(3.0, 0.0, 0.5, eps).unwrap()).unwrap())
            .collect();
        assert!(logs[0] > logs[1] && logs[1] > logs[2], "{logs:?}");
        // s' ∝ exp(y^{-2}), so ln P ≈ -ε^{-2}
        assert_relative_eq!(logs[0], -1e4, max_relative = 1e-2);
        let p: f64 = exit_prob_scale(&SdeProblem::new(3.0, 0.0, 0.5, 1e-4).unwrap()).unwrap();
        assert!(p < 1e-3);
    }

    #[test]
    fn weak_drift_keeps_positive_limit() {
        let p: f64 = exit_prob_scale(&SdeProblem::new(0.5, 0.0, 0.5, 1e-4).unwrap()).unwrap();
        assert!(p > 0.05, "{p}");
        let q = exit_prob_scale(&SdeProblem::new(0.5, 0.0, 0.5, 1e-6).unwrap()).unwrap();
        assert!((p - q).abs() < 0.05);
    }

    #[test]
    fn start_near_upper_barrier() {
        let probs: Vec<f64> = [0.9, 0.99, 0.999]
            .iter()
            .map(|&x0| exit_prob_scale(&SdeProblem::new(1.0, 0.5, x0, 0.1).unwrap()).unwrap())
            .collect();
        assert!(probs[2] < probs[1] && probs[1] < probs[0]);
        assert!(probs[2] < 1e-2);
    }

    #[test]
    fn rejects_invalid_problems() {
        assert!(SdeProblem::new(-1.0, 0.0, 0.5, 0.1).is_err());
        assert!(SdeProblem::new(1.0, 0.0, 0.05, 0.1).is_err());
        assert!(SdeProblem::new(1.0, 0.0, 1.0, 0.1).is_err());
        let p = SdeProblem::new(1.0, 0.0, 0.5, 0.1).unwrap();
        assert_eq!(
            exit_prob_mc(&p, &McSettings::default(), 10, 0).unwrap_err(),
            SdeError::TooFewTrials(10)
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn probability_in_unit_interval_and_monotone_in_start(
            beta in 0.0f64..4.0, gamma in 0.0f64..1.5, x0 in 0.15f64..0.85, dx in 0.01f64..0.1,
        ) {
            let a = exit_prob_scale(&SdeProblem::new(beta, gamma, x0, 0.1).unwrap()).unwrap();
            let b = exit_prob_scale(&SdeProblem::new(beta, gamma, x0 + dx, 0.1).unwrap()).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b <= a + 1e-12);
        }
    }

    #[test]
    fn zero_noise_never_hits_low() {
        let mut p = SdeProblem::new(1.0, 0.0, 0.5, 0.1).unwrap();
        p.noise_scale = 0.0;
        let est = exit_prob_mc(&p, &McSettings::default(), 100, 1).unwrap();
        assert_eq!(est.hits_low, 0);
        assert_eq!(est.hits_high, 100);
        assert_eq!(exit_prob_scale(&p).unwrap(), 0.0);
    }

    #[test]
    fn monte_carlo_matches_unit_drift_oracle() {
        let p = SdeProblem::new(0.0, 0.0, 0.5, 0.1).unwrap();
        let exact: f64 = exit_prob_scale(&p).unwrap();
        let est = exit_prob_mc(&p, &McSettings::default(), 4000, 7).unwrap();
        let se = (exact * (1.0 - exact) / 4000.0).sqrt();
        assert!((est.p_hat - exact).abs() < 3.0 * se, "{} vs {exact}", est.p_hat);
        assert_eq!(est.hits_low + est.hits_high + est.over_budget, 4000);
    }

    #[test]
    fn estimate_is_seed_deterministic() {
        let p = SdeProblem::new(1.0, 0.25, 0.5, 0.1).unwrap();
        let a = exit_prob_mc(&p, &McSettings::default(), 200, 3).unwrap();
        let b = exit_prob_mc(&p, &McSettings::default(), 200, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn budget_exhaustion_is_counted() {
        let p = SdeProblem::new(1.0, 0.0, 0.5, 0.1).unwrap();
        let s = McSettings {
            max_steps: 3,
            ..Default::default()
        };
        let est = exit_prob_mc(&p, &s, 100, 0).unwrap();
        assert!(est.over_budget > 0);
        assert_eq!(est.hits_low + est.hits_high + est.over_budget, 100);
    }
}
