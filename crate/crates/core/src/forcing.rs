//! Singular constraining drift `f`, multiplicative noise amplitude `σ`, their
//! Lipschitz cutoffs, and the global-existence condition.
//!
//! Outside the core region (`c0 < |w| < 1`) the canonical forms are
//!
//! ```text
//! f(w) = -sign(w) K (1 - |w|)^{-β}
//! σ(w) = C (1 - |w|)^{-γ}
//! ```
//!
//! Inside the core `f` is the odd cubic matching value and slope at `±c0`. That
//! cubic stops being monotone once the relative slope `p = βc0/(1 − c0)` exceeds
//! 3, so beyond that the core uses `sign(w)·f(c0)·(|w|/c0)^p`, which matches the
//! same value and slope. `σ` is held at its value at `c0`.

use num_traits::Num;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{third_power, Real};

pub const DEFAULT_CORE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForcingError {
    #[error("beta must be positive")]
    NonPositiveBeta,
    #[error("gamma must be nonnegative")]
    NegativeGamma,
    #[error("core threshold c0 must lie in (0, 1)")]
    CoreOutOfRange,
    #[error("noise scale C must be positive")]
    NonPositiveNoiseScale,
    #[error("drift scale K must be positive")]
    NonPositiveDriftScale,
    #[error("forcing undefined for |w| >= 1 (w = {0})")]
    OutsideDomain(f64),
    #[error("cutoff level must be at least 1")]
    ZeroLevel,
}

/// Parameters of the drift and noise amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcingParams<T> {
    pub beta: T,
    pub gamma: T,
    pub c0: T,
    /// Noise scale `C`.
    pub noise_scale: T,
    /// Drift scale `K`.
    pub drift_scale: T,
}

impl<T: Real> ForcingParams<T> {
    pub fn new(beta: T, gamma: T) -> Self {
        Self {
            beta,
            gamma,
            c0: T::lit(DEFAULT_CORE),
            noise_scale: T::one(),
            drift_scale: T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Core<T> {
    /// `linear·w + cubic·w³`
    Cubic { linear: T, cubic: T },
    /// `sign(w)·edge·(|w|/c0)^power`
    Power { edge: T, power: T },
}

/// Validated forcing with the core interpolant precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcingSpec<T> {
    params: ForcingParams<T>,
    core: Core<T>,
    sigma_core: T,
}

impl<T: Real> ForcingSpec<T> {
    pub fn new(params: ForcingParams<T>) -> Result<Self, ForcingError> {
        let ForcingParams {
            beta,
            gamma,
            c0,
            noise_scale,
            drift_scale,
        } = params;
        if !(beta > T::zero()) {
            return Err(ForcingError::NonPositiveBeta);
        }
        if !(gamma >= T::zero()) {
            return Err(ForcingError::NegativeGamma);
        }
        if !(c0 > T::zero() && c0 < T::one()) {
            return Err(ForcingError::CoreOutOfRange);
        }
        if !(noise_scale > T::zero()) {
            return Err(ForcingError::NonPositiveNoiseScale);
        }
        if !(drift_scale > T::zero()) {
            return Err(ForcingError::NonPositiveDriftScale);
        }
        let gap = T::one() - c0;
        let value = -drift_scale * gap.powf(-beta);
        let slope = -drift_scale * beta * gap.powf(-beta - T::one());
        let two = T::lit(2.0);
        let power = slope * c0 / value;
        let core = if power <= T::lit(3.0) {
            Core::Cubic {
                linear: (T::lit(3.0) * value - slope * c0) / (two * c0),
                cubic: (slope * c0 - value) / (two * c0.powi(3)),
            }
        } else {
            Core::Power { edge: value, power }
        };
        Ok(Self {
            params,
            core,
            sigma_core: noise_scale * gap.powf(-gamma),
        })
    }

    pub fn params(&self) -> &ForcingParams<T> {
        &self.params
    }

    pub fn beta(&self) -> T {
        self.params.beta
    }

    pub fn gamma(&self) -> T {
        self.params.gamma
    }

    pub fn c0(&self) -> T {
        self.params.c0
    }

    /// `σ` is constant when `γ = 0`.
    pub fn is_additive(&self) -> bool {
        self.params.gamma == T::zero()
    }

    /// Drift for `|w| < 1`, no domain check.
    #[inline]
    pub fn drift_raw(&self, w: T) -> T {
        let a = w.abs();
        if a <= self.params.c0 {
            match self.core {
                Core::Cubic { linear, cubic } => w * (linear + cubic * w * w),
                Core::Power { edge, power } => w.signum() * edge * (a / self.params.c0).powf(power),
            }
        } else {
            -w.signum() * self.params.drift_scale * (T::one() - a).powf(-self.params.beta)
        }
    }

    /// Noise amplitude for `|w| < 1`, no domain check.
    #[inline]
    pub fn sigma_raw(&self, w: T) -> T {
        let a = w.abs();
        if a <= self.params.c0 || self.params.gamma == T::zero() {
            self.sigma_core
        } else {
            self.params.noise_scale * (T::one() - a).powf(-self.params.gamma)
        }
    }

    fn check_domain(w: T) -> Result<(), ForcingError> {
        if w.abs() < T::one() {
            Ok(())
        } else {
            Err(ForcingError::OutsideDomain(w.as_f64()))
        }
    }

    pub fn drift(&self, w: T) -> Result<T, ForcingError> {
        Self::check_domain(w)?;
        Ok(self.drift_raw(w))
    }

    pub fn sigma(&self, w: T) -> Result<T, ForcingError> {
        Self::check_domain(w)?;
        Ok(self.sigma_raw(w))
    }

    /// Globally Lipschitz truncation at level `n`.
    pub fn cutoff(&self, level: u32) -> Result<CutoffForcing<T>, ForcingError> {
        if level == 0 {
            return Err(ForcingError::ZeroLevel);
        }
        Ok(CutoffForcing {
            spec: *self,
            level,
            bound: T::one() - third_power::<T>(level),
        })
    }
}

/// `f_n(w) = f(clamp(w, -1 + 3^{-n}, 1 - 3^{-n}))`, likewise `σ_n`; defined on all of ℝ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffForcing<T> {
    spec: ForcingSpec<T>,
    level: u32,
    bound: T,
}

impl<T: Real> CutoffForcing<T> {
    pub fn level(&self) -> u32 {
        self.level
    }

    /// `1 - 3^{-n}`.
    pub fn bound(&self) -> T {
        self.bound
    }

    pub fn spec(&self) -> &ForcingSpec<T> {
        &self.spec
    }

    #[inline]
    fn clamp(&self, w: T) -> T {
        w.max(-self.bound).min(self.bound)
    }

    #[inline]
    pub fn drift(&self, w: T) -> T {
        self.spec.drift_raw(self.clamp(w))
    }

    #[inline]
    pub fn sigma(&self, w: T) -> T {
        self.spec.sigma_raw(self.clamp(w))
    }
}

/// Outcome of testing `γ + 1 < (1 − η)(β + 1)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionCheck<T> {
    pub satisfied: bool,
    /// `(1 − η)(β + 1)/2 − (γ + 1)`; positive exactly when satisfied.
    pub margin: T,
}

/// Evaluates the no-blow-up condition. Works over rationals for exact margins.
pub fn check_condition<T>(beta: T, gamma: T, eta: T) -> ConditionCheck<T>
where
    T: Num + PartialOrd + Copy,
{
    let one = T::one();
    let two = one + one;
    let margin = (one - eta) * (beta + one) / two - (gamma + one);
    ConditionCheck {
        satisfied: margin > T::zero(),
        margin,
    }
}
