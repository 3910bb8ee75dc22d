//! Exponential-Euler time stepping of the mild solution with cutoff forcing.
//!
//! One step maps `u ↦ S(dt)[u + f_n(u) dt + σ_n(u) ΔW]`: the nonlinearity is
//! evaluated on the grid, the semigroup acts on sine coefficients, and `σ` is
//! frozen at the left endpoint of the step.

mod convolution;
mod ladder;
mod state;
mod trajectory;

pub use convolution::{
    convolution_discrepancy, stochastic_convolution_direct, stochastic_convolution_factorized,
    BrownianPath, ConvolutionSeries, NoisePath,
};
pub use ladder::{CrossingTracker, LadderDirection, LadderEvent, LadderTracker};
pub use state::{FieldState, InitialProfile};
pub use trajectory::{
    run_trajectory, SolverConfig, TerminalStatus, TrajectoryConfig, TrajectoryRecord,
};

use thiserror::Error;

use crate::forcing::{CutoffForcing, ForcingError};
use crate::noise::{fill_increment, NoiseError, NoiseSpectrum, NoiseStream};
use crate::scalar::Real;
use crate::spectral::{sup_norm, SpectralBasis, SpectralError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Forcing(#[from] ForcingError),
    #[error("time step must be positive")]
    NonPositiveStep,
    #[error("initial data must satisfy sup|u0| < 1 (got {0})")]
    InitialOutOfDomain(f64),
    #[error("state distance {0} is at or below the blow-up floor")]
    AtFloor(f64),
    #[error("non-finite value in state at t = {0}; trajectory aborted")]
    NonFinite(f64),
    #[error("step budget of {0} steps exhausted at t = {1}")]
    StepBudget(u64, f64),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("factorization exponent {alpha} outside (0, {limit})")]
    FactorizationExponent { alpha: f64, limit: f64 },
}

/// State-dependent step: `min(dt_base, κ · e^{max(β, 2γ+1) + 1})`.
///
/// With this exponent both the drift and the noise displacement over one step
/// stay a fixed fraction of the distance `e` to the boundary.
#[inline]
pub fn adaptive_step<T: Real>(distance: T, beta: T, gamma: T, dt_base: T, kappa: T) -> T {
    let exponent = beta.max(T::lit(2.0) * gamma + T::one()) + T::one();
    dt_base.min(kappa * distance.max(T::zero()).powf(exponent))
}

/// Reusable scratch for stepping one trajectory.
pub struct Stepper<'a, T> {
    basis: &'a SpectralBasis<T>,
    noise: &'a NoiseSpectrum<T>,
    forcing: CutoffForcing<T>,
    work: Vec<T>,
    modes: Vec<T>,
    increment: Vec<T>,
    noise_modes: Vec<T>,
    noise_grid: Vec<T>,
    normals: Vec<f64>,
    decay: Vec<T>,
    decay_dt: Option<T>,
}

impl<'a, T: Real> Stepper<'a, T> {
    pub fn new(
        basis: &'a SpectralBasis<T>,
        noise: &'a NoiseSpectrum<T>,
        forcing: CutoffForcing<T>,
    ) -> Result<Self, SolverError> {
        if noise.mode_count() != basis.mode_count() {
            return Err(NoiseError::ModeMismatch {
                spectrum: noise.mode_count(),
                basis: basis.mode_count(),
            }
            .into());
        }
        let (j, m) = (basis.mode_count(), basis.grid_size());
        Ok(Self {
            basis,
            noise,
            forcing,
            work: vec![T::zero(); m],
            modes: vec![T::zero(); j],
            increment: vec![T::zero(); j],
            noise_modes: vec![T::zero(); j],
            noise_grid: vec![T::zero(); m],
            normals: Vec::with_capacity(j),
            decay: vec![T::one(); j],
            decay_dt: None,
        })
    }

    pub fn forcing(&self) -> &CutoffForcing<T> {
        &self.forcing
    }

    /// Modal noise term `⟨σ_n(u) ΔW, e_k⟩` of the most recent step.
    pub fn last_noise_modes(&self) -> &[T] {
        &self.noise_modes
    }

    fn refresh_decay(&mut self, dt: T) {
        if self.decay_dt != Some(dt) {
            for (d, &a) in self.decay.iter_mut().zip(self.basis.eigenvalues()) {
                *d = (-a * dt).exp();
            }
            self.decay_dt = Some(dt);
        }
    }

    fn noise_term(&mut self, state: &FieldState<T>, dt: T, stream: &mut NoiseStream) {
        if self.noise.is_silent() {
            self.noise_modes.iter_mut().for_each(|g| *g = T::zero());
            return;
        }
        fill_increment(self.noise, dt, stream, &mut self.normals, &mut self.increment);
        if self.forcing.spec().is_additive() {
            let s = self.forcing.sigma(T::zero());
            for (g, &inc) in self.noise_modes.iter_mut().zip(&self.increment) {
                *g = s * inc;
            }
        } else {
            let transform = self.basis.transform();
            transform.inverse(&self.increment, &mut self.noise_grid);
            for ((w, &xi), &u) in self.work.iter_mut().zip(&self.noise_grid).zip(&state.values) {
                *w = self.forcing.sigma(u) * xi;
            }
            transform.forward(&self.work, &mut self.noise_modes);
        }
    }

    /// Advances `state` by `dt` in place. When `convolution` is given, the running
    /// stochastic convolution coefficients are advanced alongside.
    pub fn advance(
        &mut self,
        state: &mut FieldState<T>,
        dt: T,
        stream: &mut NoiseStream,
        convolution: Option<&mut [T]>,
    ) -> Result<(), SolverError> {
        if !(dt > T::zero()) {
            return Err(SolverError::NonPositiveStep);
        }
        self.noise_term(state, dt, stream);
        for (w, &u) in self.work.iter_mut().zip(&state.values) {
            *w = u + self.forcing.drift(u) * dt;
        }
        let transform = self.basis.transform();
        transform.forward(&self.work, &mut self.modes);
        self.refresh_decay(dt);
        for ((c, &g), &d) in self.modes.iter_mut().zip(&self.noise_modes).zip(&self.decay) {
            *c = (*c + g) * d;
        }
        if let Some(z) = convolution {
            for ((zk, &g), &d) in z.iter_mut().zip(&self.noise_modes).zip(&self.decay) {
                *zk = (*zk + g) * d;
            }
        }
        state.modes.copy_from_slice(&self.modes);
        transform.inverse(&state.modes, &mut state.values);
        state.time = state.time + dt;
        state.sup_norm = sup_norm(&state.values);
        state.distance = T::one() - state.sup_norm;
        if !state.sup_norm.is_finite() || state.values.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite(state.time.as_f64()));
        }
        Ok(())
    }
}

/// Single exponential-Euler step returning the new state.
pub fn step<T: Real>(
    state: &FieldState<T>,
    forcing: &CutoffForcing<T>,
    noise: &NoiseSpectrum<T>,
    basis: &SpectralBasis<T>,
    dt: T,
    stream: &mut NoiseStream,
) -> Result<FieldState<T>, SolverError> {
    let floor = crate::scalar::third_power::<T>(forcing.level());
    if state.distance <= floor {
        return Err(SolverError::AtFloor(state.distance.as_f64()));
    }
    let mut stepper = Stepper::new(basis, noise, *forcing)?;
    let mut next = state.clone();
    stepper.advance(&mut next, dt, stream, None)?;
    Ok(next)
}
