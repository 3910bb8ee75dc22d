//! Simulation of a stochastic reaction-diffusion equation on `(0, 1)` whose
//! solution is confined to `(-1, 1)` by a singular dissipative drift.
//!
//! The numerical kernels are generic over [`scalar::Real`] (`f32` or `f64`);
//! the aliases below fix the usual `f64` instantiation. The harness works in `f64`.

pub mod bounds;
pub mod forcing;
pub mod harness;
pub mod noise;
pub mod quadrature;
pub mod scalar;
pub mod sde;
pub mod solver;
pub mod spectral;

pub use bounds::{audit, lemma_level, AuditReport, EnvelopeSpec};
pub use forcing::{check_condition, ConditionCheck, CutoffForcing, ForcingParams, ForcingSpec};
pub use noise::{compute_eta, NoiseSpectrum, NoiseStream, Rho};
pub use sde::{exit_prob_mc, exit_prob_scale, McEstimate, McSettings, SdeProblem};
pub use solver::{
    run_trajectory, FieldState, InitialProfile, SolverConfig, TerminalStatus, TrajectoryConfig,
    TrajectoryRecord,
};
pub use spectral::SpectralBasis;

pub type Basis = SpectralBasis<f64>;
pub type Spectrum = NoiseSpectrum<f64>;
pub type Forcing = ForcingSpec<f64>;
pub type Cutoff = CutoffForcing<f64>;
pub type State = FieldState<f64>;
pub type Record = TrajectoryRecord<f64>;
pub type Solver = SolverConfig<f64>;
pub type Envelope = EnvelopeSpec<f64>;
pub type Sde = SdeProblem<f64>;

pub type Basis32 = SpectralBasis<f32>;
pub type Spectrum32 = NoiseSpectrum<f32>;
pub type Forcing32 = ForcingSpec<f32>;
pub type State32 = FieldState<f32>;
pub type Record32 = TrajectoryRecord<f32>;
