use serde::{Deserialize, Serialize};

use super::convolution::NoisePath;
use super::ladder::{CrossingTracker, LadderEvent, LadderTracker};
use super::state::FieldState;
use super::{adaptive_step, SolverError, Stepper};
use crate::bounds::lemma_level;
use crate::forcing::ForcingSpec;
use crate::noise::{NoiseSpectrum, NoiseStream};
use crate::scalar::{third_power, Real};
use crate::spectral::{sup_norm, SpectralBasis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig<T> {
    /// Largest step, used while the state is far from the boundary.
    pub dt_base: T,
    /// Prefactor of the state-dependent step.
    pub kappa: T,
    pub t_end: T,
    /// Cutoff level `n`; reaching `e ≤ 3^{-n}` is reported as blow-up.
    pub max_level: u32,
    /// Record every k-th step (the initial and final states are always kept).
    pub sample_every: usize,
    pub max_steps: u64,
    pub track_convolution: bool,
    pub keep_fields: bool,
    pub record_path: bool,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            dt_base: T::lit(1e-3),
            kappa: T::lit(0.05),
            t_end: T::one(),
            max_level: 12,
            sample_every: 10,
            max_steps: 50_000_000,
            track_convolution: false,
            keep_fields: false,
            record_path: false,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::Config(m.to_string()));
        if !(self.dt_base > T::zero()) {
            return bad("dt_base must be positive");
        }
        if !(self.kappa > T::zero()) {
            return bad("kappa must be positive");
        }
        if !(self.t_end > T::zero()) || !self.t_end.is_finite() {
            return bad("t_end must be positive and finite");
        }
        if self.max_level == 0 || self.max_level > 30 {
            return bad("max_level must lie in 1..=30");
        }
        if self.sample_every == 0 {
            return bad("sample_every must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalStatus {
    /// Reached `t_end` with `e > 3^{-n}` throughout.
    Completed,
    /// `0 < e ≤ 3^{-n}` for the cutoff level `n`.
    BlewUp,
    /// A step overshot the boundary entirely (`e ≤ 0`).
    CutoffSaturated,
}

impl TerminalStatus {
    pub fn is_blowup(self) -> bool {
        !matches!(self, TerminalStatus::Completed)
    }
}

pub struct TrajectoryConfig<'a, T> {
    pub basis: &'a SpectralBasis<T>,
    pub noise: &'a NoiseSpectrum<T>,
    pub forcing: ForcingSpec<T>,
    pub initial: FieldState<T>,
    pub solver: SolverConfig<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord<T> {
    pub seed: u64,
    pub config_digest: Option<String>,
    pub status: TerminalStatus,
    pub final_time: T,
    pub steps: u64,
    pub min_distance: T,
    /// Sample times and the distance `e` at each.
    pub times: Vec<T>,
    pub distances: Vec<T>,
    /// `sup|Z|` at the sample times, when convolution tracking is on.
    pub convolution_sup: Option<Vec<T>>,
    pub fields: Option<Vec<Vec<T>>>,
    /// `crossings[n - 1] = T_n`.
    pub crossings: Vec<Option<T>>,
    pub ladder: Vec<LadderEvent<T>>,
    #[serde(skip)]
    pub path: Option<NoisePath<T>>,
    #[serde(skip)]
    pub final_state: Option<FieldState<T>>,
}

impl<T: Real> TrajectoryRecord<T> {
    /// `T_n`, if level `n` was crossed.
    pub fn crossing(&self, n: u32) -> Option<T> {
        if n == 0 {
            return None;
        }
        self.crossings.get(n as usize - 1).copied().flatten()
    }
}

struct Recorder<T> {
    times: Vec<T>,
    distances: Vec<T>,
    z_sup: Option<Vec<T>>,
    fields: Option<Vec<Vec<T>>>,
    z_grid: Vec<T>,
}

impl<T: Real> Recorder<T> {
    fn record(&mut self, basis: &SpectralBasis<T>, state: &FieldState<T>, z: Option<&[T]>) {
        self.times.push(state.time);
        self.distances.push(state.distance);
        if let (Some(out), Some(z)) = (self.z_sup.as_mut(), z) {
            basis.transform().inverse(z, &mut self.z_grid);
            out.push(sup_norm(&self.z_grid));
        }
        if let Some(f) = self.fields.as_mut() {
            f.push(state.values.clone());
        }
    }
}

/// Integrates one trajectory of the cutoff problem until `t_end` or blow-up.
pub fn run_trajectory<T: Real>(
    config: &TrajectoryConfig<'_, T>,
    seed: u64,
) -> Result<TrajectoryRecord<T>, SolverError> {
    let sc = &config.solver;
    sc.validate()?;
    let basis = config.basis;
    if config.initial.values.len() != basis.grid_size() {
        return Err(SolverError::Config("initial state does not match the basis".into()));
    }
    let cutoff = config.forcing.cutoff(sc.max_level)?;
    let floor = third_power::<T>(sc.max_level);
    let (beta, gamma) = (config.forcing.beta(), config.forcing.gamma());
    let mut stepper = Stepper::new(basis, config.noise, cutoff)?;
    let mut stream = NoiseStream::new(seed);
    let mut state = config.initial.clone();
    let j = basis.mode_count();

    let mut crossings = CrossingTracker::new(sc.max_level);
    let mut ladder = LadderTracker::new(lemma_level(config.forcing.c0()), sc.max_level);
    let mut z = sc.track_convolution.then(|| vec![T::zero(); j]);
    let mut path = sc.record_path.then(|| NoisePath::empty(j));
    let mut rec = Recorder {
        times: Vec::new(),
        distances: Vec::new(),
        z_sup: z.as_ref().map(|_| Vec::new()),
        fields: sc.keep_fields.then(Vec::new),
        z_grid: vec![T::zero(); basis.grid_size()],
    };

    crossings.observe(state.time, state.distance);
    ladder.observe(state.time, state.distance);
    rec.record(basis, &state, z.as_deref());
    let mut min_distance = state.distance;
    let mut steps: u64 = 0;
    let mut last_recorded = 0u64;
    // a step landing within this of t_end finishes the run
    let slack = sc.t_end * T::lit(1e-12);

    let status = loop {
        if state.distance <= T::zero() {
            break TerminalStatus::CutoffSaturated;
        }
        if state.distance <= floor {
            break TerminalStatus::BlewUp;
        }
        if state.time >= sc.t_end - slack {
            break TerminalStatus::Completed;
        }
        if steps >= sc.max_steps {
            return Err(SolverError::StepBudget(sc.max_steps, state.time.as_f64()));
        }
        let dt = adaptive_step(state.distance, beta, gamma, sc.dt_base, sc.kappa)
            .min(sc.t_end - state.time);
        let start = state.time;
        stepper.advance(&mut state, dt, &mut stream, z.as_deref_mut())?;
        steps += 1;
        if let Some(p) = path.as_mut() {
            p.push(start, dt, stepper.last_noise_modes());
        }
        crossings.observe(state.time, state.distance);
        ladder.observe(state.time, state.distance);
        min_distance = min_distance.min(state.distance);
        if steps % sc.sample_every as u64 == 0 {
            rec.record(basis, &state, z.as_deref());
            last_recorded = steps;
        }
    };
    if last_recorded != steps {
        rec.record(basis, &state, z.as_deref());
    }

    Ok(TrajectoryRecord {
        seed,
        config_digest: None,
        status,
        final_time: state.time,
        steps,
        min_distance,
        times: rec.times,
        distances: rec.distances,
        convolution_sup: rec.z_sup,
        fields: rec.fields,
        crossings: crossings.into_times(),
        ladder: ladder.into_events(),
        path,
        final_state: Some(state),
    })
}
