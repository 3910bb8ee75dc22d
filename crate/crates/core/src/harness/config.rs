use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::forcing::{check_condition, ForcingParams, ForcingSpec, DEFAULT_CORE};
use crate::noise::{NoisePreset, NoiseSpectrum, Rho, WHITE_NOISE_THETA};
use crate::sde::McSettings;
use crate::solver::{InitialProfile, SolverConfig};
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub modes: usize,
    pub grid: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { modes: 64, grid: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// No noise at all.
    Silent,
    TraceClass,
    White,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub preset: NoiseKind,
    /// Used by the white and custom presets.
    pub theta: f64,
    /// `None` means `ρ = ∞`; used by the custom preset.
    pub rho: Option<f64>,
    /// Custom `λ_j`; padded with zeros or truncated to the basis size.
    pub coefficients: Vec<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            preset: NoiseKind::TraceClass,
            theta: WHITE_NOISE_THETA,
            rho: None,
            coefficients: Vec::new(),
        }
    }
}

impl NoiseConfig {
    pub fn build(&self, modes: usize, theta: Option<f64>) -> Result<NoiseSpectrum<f64>, HarnessError> {
        let theta = theta.unwrap_or(self.theta);
        let spec = match self.preset {
            NoiseKind::Silent => NoiseSpectrum::silent(modes),
            NoiseKind::TraceClass => NoiseSpectrum::trace_class(modes),
            NoiseKind::White => NoiseSpectrum::white(modes, theta)?,
            NoiseKind::Custom => {
                let mut c = self.coefficients.clone();
                c.resize(modes, 0.0);
                let rho = self.rho.map_or(Rho::Infinite, Rho::Finite);
                NoiseSpectrum::new(c, theta, rho, NoisePreset::Custom)?
            }
        };
        Ok(spec)
    }

    fn varies_with_theta(&self) -> bool {
        matches!(self.preset, NoiseKind::White | NoiseKind::Custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcingConfig {
    pub beta: f64,
    pub gamma: f64,
    pub c0: f64,
    pub noise_scale: f64,
    pub drift_scale: f64,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        Self {
            beta: 2.0,
            gamma: 0.25,
            c0: DEFAULT_CORE,
            noise_scale: 1.0,
            drift_scale: 1.0,
        }
    }
}

impl ForcingConfig {
    pub fn build(&self, beta: f64, gamma: f64) -> Result<ForcingSpec<f64>, HarnessError> {
        Ok(ForcingSpec::new(ForcingParams {
            beta,
            gamma,
            c0: self.c0,
            noise_scale: self.noise_scale,
            drift_scale: self.drift_scale,
        })?)
    }
}

/// Grids for `run_sweep`; an empty list falls back to the single base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Required separation, in binomial standard errors.
    pub se_multiple: f64,
    /// Log-log slope above which a ladder probe is flagged as consistent with `q > 1`.
    pub min_slope: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            se_multiple: 3.0,
            min_slope: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderConfig {
    /// Starting rung `n` (must exceed the lemma level `N`); 0 selects `N + 1`.
    pub level: u32,
    pub epsilons: Vec<f64>,
    pub min_events: usize,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            level: 0,
            epsilons: vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2],
            min_events: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeConfig {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lower: Vec<f64>,
    pub x0: f64,
    pub upper: f64,
    pub trials: usize,
    pub monte_carlo: McSettings<f64>,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            beta: vec![0.5, 1.0, 1.5],
            gamma: vec![0.0, 0.25, 0.5],
            lower: vec![0.1],
            x0: 0.5,
            upper: 1.0,
            trials: 10_000,
            monte_carlo: McSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaConfig {
    pub beta: Vec<f64>,
    /// Noise scales for the small-noise audits (run with the configured spectrum).
    pub small_noise: Vec<f64>,
    pub dt_base: Vec<f64>,
    pub t_end: f64,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        Self {
            beta: vec![1.0, 2.0, 3.0],
            small_noise: vec![1e-3],
            dt_base: vec![1e-3, 5e-4],
            t_end: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorizationConfig {
    pub modes: usize,
    pub horizon: f64,
    pub steps: usize,
    pub alpha: f64,
    /// Number of 2× refinements after the base resolution.
    pub refinements: usize,
}

impl Default for FactorizationConfig {
    fn default() -> Self {
        Self {
            modes: 8,
            horizon: 0.1,
            steps: 2000,
            alpha: 0.3,
            refinements: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write per-trajectory `e(t)` traces for sweeps.
    pub traces: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub basis: BasisConfig,
    pub noise: NoiseConfig,
    pub forcing: ForcingConfig,
    pub initial: InitialProfile,
    pub solver: SolverConfig<f64>,
    pub sweep: SweepGrid,
    pub thresholds: Thresholds,
    pub ladder: LadderConfig,
    pub sde: SdeConfig,
    pub lemma: LemmaConfig,
    pub factorization: FactorizationConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 200,
            basis: BasisConfig::default(),
            noise: NoiseConfig::default(),
            forcing: ForcingConfig::default(),
            initial: InitialProfile::ScaledFirstMode { peak: 0.5 },
            solver: SolverConfig {
                t_end: 5.0,
                ..SolverConfig::default()
            },
            sweep: SweepGrid::default(),
            thresholds: Thresholds::default(),
            ladder: LadderConfig::default(),
            sde: SdeConfig::default(),
            lemma: LemmaConfig::default(),
            factorization: FactorizationConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 of the canonical JSON rendering.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn basis(&self) -> Result<SpectralBasis<f64>, HarnessError> {
        Ok(SpectralBasis::new(self.basis.modes, self.basis.grid)?)
    }

    pub fn cells(&self) -> Vec<Cell> {
        let or = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
        let betas = or(&self.sweep.beta, self.forcing.beta);
        let gammas = or(&self.sweep.gamma, self.forcing.gamma);
        let thetas = or(&self.sweep.theta, self.noise.theta);
        let mut cells = Vec::with_capacity(betas.len() * gammas.len() * thetas.len());
        for &beta in &betas {
            for &gamma in &gammas {
                for &theta in &thetas {
                    cells.push(Cell { beta, gamma, theta });
                }
            }
        }
        cells
    }

    /// Checks every cell before any trajectory runs.
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.solver.validate()?;
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be positive".into()));
        }
        let basis = self.basis()?;
        if !self.sweep.theta.is_empty() && !self.noise.varies_with_theta() {
            return Err(HarnessError::Config(
                "a theta sweep needs the white or custom noise preset".into(),
            ));
        }
        let initial = self.initial.build(&basis)?;
        if initial.distance <= crate::scalar::third_power(self.solver.max_level) {
            return Err(HarnessError::Config(
                "initial data already at the blow-up floor".into(),
            ));
        }
        for cell in self.cells() {
            self.noise.build(basis.mode_count(), Some(cell.theta))?;
            self.forcing.build(cell.beta, cell.gamma)?;
        }
        Ok(())
    }

    /// Noise spectrum, forcing and condition margin for one cell.
    pub fn cell_model(
        &self,
        cell: &Cell,
    ) -> Result<(NoiseSpectrum<f64>, ForcingSpec<f64>, f64, bool), HarnessError> {
        let noise = self.noise.build(self.basis.modes, Some(cell.theta))?;
        let forcing = self.forcing.build(cell.beta, cell.gamma)?;
        let check = check_condition(cell.beta, cell.gamma, noise.eta());
        Ok((noise, forcing, check.margin, check.satisfied))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.basis.modes, 64);
        assert_eq!(c.trials, 200);
        assert_eq!(c.solver.t_end, 5.0);
    }

    #[test]
    fn parses_sections() {
        let c = ExperimentConfig::from_toml_str(
            r#"
            seed = 9
            trials = 50
            [basis]
            modes = 8
            grid = 32
            [noise]
            preset = "white"
            theta = 0.6
            [initial]
            kind = "plateau"
            peak = 0.7
            [sweep]
            beta = [1.0, 2.0]
            gamma = [0.0, 0.5]
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.noise.preset, NoiseKind::White);
        assert_eq!(c.initial, InitialProfile::Plateau { peak: 0.7 });
        assert_eq!(c.cells().len(), 4);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_cells() {
        assert!(ExperimentConfig::from_toml_str("sed = 1").is_err());
        let mut c = ExperimentConfig::default();
        c.sweep.beta = vec![1.0, -1.0];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.sweep.theta = vec![0.6];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.noise.preset = NoiseKind::White;
        c.sweep.theta = vec![1.2];
        assert!(c.validate().is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
