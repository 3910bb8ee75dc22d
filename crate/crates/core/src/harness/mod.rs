//! Configuration, sweeps, probes and output files behind the `srde` command line.

mod commands;
mod config;
mod ladder;
mod output;
mod sweep;

pub use commands::{
    check_condition_table, factorization_check, run_command, sde_exit, simulate, verify_lemma,
    Command, CommandReport,
};
pub use config::{
    BasisConfig, Cell, ExperimentConfig, FactorizationConfig, ForcingConfig, LadderConfig,
    LemmaConfig, NoiseConfig, NoiseKind, OutputConfig, SdeConfig, SweepGrid, Thresholds,
};
pub use ladder::{ladder_decay_probe, LadderProbe, LadderProbeRow};
pub use output::{prepare_out_dir, write_manifest, write_table, Format, Manifest, Table, Value};
pub use sweep::{run_sweep, CellResult, SweepResult, TraceRecord};

use thiserror::Error;

use crate::forcing::ForcingError;
use crate::noise::NoiseError;
use crate::sde::SdeError;
use crate::solver::SolverError;
use crate::spectral::SpectralError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("output error: {0}")]
    Output(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl HarnessError {
    /// 1 for configuration problems, 2 for everything that fails while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}

impl From<SpectralError> for HarnessError {
    fn from(e: SpectralError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<NoiseError> for HarnessError {
    fn from(e: NoiseError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<ForcingError> for HarnessError {
    fn from(e: ForcingError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<SolverError> for HarnessError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Config(_)
            | SolverError::InitialOutOfDomain(_)
            | SolverError::FactorizationExponent { .. }
            | SolverError::Spectral(_)
            | SolverError::Noise(_)
            | SolverError::Forcing(_) => HarnessError::Config(e.to_string()),
            _ => HarnessError::Runtime(e.to_string()),
        }
    }
}

impl From<SdeError> for HarnessError {
    fn from(e: SdeError) -> Self {
        match e {
            SdeError::Quadrature { .. } => HarnessError::Runtime(e.to_string()),
            _ => HarnessError::Config(e.to_string()),
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key derived from a cell's parameter values, so a cell keeps its seeds when
/// other cells are added to or removed from the grid.
pub fn cell_key(cell: &Cell) -> u64 {
    [cell.beta, cell.gamma, cell.theta]
        .iter()
        .fold(0x5eed_ce11u64, |h, v| splitmix64(h ^ v.to_bits()))
}

pub fn trajectory_seed(master: u64, key: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ key) ^ trial)
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn binomial_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Least-squares slope of `ln y` against `ln x` over points with positive values.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(&x, &y)| x > 0.0 && y > 0.0)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn seeds_depend_on_cell_values_not_position() {
        let a = Cell { beta: 1.0, gamma: 0.0, theta: 0.51 };
        let b = Cell { beta: 2.0, gamma: 0.0, theta: 0.51 };
        assert_ne!(cell_key(&a), cell_key(&b));
        assert_eq!(cell_key(&a), cell_key(&a.clone()));
        let s: Vec<u64> = (0..100).map(|t| trajectory_seed(7, cell_key(&a), t)).collect();
        let mut u = s.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), 100);
        assert_ne!(trajectory_seed(7, cell_key(&a), 0), trajectory_seed(8, cell_key(&a), 0));
    }

    #[test]
    fn wilson_reference_values() {
        // 10/100 at z = 1.96
        let (lo, hi) = wilson_interval(10, 100, 1.96);
        assert_abs_diff_eq!(lo, 0.05523, epsilon = 1e-4);
        assert_abs_diff_eq!(hi, 0.17437, epsilon = 1e-4);
        let (lo, hi) = wilson_interval(0, 50, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
    }

    #[test]
    fn quantiles_and_slopes() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&d, 0.5), Some(2.5));
        assert_eq!(quantile(&d, 0.0), Some(1.0));
        assert_eq!(quantile(&[], 0.5), None);
        let xs = [1e-3, 1e-2, 1e-1];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert_abs_diff_eq!(loglog_slope(&xs, &ys).unwrap(), 1.5, epsilon = 1e-12);
        assert_eq!(loglog_slope(&xs, &[0.0, 0.0, 1.0]), None);
    }

    #[test]
    fn standard_error_scaling() {
        let a = binomial_se(0.3, 1000);
        let b = binomial_se(0.3, 2000);
        assert_abs_diff_eq!(a / b, 2f64.sqrt(), epsilon = 1e-12);
    }
}
