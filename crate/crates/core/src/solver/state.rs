use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::scalar::Real;
use crate::spectral::{sup_norm, SpectralBasis};

/// Solution at one time: grid values, sine coefficients and the distance
/// `e = 1 - sup|u|` to the singular boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState<T> {
    pub time: T,
    pub values: Vec<T>,
    pub modes: Vec<T>,
    pub sup_norm: T,
    pub distance: T,
}

impl<T: Real> FieldState<T> {
    /// Projects grid data onto the basis and records the band-limited field.
    pub fn from_grid(basis: &SpectralBasis<T>, values: &[T], time: T) -> Result<Self, SolverError> {
        let modes = basis.to_modes(values)?;
        Self::from_modes(basis, modes, time)
    }

    pub fn from_modes(basis: &SpectralBasis<T>, modes: Vec<T>, time: T) -> Result<Self, SolverError> {
        let values = basis.to_grid(&modes)?;
        let sup = sup_norm(&values);
        if !(sup < T::one()) {
            return Err(SolverError::InitialOutOfDomain(sup.as_f64()));
        }
        Ok(Self {
            time,
            values,
            modes,
            sup_norm: sup,
            distance: T::one() - sup,
        })
    }
}

/// Initial data families. Every profile is projected onto the basis and then
/// rescaled so the grid sup-norm equals `peak` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialProfile {
    /// `peak · sin(πx)`.
    ScaledFirstMode { peak: f64 },
    /// Flat-topped bump `tanh(4 sin πx) / tanh 4`, scaled to `peak`.
    Plateau { peak: f64 },
    /// Explicit grid values, used as given.
    Grid { values: Vec<f64> },
}

impl InitialProfile {
    pub fn build<T: Real>(&self, basis: &SpectralBasis<T>) -> Result<FieldState<T>, SolverError> {
        let shape: Vec<T> = match self {
            InitialProfile::ScaledFirstMode { .. } => basis
                .grid()
                .iter()
                .map(|&x| (T::PI() * x).sin())
                .collect(),
            InitialProfile::Plateau { .. } => {
                let s = T::lit(4.0);
                basis
                    .grid()
                    .iter()
                    .map(|&x| (s * (T::PI() * x).sin()).tanh() / s.tanh())
                    .collect()
            }
            InitialProfile::Grid { values } => {
                if values.len() != basis.grid_size() {
                    return Err(SolverError::Config(format!(
                        "initial grid has {} values, basis grid has {}",
                        values.len(),
                        basis.grid_size()
                    )));
                }
                let v: Vec<T> = values.iter().map(|&v| T::lit(v)).collect();
                return FieldState::from_grid(basis, &v, T::zero());
            }
        };
        let peak = match self {
            InitialProfile::ScaledFirstMode { peak } | InitialProfile::Plateau { peak } => *peak,
            InitialProfile::Grid { .. } => unreachable!(),
        };
        if !(0.0..1.0).contains(&peak) {
            return Err(SolverError::InitialOutOfDomain(peak));
        }
        let mut modes = basis.to_modes(&shape)?;
        let raw = basis.to_grid(&modes)?;
        let scale = T::lit(peak) / sup_norm(&raw);
        modes.iter_mut().for_each(|c| *c = *c * scale);
        FieldState::from_modes(basis, modes, T::zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn profiles_hit_requested_peak() {
        let basis = SpectralBasis::<f64>::new(16, 64).unwrap();
        for profile in [
            InitialProfile::ScaledFirstMode { peak: 0.8 },
            InitialProfile::Plateau { peak: 0.8 },
        ] {
            let s = profile.build(&basis).unwrap();
            assert_abs_diff_eq!(s.sup_norm, 0.8, epsilon = 1e-14);
            assert_abs_diff_eq!(s.distance, 0.2, epsilon = 1e-14);
        }
    }

    #[test]
    fn first_mode_profile_is_single_mode() {
        let basis = SpectralBasis::<f64>::new(8, 32).unwrap();
        let s = InitialProfile::ScaledFirstMode { peak: 0.5 }.build(&basis).unwrap();
        assert!(s.modes[1..].iter().all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn rejects_data_outside_domain() {
        let basis = SpectralBasis::<f64>::new(4, 8).unwrap();
        assert!(InitialProfile::Plateau { peak: 1.0 }.build(&basis).is_err());
        assert!(InitialProfile::Grid { values: vec![0.0; 3] }.build(&basis).is_err());
        assert!(InitialProfile::Grid { values: vec![1.5; 8] }.build(&basis).is_err());
    }
}
