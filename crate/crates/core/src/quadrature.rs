//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use thiserror::Error;

use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5] and the centre
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature<T> {
    pub value: T,
    pub error: T,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("quadrature did not converge: value {value:e}, error estimate {error:e} after {intervals} intervals")]
pub struct QuadratureError {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

fn kronrod<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = (b - a) / T::lit(2.0);
    let centre = (a + b) / T::lit(2.0);
    let fc = f(centre);
    let mut k = fc * T::lit(WGK[7]);
    let mut g = fc * T::lit(WG[3]);
    for i in 0..7 {
        let dx = half * T::lit(XGK[i]);
        let pair = f(centre - dx) + f(centre + dx);
        k = k + T::lit(WGK[i]) * pair;
        if i % 2 == 1 {
            g = g + T::lit(WG[i / 2]) * pair;
        }
    }
    (k * half, ((k - g) * half).abs())
}

/// Integrates `f` over `[a, b]`, bisecting the worst interval until the summed
/// error estimate is below `max(abs_tol, rel_tol · |value|)`.
pub fn integrate<T: Real, F: Fn(T) -> T>(
    f: F,
    a: T,
    b: T,
    abs_tol: T,
    rel_tol: T,
    max_intervals: usize,
) -> Result<Quadrature<T>, QuadratureError> {
    let (v, e) = kronrod(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let value = parts.iter().fold(T::zero(), |s, p| s + p.2);
        let error = parts.iter().fold(T::zero(), |s, p| s + p.3);
        if !value.is_finite() || !error.is_finite() {
            return Err(QuadratureError {
                value: value.as_f64(),
                error: error.as_f64(),
                intervals: parts.len(),
            });
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Quadrature {
                value,
                error,
                intervals: parts.len(),
            });
        }
        if parts.len() >= max_intervals {
            return Err(QuadratureError {
                value: value.as_f64(),
                error: error.as_f64(),
                intervals: parts.len(),
            });
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = (lo + hi) / T::lit(2.0);
        let (v1, e1) = kronrod(&f, lo, mid);
        let (v2, e2) = kronrod(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomials_are_exact() {
        let q = integrate(|x: f64| x.powi(12) - 3.0 * x.powi(7), 0.0, 1.0, 1e-14, 1e-14, 10).unwrap();
        assert_relative_eq!(q.value, 1.0 / 13.0 - 3.0 / 8.0, max_relative = 1e-13);
        assert_eq!(q.intervals, 1);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let q = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-10, 1e-10, 500).unwrap();
        assert_relative_eq!(q.value, 2.0, max_relative = 1e-8);
    }

    #[test]
    fn sharp_peak() {
        let q = integrate(|x: f64| (-1e4 * (x - 0.3).powi(2)).exp(), 0.0, 1.0, 1e-12, 1e-12, 500).unwrap();
        assert_relative_eq!(q.value, (std::f64::consts::PI / 1e4).sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn reports_non_convergence() {
        let err = integrate(|x: f64| 1.0 / x, 0.0, 1.0, 1e-12, 1e-12, 20).unwrap_err();
        assert!(err.intervals >= 20 || !err.value.is_finite());
    }
}
