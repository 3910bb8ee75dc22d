//! Deterministic growth envelope for the distance `e(t)` and trajectory audits against it.

use serde::Serialize;

use crate::forcing::ForcingSpec;
use crate::scalar::{third_power, Real};
use crate::solver::TrajectoryRecord;

/// Minimal `N ≥ 1` with `2 · 3^{-N} < 1 - c0`.
pub fn lemma_level<T: Real>(c0: T) -> u32 {
    let gap = T::one() - c0;
    let mut n = 1;
    while !(T::lit(2.0) * third_power::<T>(n) < gap) && n < 64 {
        n += 1;
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeSpec<T> {
    pub e0: T,
    pub beta: T,
    pub drift_scale: T,
    pub level: u32,
}

impl<T: Real> EnvelopeSpec<T> {
    pub fn new(e0: T, forcing: &ForcingSpec<T>) -> Self {
        Self {
            e0,
            beta: forcing.beta(),
            drift_scale: forcing.params().drift_scale,
            level: lemma_level(forcing.c0()),
        }
    }

    fn rate(&self) -> T {
        self.drift_scale * T::lit(0.4).powf(self.beta) * (T::one() + self.beta)
    }

    /// `(3/4) (e0^{β+1} + K (2/5)^β (1+β) t)^{1/(β+1)}`.
    pub fn envelope(&self, t: T) -> T {
        let p = self.beta + T::one();
        T::lit(0.75) * (self.e0.powf(p) + self.rate() * t).powf(p.recip())
    }

    /// `K_β = (3/4) (K (2/5)^β (1+β))^{1/(β+1)}`, so `envelope(t) > K_β t^{1/(β+1)}`.
    pub fn k_beta(&self) -> T {
        T::lit(0.75) * self.rate().powf((self.beta + T::one()).recip())
    }

    /// Same spec re-based at a new starting distance.
    pub fn rebased(&self, e0: T) -> Self {
        Self { e0, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowAudit<T> {
    pub start: T,
    pub end: T,
    pub samples: usize,
    pub violations: usize,
    /// Smallest `e(t) - envelope(t - start)` in the window.
    pub min_margin: T,
    /// Time of the worst margin.
    pub worst_time: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport<T> {
    pub level: u32,
    pub windows: Vec<WindowAudit<T>>,
    pub skipped_windows: usize,
}

impl<T: Real> AuditReport<T> {
    pub fn violations(&self) -> usize {
        self.windows.iter().map(|w| w.violations).sum()
    }

    /// No window satisfied the hypotheses; the check passes vacuously.
    pub fn is_vacuous(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }

    pub fn min_margin(&self) -> Option<T> {
        self.windows
            .iter()
            .map(|w| w.min_margin)
            .reduce(|a, b| a.min(b))
    }
}

/// Audits sampled `e(t)` against the envelope on each maximal window where
/// `sup|Z| ≤ e/3` and `e ≤ 3^{-N}` hold at every sample. Each window is
/// treated as a fresh instance with `e0` taken at its first sample; windows
/// with fewer than two samples are skipped.
///
/// `convolution_sup` defaults to the record's own tracked values; a record
/// without them is audited as if `Z ≡ 0`.
pub fn audit<T: Real>(
    record: &TrajectoryRecord<T>,
    convolution_sup: Option<&[T]>,
    forcing: &ForcingSpec<T>,
) -> AuditReport<T> {
    let z = convolution_sup.or(record.convolution_sup.as_deref());
    let base = EnvelopeSpec::new(T::one(), forcing);
    // rounding slack so a state sitting exactly on 3^{-N} counts as inside
    let ceiling = third_power::<T>(base.level) * (T::one() + T::lit(1e-9));
    let n = record.times.len().min(record.distances.len());
    let holds = |i: usize| {
        let e = record.distances[i];
        let z_ok = z.map_or(true, |z| z.get(i).is_some_and(|&zi| zi <= e / T::lit(3.0)));
        e > T::zero() && e <= ceiling && z_ok
    };

    let mut report = AuditReport {
        level: base.level,
        windows: Vec::new(),
        skipped_windows: 0,
    };
    let mut i = 0;
    while i < n {
        if !holds(i) {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && holds(i) {
            i += 1;
        }
        if i - start < 2 {
            report.skipped_windows += 1;
            continue;
        }
        let t0 = record.times[start];
        let spec = base.rebased(record.distances[start]);
        let mut w = WindowAudit {
            start: t0,
            end: record.times[i - 1],
            samples: i - start,
            violations: 0,
            min_margin: T::infinity(),
            worst_time: t0,
        };
        for s in start..i {
            let margin = record.distances[s] - spec.envelope(record.times[s] - t0);
            if margin < T::zero() {
                w.violations += 1;
            }
            if margin < w.min_margin {
                w.min_margin = margin;
                w.worst_time = record.times[s];
            }
        }
        report.windows.push(w);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::ForcingParams;
    use crate::solver::TerminalStatus;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn record(times: Vec<f64>, distances: Vec<f64>, z: Option<Vec<f64>>) -> TrajectoryRecord<f64> {
        TrajectoryRecord {
            seed: 0,
            config_digest: None,
            status: TerminalStatus::Completed,
            final_time: *times.last().unwrap(),
            steps: times.len() as u64,
            min_distance: distances.iter().copied().fold(f64::INFINITY, f64::min),
            times,
            distances,
            convolution_sup: z,
            fields: None,
            crossings: vec![],
            ladder: vec![],
            path: None,
            final_state: None,
        }
    }

    fn forcing(beta: f64) -> ForcingSpec<f64> {
        ForcingSpec::new(ForcingParams::new(beta, 0.0)).unwrap()
    }

    #[test]
    fn level_from_core() {
        assert_eq!(lemma_level(0.5), 2);
        assert_eq!(lemma_level(0.0), 1);
        assert_eq!(lemma_level(0.9), 3);
        assert_eq!(lemma_level(0.4), 2);
    }

    #[test]
    fn envelope_closed_form() {
        let spec = EnvelopeSpec::new(1.0 / 9.0, &forcing(2.0));
        assert_abs_diff_eq!(spec.envelope(0.0), 0.75 / 9.0, epsilon = 1e-15);
        let t = 0.3;
        let expect = 0.75 * ((1.0f64 / 9.0).powi(3) + 0.16 * 3.0 * t).powf(1.0 / 3.0);
        assert_abs_diff_eq!(spec.envelope(t), expect, epsilon = 1e-15);
        let h = 1e-7;
        assert!(spec.envelope(h) > spec.envelope(0.0));
    }

    proptest! {
        #[test]
        fn envelope_dominates_power_law(beta in 0.1f64..8.0, e0 in 1e-6f64..0.3, t in 1e-8f64..10.0) {
            let spec = EnvelopeSpec::new(e0, &forcing(beta));
            // equality up to rounding once the e0 term underflows
            prop_assert!(spec.envelope(t) >= spec.k_beta() * t.powf(1.0 / (beta + 1.0)) * (1.0 - 1e-12));
        }

        #[test]
        fn envelope_monotone_in_time_and_scale(beta in 0.1f64..8.0, e0 in 1e-6f64..0.3, t in 0.0f64..5.0, dt in 1e-6f64..1.0) {
            let spec = EnvelopeSpec::new(e0, &forcing(beta));
            prop_assert!(spec.envelope(t + dt) > spec.envelope(t));
            let stronger = EnvelopeSpec { drift_scale: 2.0, ..spec };
            prop_assert!(stronger.envelope(t + dt) >= spec.envelope(t + dt));
        }
    }

    #[test]
    fn audit_finds_windows_and_violations() {
        let f = forcing(1.0);
        let times: Vec<f64> = (0..6).map(|i| i as f64 * 1e-4).collect();
        // e(0)=1/9 inside; a sudden collapse at sample 2 violates the envelope;
        // sample 3 leaves the window; 4..5 form a second window.
        let distances = vec![1.0 / 9.0, 0.1, 0.01, 0.5, 0.1, 0.11];
        let r = audit(&record(times, distances, None), None, &f);
        assert_eq!(r.windows.len(), 2);
        assert_eq!(r.windows[0].samples, 3);
        assert_eq!(r.windows[0].violations, 1);
        assert!(r.windows[0].min_margin < 0.0);
        assert_eq!(r.windows[0].worst_time, 2e-4);
        assert_eq!(r.windows[1].start, 4e-4);
        assert!(!r.passed());
    }

    #[test]
    fn large_noise_makes_audit_vacuous() {
        let f = forcing(1.0);
        let times = vec![0.0, 0.1, 0.2];
        let distances = vec![0.1, 0.1, 0.1];
        let r = audit(&record(times, distances, Some(vec![0.5; 3])), None, &f);
        assert!(r.is_vacuous());
        assert!(r.passed());
        assert_eq!(r.min_margin(), None);
    }

    #[test]
    fn single_sample_windows_are_skipped() {
        let f = forcing(1.0);
        let r = audit(
            &record(vec![0.0, 0.1, 0.2], vec![0.5, 0.1, 0.5], None),
            None,
            &f,
        );
        assert!(r.is_vacuous());
        assert_eq!(r.skipped_windows, 1);
    }

    #[test]
    fn audit_is_pure() {
        let f = forcing(2.0);
        let rec = record(vec![0.0, 0.1, 0.2], vec![0.1, 0.105, 0.11], Some(vec![0.0; 3]));
        assert_eq!(audit(&rec, None, &f), audit(&rec, None, &f));
    }
}
