use rayon::prelude::*;
use serde::Serialize;

use super::config::{Cell, ExperimentConfig};
use super::output::{Table, Value};
use super::{cell_key, loglog_slope, trajectory_seed, wilson_interval, HarnessError};
use crate::bounds::lemma_level;
use crate::solver::{run_trajectory, LadderDirection, LadderEvent, TrajectoryConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderProbeRow {
    pub epsilon: f64,
    pub events: usize,
    /// Arrivals at `3^{-n}` followed by a drop to `3^{-(n+1)}` within `epsilon`.
    pub quick_drops: usize,
    pub frequency: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub inconclusive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderProbe {
    pub level: u32,
    pub trajectories: usize,
    pub failures: usize,
    pub events: usize,
    /// Drop frequency with no time constraint.
    pub drop_frequency: f64,
    pub rows: Vec<LadderProbeRow>,
    pub slope: Option<f64>,
    /// Slope exceeds the configured threshold.
    pub slope_flag: bool,
}

/// Gap to the next ladder event after each arrival at `level`; `None` marks an
/// arrival followed by a climb or by the end of the run.
fn drop_times(events: &[LadderEvent<f64>], level: u32) -> Vec<Option<f64>> {
    events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.level == level)
        .map(|(i, e)| {
            events.get(i + 1).and_then(|next| {
                (next.direction == LadderDirection::Down && next.level == level + 1)
                    .then(|| next.time - e.time)
            })
        })
        .collect()
}

/// Estimates `P(e(τ_{k+1}) = e(τ_k)/3 and τ_{k+1} - τ_k < ε)` over ladder
/// events starting at `e(τ_k) = 3^{-level}`, using the base forcing and noise.
pub fn ladder_decay_probe(
    config: &ExperimentConfig,
    level: u32,
    epsilons: &[f64],
) -> Result<LadderProbe, HarnessError> {
    config.validate()?;
    let base = lemma_level(config.forcing.c0);
    if level <= base {
        return Err(HarnessError::Config(format!(
            "ladder level must be at least N + 1 = {}",
            base + 1
        )));
    }
    if level >= config.solver.max_level {
        return Err(HarnessError::Config(format!(
            "ladder level must be below the cutoff level {}",
            config.solver.max_level
        )));
    }
    if epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(HarnessError::Config("epsilons must be positive".into()));
    }
    let basis = config.basis()?;
    let cell = Cell {
        beta: config.forcing.beta,
        gamma: config.forcing.gamma,
        theta: config.noise.theta,
    };
    let (noise, forcing, _, _) = config.cell_model(&cell)?;
    let traj = TrajectoryConfig {
        basis: &basis,
        noise: &noise,
        forcing,
        initial: config.initial.build(&basis)?,
        solver: config.solver.clone(),
    };
    let key = cell_key(&cell) ^ 0x1add_e5u64;
    let per_run: Vec<Option<Vec<Option<f64>>>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            run_trajectory(&traj, trajectory_seed(config.seed, key, trial as u64))
                .ok()
                .map(|r| drop_times(&r.ladder, level))
        })
        .collect();
    let failures = per_run.iter().filter(|r| r.is_none()).count();
    let gaps: Vec<Option<f64>> = per_run.into_iter().flatten().flatten().collect();
    let events = gaps.len();
    let drops = gaps.iter().filter(|g| g.is_some()).count();

    let mut sorted_eps = epsilons.to_vec();
    sorted_eps.sort_by(|a, b| a.total_cmp(b));
    let rows: Vec<LadderProbeRow> = sorted_eps
        .iter()
        .map(|&eps| {
            let quick = gaps.iter().filter(|g| g.is_some_and(|d| d < eps)).count();
            let (ci_low, ci_high) = wilson_interval(quick, events, 1.96);
            LadderProbeRow {
                epsilon: eps,
                events,
                quick_drops: quick,
                frequency: if events == 0 { f64::NAN } else { quick as f64 / events as f64 },
                ci_low,
                ci_high,
                inconclusive: events < config.ladder.min_events,
            }
        })
        .collect();
    let usable: Vec<&LadderProbeRow> = rows.iter().filter(|r| !r.inconclusive).collect();
    let slope = loglog_slope(
        &usable.iter().map(|r| r.epsilon).collect::<Vec<_>>(),
        &usable.iter().map(|r| r.frequency).collect::<Vec<_>>(),
    );
    Ok(LadderProbe {
        level,
        trajectories: config.trials,
        failures,
        events,
        drop_frequency: if events == 0 { f64::NAN } else { drops as f64 / events as f64 },
        rows,
        slope,
        slope_flag: slope.is_some_and(|s| s > config.thresholds.min_slope),
    })
}

impl LadderProbe {
    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "level", "epsilon", "events", "quick_drops", "frequency", "ci_low", "ci_high",
            "inconclusive",
        ]);
        for r in &self.rows {
            t.push(vec![
                self.level.into(),
                r.epsilon.into(),
                r.events.into(),
                r.quick_drops.into(),
                r.frequency.into(),
                r.ci_low.into(),
                r.ci_high.into(),
                Value::Bool(r.inconclusive),
            ]);
        }
        t
    }
}
