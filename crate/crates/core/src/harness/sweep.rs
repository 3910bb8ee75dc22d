use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Cell, ExperimentConfig};
use super::output::{Table, Value};
use super::{binomial_se, cell_key, quantile, trajectory_seed, wilson_interval, HarnessError};
use crate::solver::{run_trajectory, TrajectoryConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub cell: Cell,
    pub eta: f64,
    pub margin: f64,
    pub satisfied: bool,
    pub trials: usize,
    pub blowups: usize,
    pub completed: usize,
    pub failures: usize,
    /// `blowups / (blowups + completed)`.
    pub frequency: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub std_error: f64,
    pub min_e_mean: Option<f64>,
    pub min_e_q10: Option<f64>,
    pub min_e_q50: Option<f64>,
    pub min_e_q90: Option<f64>,
    /// Mean `T_n` over trajectories that crossed level `n`, for `n = 1..=max_level`.
    pub mean_crossing: Vec<Option<f64>>,
    pub failure_messages: Vec<String>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub cell: usize,
    pub trial: usize,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub max_level: u32,
    pub rows: Vec<CellResult>,
    pub traces: Vec<TraceRecord>,
}

struct Outcome {
    blew_up: bool,
    min_distance: f64,
    crossings: Vec<Option<f64>>,
    trace: Option<(Vec<f64>, Vec<f64>)>,
}

/// Runs `config.trials` trajectories in every cell. Trajectories run in
/// parallel; results are gathered in trial order and reduced sequentially, so
/// the output depends only on the configuration and master seed.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    config.validate()?;
    let basis = config.basis()?;
    let initial = config.initial.build(&basis)?;
    let max_level = config.solver.max_level;
    let keep_traces = config.output.traces;
    let mut rows = Vec::new();
    let mut traces = Vec::new();

    for (index, cell) in config.cells().iter().enumerate() {
        let started = Instant::now();
        let (noise, forcing, margin, satisfied) = config.cell_model(cell)?;
        let traj = TrajectoryConfig {
            basis: &basis,
            noise: &noise,
            forcing,
            initial: initial.clone(),
            solver: config.solver.clone(),
        };
        let key = cell_key(cell);
        let outcomes: Vec<Result<Outcome, String>> = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let seed = trajectory_seed(config.seed, key, trial as u64);
                run_trajectory(&traj, seed)
                    .map(|r| Outcome {
                        blew_up: r.status.is_blowup(),
                        min_distance: r.min_distance,
                        crossings: r.crossings,
                        trace: keep_traces.then(|| (r.times, r.distances)),
                    })
                    .map_err(|e| e.to_string())
            })
            .collect();

        let mut blowups = 0;
        let mut completed = 0;
        let mut failure_messages = Vec::new();
        let mut min_e = Vec::new();
        let mut crossing_sum = vec![0.0; max_level as usize];
        let mut crossing_count = vec![0usize; max_level as usize];
        for (trial, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(o) => {
                    if o.blew_up {
                        blowups += 1;
                    } else {
                        completed += 1;
                    }
                    min_e.push(o.min_distance);
                    for (n, t) in o.crossings.iter().enumerate() {
                        if let Some(t) = t {
                            crossing_sum[n] += t;
                            crossing_count[n] += 1;
                        }
                    }
                    if let Some((times, distances)) = o.trace {
                        traces.push(TraceRecord {
                            cell: index,
                            trial,
                            times,
                            distances,
                        });
                    }
                }
                Err(msg) => failure_messages.push(format!("trial {trial}: {msg}")),
            }
        }
        let failures = failure_messages.len();
        let decided = blowups + completed;
        let frequency = if decided == 0 {
            f64::NAN
        } else {
            blowups as f64 / decided as f64
        };
        let (ci_low, ci_high) = wilson_interval(blowups, decided, 1.96);
        min_e.sort_by(|a, b| a.total_cmp(b));
        let min_e_mean = (!min_e.is_empty()).then(|| min_e.iter().sum::<f64>() / min_e.len() as f64);
        rows.push(CellResult {
            cell: *cell,
            eta: noise.eta(),
            margin,
            satisfied,
            trials: config.trials,
            blowups,
            completed,
            failures,
            frequency,
            ci_low,
            ci_high,
            std_error: binomial_se(frequency, decided),
            min_e_mean,
            min_e_q10: quantile(&min_e, 0.1),
            min_e_q50: quantile(&min_e, 0.5),
            min_e_q90: quantile(&min_e, 0.9),
            mean_crossing: crossing_sum
                .iter()
                .zip(&crossing_count)
                .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
                .collect(),
            failure_messages,
            runtime_secs: started.elapsed().as_secs_f64(),
        });
    }
    Ok(SweepResult {
        max_level,
        rows,
        traces,
    })
}

impl SweepResult {
    /// Parameters first, then statistics. Runtimes are left to the manifest so
    /// the table is reproducible byte for byte.
    pub fn table(&self) -> Table {
        let mut columns: Vec<String> = [
            "beta", "gamma", "theta", "eta", "margin", "condition", "trials", "blowups",
            "completed", "failures", "frequency", "ci_low", "ci_high", "std_error", "min_e_mean",
            "min_e_q10", "min_e_q50", "min_e_q90",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        columns.extend((1..=self.max_level).map(|n| format!("mean_t{n}")));
        let mut table = Table {
            columns,
            rows: Vec::new(),
        };
        for r in &self.rows {
            let mut row: Vec<Value> = vec![
                r.cell.beta.into(),
                r.cell.gamma.into(),
                r.cell.theta.into(),
                r.eta.into(),
                r.margin.into(),
                r.satisfied.into(),
                r.trials.into(),
                r.blowups.into(),
                r.completed.into(),
                r.failures.into(),
                r.frequency.into(),
                r.ci_low.into(),
                r.ci_high.into(),
                r.std_error.into(),
                r.min_e_mean.into(),
                r.min_e_q10.into(),
                r.min_e_q50.into(),
                r.min_e_q90.into(),
            ];
            row.extend(r.mean_crossing.iter().map(|&m| Value::from(m)));
            table.push(row);
        }
        table
    }

    /// One row per recorded sample: `cell, trial, time, e`.
    pub fn trace_table(&self) -> Table {
        let mut t = Table::new(["cell", "trial", "time", "e"]);
        for tr in &self.traces {
            for (&time, &e) in tr.times.iter().zip(&tr.distances) {
                t.push(vec![tr.cell.into(), tr.trial.into(), time.into(), e.into()]);
            }
        }
        t
    }
}
