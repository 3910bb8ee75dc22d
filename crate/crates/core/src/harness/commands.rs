use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;

use super::config::{Cell, ExperimentConfig, FactorizationConfig, NoiseKind};
use super::ladder::ladder_decay_probe;
use super::output::{prepare_out_dir, write_manifest, write_table, Format, Manifest, Table, Value};
use super::sweep::run_sweep;
use super::{cell_key, trajectory_seed, HarnessError};
use crate::bounds::{audit, lemma_level};
use crate::forcing::check_condition;
use crate::noise::{validate_spectrum, NoiseSpectrum, NoiseStream};
use crate::scalar::third_power;
use crate::sde::{exit_prob_mc, exit_prob_scale, SdeProblem};
use crate::solver::{
    convolution_discrepancy, run_trajectory, stochastic_convolution_direct,
    stochastic_convolution_factorized, BrownianPath, InitialProfile, LadderDirection, NoisePath,
    TrajectoryConfig,
};
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    Sweep,
    SdeExit,
    CheckCondition,
    VerifyLemma,
    FactorizationCheck,
    LadderProbe,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::SdeExit => "sde-exit",
            Command::CheckCondition => "check-condition",
            Command::VerifyLemma => "verify-lemma",
            Command::FactorizationCheck => "factorization-check",
            Command::LadderProbe => "ladder-probe",
        }
    }
}

/// Tables produced by one command plus a summary for the manifest.
#[derive(Debug, Clone, Default)]
pub struct CommandReport {
    pub tables: Vec<(String, Table)>,
    pub summary: serde_json::Value,
    pub notes: Vec<String>,
}

/// Runs `command`, writing its tables and `manifest.json` into `out_dir`.
/// The directory is checked before any computation starts.
pub fn run_command(
    command: Command,
    config: &ExperimentConfig,
    conditions: Option<Vec<(f64, f64, f64)>>,
    out_dir: &Path,
    format: Format,
) -> Result<(CommandReport, Vec<PathBuf>), HarnessError> {
    prepare_out_dir(out_dir)?;
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let report = match command {
        Command::Simulate => simulate(config)?,
        Command::Sweep => sweep(config)?,
        Command::SdeExit => sde_exit(config)?,
        Command::CheckCondition => {
            let triples = match conditions {
                Some(t) => t,
                None => config_conditions(config)?,
            };
            check_condition_table(&triples)
        }
        Command::VerifyLemma => verify_lemma(config)?,
        Command::FactorizationCheck => factorization_check(&config.factorization, config.seed)?,
        Command::LadderProbe => ladder_probe(config)?,
    };
    let mut outputs = Vec::new();
    for (stem, table) in &report.tables {
        outputs.push(write_table(out_dir, stem, table, format)?);
    }
    let manifest = Manifest {
        tool: "srde".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.name().into(),
        config_digest: config.digest(),
        seed: config.seed,
        threads: rayon::current_num_threads(),
        started_unix,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        outputs: outputs
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        notes: report.notes.clone(),
        summary: report.summary.clone(),
    };
    outputs.push(write_manifest(out_dir, &manifest)?);
    Ok((report, outputs))
}

fn base_cell(config: &ExperimentConfig) -> Cell {
    Cell {
        beta: config.forcing.beta,
        gamma: config.forcing.gamma,
        theta: config.noise.theta,
    }
}

/// One trajectory at the base parameters with its full trace.
pub fn simulate(config: &ExperimentConfig) -> Result<CommandReport, HarnessError> {
    config.validate()?;
    let basis = config.basis()?;
    let cell = base_cell(config);
    let (noise, forcing, margin, satisfied) = config.cell_model(&cell)?;
    let mut solver = config.solver.clone();
    solver.track_convolution = true;
    let traj = TrajectoryConfig {
        basis: &basis,
        noise: &noise,
        forcing,
        initial: config.initial.build(&basis)?,
        solver,
    };
    let seed = trajectory_seed(config.seed, cell_key(&cell), 0);
    let record = run_trajectory(&traj, seed)?;

    let mut trace = Table::new(["time", "e", "sup_z"]);
    let z = record.convolution_sup.clone().unwrap_or_default();
    for (i, (&t, &e)) in record.times.iter().zip(&record.distances).enumerate() {
        trace.push(vec![t.into(), e.into(), z.get(i).copied().into()]);
    }
    let mut crossings = Table::new(["level", "time"]);
    for (n, t) in record.crossings.iter().enumerate() {
        crossings.push(vec![(n + 1).into(), (*t).into()]);
    }
    let mut ladder = Table::new(["time", "level", "e", "direction"]);
    for ev in &record.ladder {
        let dir = match ev.direction {
            LadderDirection::Down => "down",
            LadderDirection::Up => "up",
        };
        ladder.push(vec![ev.time.into(), ev.level.into(), ev.distance.into(), dir.into()]);
    }
    let diagnostics = validate_spectrum(&basis, &noise);
    let report = audit(&record, None, &forcing);
    Ok(CommandReport {
        tables: vec![
            ("trace".into(), trace),
            ("crossings".into(), crossings),
            ("ladder".into(), ladder),
        ],
        summary: json!({
            "trajectory_seed": seed,
            "status": record.status,
            "final_time": record.final_time,
            "steps": record.steps,
            "min_e": record.min_distance,
            "eta": noise.eta(),
            "condition_margin": margin,
            "condition_satisfied": satisfied,
            "audit_windows": report.windows.len(),
            "audit_violations": report.violations(),
        }),
        notes: diagnostics.warnings,
    })
}

pub fn sweep(config: &ExperimentConfig) -> Result<CommandReport, HarnessError> {
    let result = run_sweep(config)?;
    let mut tables = vec![("sweep".to_string(), result.table())];
    if config.output.traces {
        tables.push(("traces".into(), result.trace_table()));
    }
    let cells: Vec<serde_json::Value> = result
        .rows
        .iter()
        .map(|r| {
            json!({
                "beta": r.cell.beta,
                "gamma": r.cell.gamma,
                "theta": r.cell.theta,
                "runtime_secs": r.runtime_secs,
                "failures": r.failure_messages,
            })
        })
        .collect();
    Ok(CommandReport {
        tables,
        summary: json!({ "cells": cells }),
        notes: vec!["sweep design is this tool's own; the underlying theory prescribes no protocol".into()],
    })
}

pub fn sde_exit(config: &ExperimentConfig) -> Result<CommandReport, HarnessError> {
    let s = &config.sde;
    let mut t = Table::new([
        "beta", "gamma", "x0", "lower", "upper", "condition", "p_scale", "p_mc", "std_error",
        "hits_low", "hits_high", "over_budget", "z_score",
    ]);
    for &beta in &s.beta {
        for &gamma in &s.gamma {
            for &lower in &s.lower {
                let mut problem = SdeProblem::new(beta, gamma, s.x0, lower)?;
                problem.upper = s.upper;
                problem.validate()?;
                let p_scale = exit_prob_scale(&problem)?;
                let key = cell_key(&Cell { beta, gamma, theta: lower });
                let mc = exit_prob_mc(&problem, &s.monte_carlo, s.trials, trajectory_seed(config.seed, key, 0))?;
                let exited = mc.hits_low + mc.hits_high;
                // the reference value's own binomial spread, which stays positive when p_mc is 0 or 1
                let se_ref = (p_scale * (1.0 - p_scale) / exited.max(1) as f64).sqrt();
                let se = mc.std_error.max(se_ref);
                let z = if se > 0.0 { (mc.p_hat - p_scale) / se } else { 0.0 };
                t.push(vec![
                    beta.into(),
                    gamma.into(),
                    s.x0.into(),
                    lower.into(),
                    s.upper.into(),
                    (gamma + 1.0 < (beta + 1.0) / 2.0).into(),
                    p_scale.into(),
                    mc.p_hat.into(),
                    se.into(),
                    mc.hits_low.into(),
                    mc.hits_high.into(),
                    mc.over_budget.into(),
                    z.into(),
                ]);
            }
        }
    }
    Ok(CommandReport {
        tables: vec![("sde_exit".into(), t)],
        summary: json!({ "trials": s.trials }),
        notes: Vec::new(),
    })
}

fn config_conditions(config: &ExperimentConfig) -> Result<Vec<(f64, f64, f64)>, HarnessError> {
    config
        .cells()
        .iter()
        .map(|c| {
            let eta = config.noise.build(1, Some(c.theta))?.eta();
            Ok((c.beta, c.gamma, eta))
        })
        .collect()
}

pub fn check_condition_table(triples: &[(f64, f64, f64)]) -> CommandReport {
    let mut t = Table::new(["beta", "gamma", "eta", "margin", "satisfied"]);
    for &(beta, gamma, eta) in triples {
        let c = check_condition(beta, gamma, eta);
        t.push(vec![beta.into(), gamma.into(), eta.into(), c.margin.into(), c.satisfied.into()]);
    }
    CommandReport {
        tables: vec![("condition".into(), t)],
        summary: serde_json::Value::Null,
        notes: Vec::new(),
    }
}

/// Envelope audits started at `e(0) = 3^{-N}`, without noise and with each configured small noise scale.
pub fn verify_lemma(config: &ExperimentConfig) -> Result<CommandReport, HarnessError> {
    config.validate()?;
    let basis = config.basis()?;
    let level = lemma_level(config.forcing.c0);
    let initial = InitialProfile::ScaledFirstMode {
        peak: 1.0 - third_power::<f64>(level),
    }
    .build(&basis)?;
    let mut t = Table::new([
        "beta", "noise_scale", "dt_base", "samples", "windows", "skipped", "violations",
        "min_margin", "min_e", "floor_ok", "vacuous",
    ]);
    let floor = third_power::<f64>(level + 1);
    let mut scales = vec![0.0];
    scales.extend(config.lemma.small_noise.iter().copied());
    for &beta in &config.lemma.beta {
        for &dt in &config.lemma.dt_base {
            for &scale in &scales {
                let noise = if scale == 0.0 || config.noise.preset == NoiseKind::Silent {
                    NoiseSpectrum::silent(basis.mode_count())
                } else {
                    config.noise.build(basis.mode_count(), None)?
                };
                let mut forcing_cfg = config.forcing.clone();
                if scale > 0.0 {
                    forcing_cfg.noise_scale = scale;
                }
                let forcing = forcing_cfg.build(beta, 0.0)?;
                let mut solver = config.solver.clone();
                solver.dt_base = dt;
                solver.t_end = config.lemma.t_end;
                solver.sample_every = 1;
                solver.track_convolution = true;
                let traj = TrajectoryConfig {
                    basis: &basis,
                    noise: &noise,
                    forcing,
                    initial: initial.clone(),
                    solver,
                };
                let key = cell_key(&Cell { beta, gamma: scale, theta: dt });
                let record = run_trajectory(&traj, trajectory_seed(config.seed, key, 0))?;
                let report = audit(&record, None, &forcing);
                t.push(vec![
                    beta.into(),
                    scale.into(),
                    dt.into(),
                    record.times.len().into(),
                    report.windows.len().into(),
                    report.skipped_windows.into(),
                    report.violations().into(),
                    report.min_margin().into(),
                    record.min_distance.into(),
                    (record.min_distance > floor).into(),
                    report.is_vacuous().into(),
                ]);
            }
        }
    }
    Ok(CommandReport {
        tables: vec![("lemma".into(), t)],
        summary: json!({ "level": level }),
        notes: Vec::new(),
    })
}

/// Smooth, time-dependent amplitude used for the frozen path.
fn frozen_sigma(horizon: f64) -> impl Fn(f64, f64) -> f64 {
    move |s, x| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * s / horizon).sin() * x * (1.0 - x)
}

/// Direct vs factorized stochastic convolution on one Brownian path at
/// successively finer time grids.
pub fn factorization_check(fc: &FactorizationConfig, seed: u64) -> Result<CommandReport, HarnessError> {
    if fc.steps == 0 || !(fc.horizon > 0.0) {
        return Err(HarnessError::Config("factorization check needs steps > 0 and horizon > 0".into()));
    }
    let basis = SpectralBasis::<f64>::new(fc.modes, 4 * fc.modes)?;
    let noise = NoiseSpectrum::trace_class(fc.modes);
    let finest = fc.steps << fc.refinements;
    let mut paths = vec![BrownianPath::sample(
        fc.modes,
        finest,
        fc.horizon / finest as f64,
        &mut NoiseStream::new(seed),
    )];
    for _ in 0..fc.refinements {
        let c = paths.last().expect("nonempty").coarsen()?;
        paths.push(c);
    }
    paths.reverse();
    let sigma = frozen_sigma(fc.horizon);
    let mut t = Table::new(["steps", "dt", "discrepancy", "observed_order"]);
    let mut prev: Option<f64> = None;
    for bm in &paths {
        let path = NoisePath::from_brownian(&basis, &noise, bm, &sigma)?;
        let direct = stochastic_convolution_direct(&path, &basis)?;
        let fact = stochastic_convolution_factorized(&path, &basis, fc.alpha, noise.eta())?;
        let gap = convolution_discrepancy(&direct, &fact, &basis)?;
        let order = prev.map(|p| (p / gap).log2());
        t.push(vec![bm.len().into(), bm.dt().into(), gap.into(), Value::from(order)]);
        prev = Some(gap);
    }
    Ok(CommandReport {
        tables: vec![("factorization".into(), t)],
        summary: json!({ "alpha": fc.alpha, "modes": fc.modes, "horizon": fc.horizon }),
        notes: Vec::new(),
    })
}

pub fn ladder_probe(config: &ExperimentConfig) -> Result<CommandReport, HarnessError> {
    let level = if config.ladder.level == 0 {
        lemma_level(config.forcing.c0) + 1
    } else {
        config.ladder.level
    };
    let probe = ladder_decay_probe(config, level, &config.ladder.epsilons)?;
    Ok(CommandReport {
        tables: vec![("ladder_probe".into(), probe.table())],
        summary: json!({
            "level": probe.level,
            "events": probe.events,
            "failures": probe.failures,
            "drop_frequency": probe.drop_frequency,
            "slope": probe.slope,
            "slope_above_threshold": probe.slope_flag,
            "threshold": config.thresholds.min_slope,
        }),
        notes: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.basis.modes = 8;
        c.basis.grid = 16;
        c.trials = 4;
        c.solver.t_end = 0.02;
        c.sde.trials = 100;
        c.sde.beta = vec![1.0];
        c.sde.gamma = vec![0.0];
        c.lemma.beta = vec![2.0];
        c.lemma.dt_base = vec![1e-3];
        c.lemma.t_end = 0.05;
        c.factorization.steps = 50;
        c
    }

    #[test]
    fn every_command_writes_tables_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let c = tiny();
        for cmd in [
            Command::Simulate,
            Command::Sweep,
            Command::SdeExit,
            Command::CheckCondition,
            Command::VerifyLemma,
            Command::FactorizationCheck,
        ] {
            let out = dir.path().join(cmd.name());
            let (_, files) = run_command(cmd, &c, None, &out, Format::Csv).unwrap();
            assert!(files.iter().any(|f| f.ends_with("manifest.json")), "{cmd:?}");
            assert!(files.len() >= 2);
        }
    }

    #[test]
    fn condition_table_matches_checker() {
        let r = check_condition_table(&[(3.0, 0.0, 0.5), (4.0, 0.0, 0.0)]);
        let t = &r.tables[0].1;
        assert_eq!(t.rows[0][3], Value::Float(0.0));
        assert_eq!(t.rows[0][4], Value::Bool(false));
        assert_eq!(t.rows[1][4], Value::Bool(true));
    }

    #[test]
    fn lemma_rows_report_no_violations_without_noise() {
        let r = verify_lemma(&tiny()).unwrap();
        let t = &r.tables[0].1;
        let noise = t.column("noise_scale").unwrap();
        let viol = t.column("violations").unwrap();
        let floor = t.column("floor_ok").unwrap();
        let clean = t.rows.iter().find(|row| row[noise] == Value::Float(0.0)).unwrap();
        assert_eq!(clean[viol], Value::Int(0));
        assert_eq!(clean[floor], Value::Bool(true));
    }
}
