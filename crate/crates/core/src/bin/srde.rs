use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use srde_lab::harness::{run_command, Command, ExperimentConfig, Format, HarnessError};

#[derive(Parser)]
#[command(name = "srde", version, about = "Constrained stochastic reaction-diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "SRDE_THREADS")]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Sub {
    /// One trajectory with its full trace, crossings and ladder events.
    Simulate(Common),
    /// Blow-up frequencies over the (beta, gamma, theta) grid.
    Sweep(Common),
    /// Exit probabilities of the scalar diffusion, quadrature against Monte Carlo.
    SdeExit(Common),
    /// Evaluate the no-blow-up condition.
    CheckCondition {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires_all = ["gamma", "eta"])]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Envelope audits without noise and with small noise.
    VerifyLemma(Common),
    /// Direct against factorized stochastic convolution under refinement.
    FactorizationCheck(Common),
    /// Quick-drop frequencies on the triadic ladder.
    LadderProbe(Common),
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let (command, common, conditions) = match cli.command {
        Sub::Simulate(c) => (Command::Simulate, c, None),
        Sub::Sweep(c) => (Command::Sweep, c, None),
        Sub::SdeExit(c) => (Command::SdeExit, c, None),
        Sub::CheckCondition {
            common,
            beta,
            gamma,
            eta,
        } => {
            let triple = match (beta, gamma, eta) {
                (Some(b), Some(g), Some(e)) => Some(vec![(b, g, e)]),
                _ => None,
            };
            (Command::CheckCondition, common, triple)
        }
        Sub::VerifyLemma(c) => (Command::VerifyLemma, c, None),
        Sub::FactorizationCheck(c) => (Command::FactorizationCheck, c, None),
        Sub::LadderProbe(c) => (Command::LadderProbe, c, None),
    };
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(HarnessError::Config("--threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| HarnessError::Runtime(format!("thread pool: {e}")))?;
    let (_, files) = pool.install(|| {
        run_command(command, &config, conditions, &common.out_dir, common.format)
    })?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("srde: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
