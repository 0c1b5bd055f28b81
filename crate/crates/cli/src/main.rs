//! `erfi`: train, evaluate and stress-test locomotion policies.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime
//! failure, 3 validation-suite failure.

mod commands;
mod config;
mod output;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "erfi", version, about = "Torque-injection locomotion lab on a planar quadruped")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// INI configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration value; repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Master seed [env: ERFI_SEED].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores [env: ERFI_THREADS].
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run directory for outputs.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a policy; writes a checkpoint and its training curve.
    Train {
        /// none, rfi, rao, erfi-c or erfi-50.
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Run success-criterion trials of one policy at a single condition.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        policy: PathBuf,
        /// Perturbation to apply, e.g. FRICTION_MU.
        #[arg(long)]
        param: Option<String>,
        /// Perturbation value; defaults to the training condition.
        #[arg(long)]
        value: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Sweep one perturbation over a grid for one or more policies.
    Sweep {
        /// `ID=PATH` or `PATH`; repeatable.
        #[arg(long = "policy", required = true, value_name = "[ID=]PATH")]
        policies: Vec<String>,
        #[arg(long)]
        param: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Single-joint position step under torque injection.
    StepResponse {
        /// none, rfi, rao or erfi-c.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Regenerate SVG plots from CSV outputs.
    Plot {
        #[arg(required = true, value_name = "CSV")]
        inputs: Vec<PathBuf>,
    },
    /// Run the numerical invariant suite.
    Validate,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self {
            code: 1,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 2, error }
    }
}

fn flag_overrides(cli: &Cli) -> Result<Vec<(String, String)>, ConfigError> {
    let mut flags = Vec::new();
    let c = &cli.common;
    if let Some(v) = c.seed {
        flags.push(("run.seed".to_string(), v.to_string()));
    }
    if let Some(v) = c.threads {
        flags.push(("run.threads".into(), v.to_string()));
    }
    if let Some(v) = &c.out {
        flags.push(("run.output_dir".into(), v.display().to_string()));
    }
    match &cli.command {
        Command::Train {
            strategy,
            iterations,
        } => {
            if let Some(s) = strategy {
                flags.push(("injection.strategy".into(), s.clone()));
            }
            if let Some(n) = iterations {
                flags.push(("trainer.iterations".into(), n.to_string()));
            }
        }
        Command::Evaluate { param, trials, .. } | Command::Sweep { param, trials, .. } => {
            if let Some(p) = param {
                flags.push(("sweep.param".into(), p.clone()));
            }
            if let Some(n) = trials {
                flags.push(("sweep.trials".into(), n.to_string()));
            }
        }
        Command::StepResponse { mode: Some(m) } => {
            flags.push(("step_response.mode".into(), m.clone()));
        }
        _ => {}
    }
    // Explicit `--set` assignments come last and win over the shorthands.
    for s in &c.set {
        let (k, v) = s.split_once('=').ok_or_else(|| ConfigError {
            file: None,
            line: None,
            key: None,
            message: format!("--set expects SECTION.KEY=VALUE, got `{s}`"),
        })?;
        flags.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(flags)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let env = [
        ("ERFI_SEED", "run.seed", std::env::var("ERFI_SEED").ok()),
        ("ERFI_THREADS", "run.threads", std::env::var("ERFI_THREADS").ok()),
    ];
    let flags = flag_overrides(&cli)?;
    let config = RunConfig::load(cli.common.config.as_deref(), &env, &flags)?;
    let threads = config.threads();
    let go = move || match cli.command {
        Command::Train { .. } => commands::train(&config),
        Command::Evaluate { policy, value, .. } => commands::evaluate(&config, &policy, value),
        Command::Sweep { policies, .. } => commands::sweep(&config, &policies),
        Command::StepResponse { .. } => commands::step_response(&config),
        Command::Plot { inputs } => commands::plot(&inputs, cli.common.out.as_deref()),
        Command::Validate => commands::validate(),
    };
    if threads > 0 {
        erfi_core::par::with_threads(threads, go)
    } else {
        go()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
