use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use episim::runtime::{analyze, replay, run_experiment, BackendConfig, ExperimentConfig, Mode, RunLog};

#[derive(Parser)]
#[command(name = "episim", version, about = "Round-based simulation of autonomous research agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Networked,
    Independent,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Simulation,
    External,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its JSONL log.
    Run {
        /// JSON or TOML experiment configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        /// Endpoint of the external backend.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute summary metrics from a run log.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the store state at a round barrier.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        round: u32,
    },
}

fn load_config(
    path: Option<PathBuf>,
    seed: Option<u64>,
    mode: Option<ModeArg>,
    backend: Option<BackendArg>,
    endpoint: Option<String>,
) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::load(&p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(m) = mode {
        config.mode = match m {
            ModeArg::Networked => Mode::Networked,
            ModeArg::Independent => Mode::Independent,
        };
    }
    match (backend, endpoint) {
        (Some(BackendArg::Simulation), _) => config.backend = BackendConfig::Simulation,
        (Some(BackendArg::External), endpoint) => {
            let endpoint = endpoint
                .or(match &config.backend {
                    BackendConfig::External { endpoint, .. } => Some(endpoint.clone()),
                    BackendConfig::Simulation => None,
                })
                .ok_or_else(|| episim::Error::Config("--backend external needs --endpoint".into()))?;
            config.backend = BackendConfig::External { endpoint, timeout_ms: 30_000, templates: None };
        }
        (None, Some(endpoint)) => match &mut config.backend {
            BackendConfig::External { endpoint: e, .. } => *e = endpoint,
            BackendConfig::Simulation => {
                return Err(episim::Error::Config("--endpoint requires --backend external".into()).into())
            }
        },
        (None, None) => {}
    }
    config.validate()?;
    Ok(config)
}

/// Print one JSON line; a closed stdout (e.g. piped into `head`) is not an error.
fn emit(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{value}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, mode, backend, endpoint, out } => {
            let config = load_config(config, seed, mode, backend, endpoint)?;
            let log = run_experiment(&config)?;
            log.save(&out).with_context(|| format!("writing {}", out.display()))?;
            let summary = serde_json::json!({
                "log": out,
                "records": log.len(),
                "outputs": log.outputs().count(),
                "accepted": log.papers().count(),
                "backend_errors": log.backend_errors().count(),
                "digest": log.digest(),
            });
            emit(&summary)?;
        }
        Command::Analyze { log, out } => {
            let log = RunLog::load(&log).with_context(|| format!("reading {}", log.display()))?;
            let report = analyze(&log)?;
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)
                .with_context(|| format!("writing {}", out.display()))?;
            emit(&serde_json::json!({
                "report": out,
                "accepted": report.accepted,
                "duplication_rate": report.duplication_rate,
                "coverage": report.coverage,
            }))?;
        }
        Command::Replay { log, round } => {
            let log = RunLog::load(&log).with_context(|| format!("reading {}", log.display()))?;
            let view = replay(&log, round)?;
            emit(&serde_json::json!({
                "barrier": round,
                "store_digest": view.digest(),
                "registry": view.profiles().collect::<Vec<_>>(),
                "archive": view.papers().collect::<Vec<_>>(),
            }))?;
        }
    }
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<episim::Error>())
        .map(|e| e.kind())
        .unwrap_or("error")
}

/// The error chain joined by ": ", skipping causes already quoted by their parent.
fn error_message(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|p| p.ends_with(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let body = serde_json::json!({ "error": error_kind(&err), "message": error_message(&err) });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
