//! `bhqt`: run lattice experiment protocols from configuration files.

mod output;
mod sweep;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use bhqt::protocols::{preset_text, run_protocol, ExperimentConfig, ProtocolKind, PRESET_NAMES};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use output::{PointOutcome, RunInfo};
use sweep::Setting;

#[derive(Debug, Parser)]
#[command(name = "bhqt", version, about = "Ancilla-controlled Bose-Hubbard lattice experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one protocol, optionally over a sweep of configuration values.
    Run(RunArgs),
    /// List the available protocols.
    ListProtocols {
        /// Emit the catalog as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration to start from when no file is given.
    #[arg(long, default_value = "seven_qubit")]
    preset: String,
    #[arg(long)]
    protocol: String,
    /// Output directory.
    #[arg(long, default_value = "bhqt-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shots: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override a configuration value. Comma lists outside brackets sweep
    /// the key; several swept keys form a cross product.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Run(bhqt::Error),
}

impl From<bhqt::Error> for CliError {
    fn from(e: bhqt::Error) -> Self {
        match e {
            bhqt::Error::Config(v) => CliError::Config(v),
            other => CliError::Run(other),
        }
    }
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Run(e) => match e {
                bhqt::Error::Domain(_) => "domain",
                bhqt::Error::Numeric(_) => "numeric",
                bhqt::Error::Capability(_) => "capability",
                bhqt::Error::ModelValidity(_) => "model-validity",
                bhqt::Error::Ambiguous(_) => "ambiguous",
                bhqt::Error::Config(_) => "config",
            },
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Run(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    fn record(&self) -> serde_json::Value {
        let details: Vec<String> = match self {
            CliError::Config(v) => v.clone(),
            _ => Vec::new(),
        };
        json!({ "error": { "kind": self.kind(), "message": self.to_string(), "details": details } })
    }
}

fn list_protocols(as_json: bool) -> String {
    if as_json {
        let doc: Vec<_> = ProtocolKind::ALL
            .iter()
            .map(|k| {
                json!({
                    "name": k.name(),
                    "description": k.description(),
                    "required_fields": k.required_fields(),
                })
            })
            .collect();
        return serde_json::to_string_pretty(&doc).expect("catalog serializes") + "\n";
    }
    let mut text = String::new();
    for k in ProtocolKind::ALL {
        text += &format!("{:<22} {}\n", k.name(), k.description());
        text += &format!("{:<22} fields: {}\n", "", k.required_fields().join(", "));
    }
    text
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let kind = ProtocolKind::from_str(&args.protocol).map_err(|_| {
        let known: Vec<&str> = ProtocolKind::ALL.iter().map(|k| k.name()).collect();
        CliError::Usage(format!("unknown protocol `{}`; known: {}", args.protocol, known.join(", ")))
    })?;
    let (text, source) = match &args.config {
        Some(path) => (
            std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?,
            path.display().to_string(),
        ),
        None => (
            preset_text(&args.preset)
                .map_err(|_| {
                    CliError::Usage(format!("unknown preset `{}`; known: {}", args.preset, PRESET_NAMES.join(", ")))
                })?
                .to_string(),
            format!("preset:{}", args.preset),
        ),
    };
    let settings = args.set.iter().map(|s| Setting::parse(s)).collect::<Result<Vec<_>, _>>()?;
    let mut pinned = Vec::new();
    if let Some(seed) = args.seed {
        pinned.push(("run.seed".to_string(), seed.to_string()));
    }
    if let Some(shots) = args.shots {
        pinned.push(("run.shots".to_string(), shots.to_string()));
    }

    // Resolve every point before running any, so a bad value fails fast.
    let configs = sweep::expand(&settings)
        .into_iter()
        .map(|assignment| {
            let mut all = assignment.clone();
            all.extend(pinned.iter().cloned());
            ExperimentConfig::from_toml_with(&text, &all).map(|cfg| (assignment, cfg))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let jobs = args.jobs.unwrap_or_else(rayon::current_num_threads);
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let reports: Vec<_> = pool.install(|| configs.par_iter().map(|(_, cfg)| run_protocol(kind, cfg)).collect());
    let mut points = Vec::with_capacity(configs.len());
    for ((assignment, config), report) in configs.into_iter().zip(reports) {
        points.push(PointOutcome {
            assignment,
            config,
            report: report?,
        });
    }

    let keys = sweep::swept_keys(&settings);
    let info = RunInfo {
        source: &source,
        overrides: &args.set,
        jobs,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let mut files = vec![("results.csv", output::results_csv(&keys, &points)?)];
    if let Some(spec) = output::spectrum_csv(&keys, &points)? {
        files.push(("spectrum.csv", spec));
    }
    files.push(("meta.json", output::meta_json(&keys, &points, &info)?));
    output::write_atomically(&args.out, &files)?;

    let mut text = String::new();
    for p in &points {
        if !p.assignment.is_empty() {
            let label: Vec<String> = p.assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
            text += &format!("[{}]\n", label.join(" "));
        }
        for (k, v) in &p.report.summary {
            text += &format!("  {k} = {v}\n");
        }
        for w in &p.report.warnings {
            eprintln!("warning: {w}");
        }
    }
    let names: Vec<&str> = files.iter().map(|f| f.0).collect();
    text += &format!("wrote {} to {}\n", names.join(", "), args.out.display());
    emit(&text);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim_end().to_string());
            eprintln!("{}", err.record());
            return ExitCode::from(err.exit_code());
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::ListProtocols { json } => {
            emit(&list_protocols(json));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.record());
            ExitCode::from(err.exit_code())
        }
    }
}
