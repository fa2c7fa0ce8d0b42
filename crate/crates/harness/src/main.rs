use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use omd_curl_harness::config::{Algorithm, TaskKind};
use omd_curl_harness::presets::{preset, PRESET_NAMES};
use omd_curl_harness::{run_experiment, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "omd-curl", version, about = "Run online convex RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run(Overrides),
    /// Print a named preset as JSON, or list the presets.
    Presets {
        name: Option<String>,
    },
    /// Check a config and print it with defaults filled in.
    Validate(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// Flat JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset instead of a file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, value_enum)]
    algo: Option<Algorithm>,
    #[arg(long, value_enum)]
    task: Option<TaskKind>,
    #[arg(long)]
    no_bonus: bool,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::from_path(path)?,
            (None, Some(name)) => preset(name).ok_or_else(|| HarnessError::Config {
                field: "preset".into(),
                message: format!("unknown preset `{name}`; known: {}", PRESET_NAMES.join(", ")),
            })?,
            (None, None) => ExperimentConfig::default(),
        };
        if let Some(v) = &self.out {
            cfg.out_dir = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.reps {
            cfg.reps = v;
        }
        if let Some(v) = self.episodes {
            cfg.episodes = v;
            cfg.snapshots.retain(|&t| t <= v);
        }
        if let Some(v) = self.algo {
            cfg.algorithm = v;
        }
        if let Some(v) = self.task {
            cfg.task = v;
        }
        if self.no_bonus {
            cfg.bonus = false;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = Some(v);
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.eps {
            cfg.eps = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON value serialises")
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(o) => {
            let cfg = o.resolve()?;
            let outcome = run_experiment(&cfg)?;
            println!("{}", pretty(&outcome.summary["results"]));
        }
        Command::Presets { name: None } => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
        }
        Command::Presets { name: Some(name) } => {
            let cfg = preset(&name).ok_or_else(|| HarnessError::Config {
                field: "preset".into(),
                message: format!("unknown preset `{name}`"),
            })?;
            println!("{}", pretty(&cfg.to_json_value()));
        }
        Command::Validate(o) => {
            let cfg = o.resolve()?;
            println!("{}", pretty(&cfg.to_json_value()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            match e {
                HarnessError::Config { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
