use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{CommandFactory, FromArgMatches, Parser};
use gradsched_core::config::{describe_keys, Config, ConfigError};
use gradsched_core::experiments::{run_experiment, ExperimentError, EXPERIMENTS};
use serde_json::json;

/// Conflict-graph task scheduling experiments and wall-clock benchmark.
#[derive(Debug, Parser)]
#[command(name = "gradsched", version)]
struct Cli {
    /// Config file of `key = value` lines (see the key list below).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Experiment to run.
    #[arg(long, default_value = "run", value_name = "NAME")]
    experiment: String,
    /// Output directory.
    #[arg(long, default_value = "out", value_name = "DIR")]
    out: PathBuf,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Number of tasks.
    #[arg(long = "K", value_name = "N")]
    k: Option<usize>,
    /// Gradient dimension.
    #[arg(long = "d", value_name = "N")]
    d: Option<usize>,
    /// Refresh period.
    #[arg(long = "R", value_name = "N")]
    r: Option<usize>,
    #[arg(long = "tau-star", value_name = "X")]
    tau_star: Option<f64>,
    #[arg(long, value_name = "X")]
    beta: Option<f64>,
    #[arg(long = "f-min", value_name = "N")]
    f_min: Option<usize>,
    #[arg(long, value_name = "N")]
    steps: Option<usize>,
    #[arg(long, value_name = "N")]
    repeats: Option<usize>,
    #[arg(long = "sketch-mode", value_name = "MODE")]
    sketch_mode: Option<String>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

enum Failure {
    Config(ConfigError),
    Experiment(ExperimentError),
    Io(anyhow::Error),
}

impl Failure {
    fn to_json(&self) -> serde_json::Value {
        match self {
            Failure::Config(e) => json!({
                "error": "invalid_config",
                "message": e.to_string(),
                "diagnostics": e.0,
            }),
            Failure::Experiment(ExperimentError::Unknown { name }) => json!({
                "error": "unknown_experiment",
                "message": format!("unknown experiment {name:?}"),
                "available": EXPERIMENTS,
            }),
            Failure::Experiment(ExperimentError::Config(e)) => Failure::Config(e.clone()).to_json(),
            Failure::Experiment(e) => json!({ "error": "experiment_failed", "message": e.to_string() }),
            Failure::Io(e) => json!({ "error": "io", "message": format!("{e:#}") }),
        }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Experiment(ExperimentError::Config(_) | ExperimentError::Unknown { .. }) => 2,
            _ => 1,
        }
    }
}

fn effective_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = Config::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(Failure::Io)?;
        cfg.apply_text(&text).map_err(Failure::Config)?;
    }
    let flags: [(&str, Option<String>); 10] = [
        ("seed", cli.seed.map(|v| v.to_string())),
        ("K", cli.k.map(|v| v.to_string())),
        ("d", cli.d.map(|v| v.to_string())),
        ("R", cli.r.map(|v| v.to_string())),
        ("tau_star", cli.tau_star.map(|v| v.to_string())),
        ("beta", cli.beta.map(|v| v.to_string())),
        ("f_min", cli.f_min.map(|v| v.to_string())),
        ("steps", cli.steps.map(|v| v.to_string())),
        ("repeats", cli.repeats.map(|v| v.to_string())),
        ("sketch_mode", cli.sketch_mode.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v).expect("flag values are typed by clap");
        }
    }
    cfg.validated().map_err(Failure::Config)
}

fn write_outputs(dir: &Path, files: &[(String, String)], summary: &serde_json::Value) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
        written.push(p);
    }
    let p = dir.join("summary.json");
    std::fs::write(&p, serde_json::to_string_pretty(summary)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    written.push(p);
    Ok(written)
}

fn main_inner(cli: &Cli) -> Result<(), Failure> {
    let cfg = effective_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.emit());
        return Ok(());
    }
    let out = run_experiment(&cli.experiment, &cfg).map_err(Failure::Experiment)?;
    let written = write_outputs(&cli.out, &out.files, &out.summary).map_err(Failure::Io)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cmd = Cli::command().after_help(format!(
        "Experiments: {}\n\nConfig keys (key:type = default):\n{}",
        EXPERIMENTS.join(", "),
        describe_keys()
    ));
    let cli = match Cli::from_arg_matches(&cmd.get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match main_inner(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code())
        }
    }
}
