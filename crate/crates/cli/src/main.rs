//! `adapt-sync`: run adaptive-synchronization scenarios, validate configs
//! and analyze recorded series.
//!
//! Exit codes: 0 success, 2 configuration/validation error, 3 simulation
//! fault, 1 other (I/O) failure. `ADAPT_SYNC_LOG` controls log verbosity.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adapt_sync_core::analysis::pe_metric;
use adapt_sync_core::numerics::TimeSeries;
use adapt_sync_core::transmission::{preset, presets, run_scenario, ScenarioConfig, ScenarioRun};
use adapt_sync_core::Error as CoreError;

const EXIT_VALIDATION: u8 = 2;
const EXIT_FAULT: u8 = 3;

#[derive(Parser)]
#[command(name = "adapt-sync", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenarios and write CSV + summary files.
    Run(RunArgs),
    /// Validate a scenario config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the built-in presets (or emit one as JSON).
    Presets {
        /// Print the full JSON config of the named preset.
        #[arg(long)]
        emit: Option<String>,
    },
    /// Analyze recorded series.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config file (a single scenario object or an array of them).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Run a built-in preset instead of a config file.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory for `<name>.csv` and `<name>.summary.json`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override config values, e.g. `--set observer.gamma=0.6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Persistent-excitation report over channels of a recorded CSV.
    Pe {
        #[arg(long)]
        input: PathBuf,
        /// Window length T (time units).
        #[arg(long)]
        window: f64,
        /// Window stride; defaults to T/4.
        #[arg(long)]
        stride: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        threshold: f64,
        /// Comma-separated channel names; defaults to all channels.
        #[arg(long)]
        channels: Option<String>,
    },
}

enum CliError {
    Validation(String),
    Fault(String),
    Io(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::BlowUp { .. } | CoreError::NonFiniteDerivative { .. } => {
                CliError::Fault(e.to_string())
            }
            CoreError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("ADAPT_SYNC_LOG")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(CliError::Fault(msg)) => {
            eprintln!("simulation fault: {msg}");
            ExitCode::from(EXIT_FAULT)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("i/o error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Validate { config } => {
            let configs = load_configs(&config, &[])?;
            for cfg in &configs {
                cfg.resolve()?;
                println!("ok: {}", cfg.name);
            }
            Ok(())
        }
        Command::Presets { emit } => cmd_presets(emit),
        Command::Analyze { what } => match what {
            AnalyzeCommand::Pe {
                input,
                window,
                stride,
                threshold,
                channels,
            } => cmd_analyze_pe(&input, window, stride, threshold, channels.as_deref()),
        },
    }
}

/// Parses `KEY=VALUE` overrides into a JSON value tree, creating the final
/// key if needed (strict config parsing still rejects unknown keys).
fn apply_override(root: &mut serde_json::Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| {
        CliError::Validation(format!("override `{spec}` is not of the form KEY=VALUE"))
    })?;
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if let Ok(idx) = part.parse::<usize>() {
            let arr = cur.as_array_mut().ok_or_else(|| {
                CliError::Validation(format!("override `{key}`: `{part}` indexes a non-array"))
            })?;
            if idx >= arr.len() {
                return Err(CliError::Validation(format!(
                    "override `{key}`: index {idx} out of bounds"
                )));
            }
            if last {
                arr[idx] = parsed;
                return Ok(());
            }
            cur = &mut arr[idx];
        } else {
            let obj = cur.as_object_mut().ok_or_else(|| {
                CliError::Validation(format!("override `{key}`: `{part}` indexes a non-object"))
            })?;
            if last {
                obj.insert(part.to_string(), parsed);
                return Ok(());
            }
            cur = obj.get_mut(*part).ok_or_else(|| {
                CliError::Validation(format!("override `{key}`: no such key `{part}`"))
            })?;
        }
    }
    Ok(())
}

fn configs_from_value(
    mut value: serde_json::Value,
    overrides: &[String],
) -> Result<Vec<ScenarioConfig>, CliError> {
    let values: Vec<serde_json::Value> = match &mut value {
        serde_json::Value::Array(items) => items.drain(..).collect(),
        _ => vec![value],
    };
    values
        .into_iter()
        .map(|mut v| {
            for spec in overrides {
                apply_override(&mut v, spec)?;
            }
            let text = serde_json::to_string(&v).expect("value serializes");
            Ok(ScenarioConfig::from_json(&text)?)
        })
        .collect()
}

fn load_configs(path: &Path, overrides: &[String]) -> Result<Vec<ScenarioConfig>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Validation(format!("cannot read config {}: {e}", path.display()))
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    configs_from_value(value, overrides)
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_outputs(out_dir: &Path, run: &ScenarioRun) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)?;
    let mut csv = Vec::new();
    run.series.to_csv(&mut csv)?;
    write_atomic(&out_dir.join(format!("{}.csv", run.summary.name)), &csv)?;
    let summary = serde_json::to_string_pretty(&run.summary)
        .map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(
        &out_dir.join(format!("{}.summary.json", run.summary.name)),
        summary.as_bytes(),
    )?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let configs = match (&args.config, &args.preset) {
        (Some(path), None) => load_configs(path, &args.set)?,
        (None, Some(name)) => {
            let cfg = preset(name).ok_or_else(|| {
                CliError::Validation(format!(
                    "unknown preset `{name}`; run `adapt-sync presets` for the list"
                ))
            })?;
            let value = serde_json::to_value(&cfg).expect("preset serializes");
            configs_from_value(value, &args.set)?
        }
        _ => {
            return Err(CliError::Validation(
                "exactly one of --config or --preset is required".into(),
            ))
        }
    };

    for cfg in &configs {
        let scenario = cfg.resolve()?;
        log::info!("running scenario `{}`", cfg.name);
        let started = std::time::Instant::now();
        let run = run_scenario(&scenario)?;
        log::info!("`{}` finished in {:.2?}", cfg.name, started.elapsed());
        write_outputs(&args.out, &run)?;
        println!(
            "{}: wrote {}.csv and {}.summary.json",
            cfg.name, cfg.name, cfg.name
        );
    }
    Ok(())
}

fn cmd_presets(emit: Option<String>) -> Result<(), CliError> {
    match emit {
        Some(name) => {
            let cfg = preset(&name)
                .ok_or_else(|| CliError::Validation(format!("unknown preset `{name}`")))?;
            println!("{}", cfg.to_json_pretty());
        }
        None => {
            for cfg in presets() {
                let summary = serde_json::to_value(&cfg.plant)
                    .ok()
                    .and_then(|v| v.get("kind").cloned())
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default();
                println!(
                    "{:<24} plant={:<15} horizon={:<6} step={}",
                    cfg.name, summary, cfg.horizon, cfg.step
                );
            }
        }
    }
    Ok(())
}

fn cmd_analyze_pe(
    input: &Path,
    window: f64,
    stride: Option<f64>,
    threshold: f64,
    channels: Option<&str>,
) -> Result<(), CliError> {
    let file = fs::File::open(input)
        .map_err(|e| CliError::Validation(format!("cannot open {}: {e}", input.display())))?;
    let series = TimeSeries::from_csv(file)?;
    let names: Vec<String> = match channels {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => series.channel_names().map(str::to_string).collect(),
    };
    let columns: Vec<&[f64]> = names
        .iter()
        .map(|n| series.channel(n))
        .collect::<Result<_, _>>()
        .map_err(CliError::from)?;
    let samples: Vec<nalgebra::DVector<f64>> = (0..series.len())
        .map(|i| nalgebra::DVector::from_iterator(columns.len(), columns.iter().map(|c| c[i])))
        .collect();
    let report = pe_metric(
        series.times(),
        &samples,
        window,
        stride.unwrap_or(window / 4.0),
        threshold,
    )?;
    let json = serde_json::json!({
        "input": input.display().to_string(),
        "channels": names,
        "report": report,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&json).map_err(|e| CliError::Io(e.to_string()))?
    );
    Ok(())
}
