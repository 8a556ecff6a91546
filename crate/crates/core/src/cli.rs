//! Command-line front end.
//!
//! `run` executes a built-in scenario or a TOML scenario file and writes
//! `measurements.csv`, `aggregate.csv`, `resolved_config.toml` and
//! `manifest.json` into the output directory. `validate` checks a scenario
//! file and lists every violated invariant.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::countermeasures::CountermeasureMode;
use crate::scenario::{builtin_spec, run_scenario, ScenarioResult, ScenarioSpec, BUILTIN_SCENARIOS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const MEASUREMENTS_FILE: &str = "measurements.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "fmcw-spoof", version, about = "FMCW radar spoofing simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and export its results.
    Run(RunArgs),
    /// Check a scenario file without running it.
    Validate {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Built-in scenario: emergency_brake, phantom_acceleration or baseline.
    #[arg(required_unless_present = "config", conflicts_with = "config")]
    pub scenario: Option<String>,
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override the number of Monte Carlo trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Override the countermeasure mode.
    #[arg(long)]
    pub countermeasure: Option<String>,
    #[arg(long)]
    pub quiet: bool,
}

/// Record of a completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub wall_clock_s: f64,
}

/// A failure that maps onto a process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Output goes to the given writers.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args).map(|m| {
            if !args.quiet {
                let _ = writeln!(
                    out,
                    "{}: wrote {} files to {} in {:.2} s",
                    m.scenario,
                    m.files.len(),
                    m.output_dir.display(),
                    m.wall_clock_s
                );
            }
        }),
        Command::Validate { path } => cmd_validate(&path).and_then(|problems| {
            if problems.is_empty() {
                let _ = writeln!(out, "{}: valid", path.display());
                Ok(())
            } else {
                for p in &problems {
                    let _ = writeln!(out, "{p}");
                }
                Err(CliError::Runtime(format!(
                    "{}: {} violation(s)",
                    path.display(),
                    problems.len()
                )))
            }
        }),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn load_spec(path: &Path) -> Result<ScenarioSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("cannot parse {}: {e}", path.display())))
}

/// Resolves the scenario a `run` invocation refers to, with overrides applied.
pub fn resolve_spec(args: &RunArgs) -> Result<ScenarioSpec, CliError> {
    let mut spec = match (&args.scenario, &args.config) {
        (_, Some(path)) => load_spec(path)?,
        (Some(name), None) => builtin_spec(name).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown scenario '{name}', expected one of {} or --config <path>",
                BUILTIN_SCENARIOS.join(", ")
            ))
        })?,
        (None, None) => return Err(CliError::Usage("no scenario given".into())),
    };
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(mode) = &args.countermeasure {
        spec.countermeasure.mode = mode
            .parse::<CountermeasureMode>()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let problems = spec.violations();
    if !problems.is_empty() {
        return Err(CliError::Usage(problems.join("; ")));
    }
    Ok(spec)
}

pub fn cmd_run(args: &RunArgs) -> Result<RunManifest, CliError> {
    let spec = resolve_spec(args)?;
    let started = Instant::now();
    let result = run_scenario(&spec, args.seed).map_err(|e| CliError::Runtime(e.to_string()))?;
    let files = write_outputs(&spec, &result, &args.out)?;
    let mut manifest = RunManifest {
        scenario: spec.name.clone(),
        config_path: args.config.clone(),
        seed: args.seed,
        output_dir: args.out.clone(),
        files,
        wall_clock_s: 0.0,
    };
    let manifest_path = args.out.join(MANIFEST_FILE);
    manifest.files.push(manifest_path.clone());
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    let json = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    fs::write(&manifest_path, json + "\n").map_err(runtime)?;
    Ok(manifest)
}

/// Lists every invariant the scenario file violates.
pub fn cmd_validate(path: &Path) -> Result<Vec<String>, CliError> {
    Ok(load_spec(path)?.violations())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Writes measurements, aggregate and resolved config; returns their paths.
pub fn write_outputs(
    spec: &ScenarioSpec,
    result: &ScenarioResult,
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(runtime)?;
    let measurements = dir.join(MEASUREMENTS_FILE);
    fs::write(&measurements, measurements_csv(result).map_err(runtime)?).map_err(runtime)?;
    let aggregate = dir.join(AGGREGATE_FILE);
    fs::write(&aggregate, aggregate_csv(result).map_err(runtime)?).map_err(runtime)?;
    let config = dir.join(RESOLVED_CONFIG_FILE);
    fs::write(&config, toml::to_string(spec).map_err(runtime)?).map_err(runtime)?;
    Ok(vec![measurements, aggregate, config])
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per trial and measurement instant.
pub fn measurements_csv(result: &ScenarioResult) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "trial",
        "step",
        "time_s",
        "range_m",
        "velocity_mps",
        "beat_freq_hz",
        "dropout",
        "attack_error",
        "phase_alarm",
        "rssi_flag",
        "rssi_score_db",
    ])?;
    for rec in result.trials.iter().flatten() {
        let m = rec.measurement.as_ref();
        w.write_record([
            rec.trial.to_string(),
            rec.step.to_string(),
            rec.time_s.to_string(),
            opt(m.map(|m| m.range_m)),
            opt(m.map(|m| m.velocity_mps)),
            opt(m.map(|m| m.beat_freq_hz)),
            m.is_none().to_string(),
            rec.attack_error.clone().unwrap_or_default(),
            opt(rec.phase_alarm),
            opt(rec.rssi_flag),
            opt(rec.rssi_score_db),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Mean and standard deviation per instant next to truth and, for attacks,
/// the spoof target.
pub fn aggregate_csv(result: &ScenarioResult) -> Result<String, csv::Error> {
    let spoof = result.spoof_range_m.as_ref().zip(result.spoof_velocity_mps.as_ref());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time_s", "truth_range_m", "truth_velocity_mps"];
    if spoof.is_some() {
        header.extend(["spoof_range_m", "spoof_velocity_mps"]);
    }
    header.extend([
        "mean_range_m",
        "std_range_m",
        "mean_velocity_mps",
        "std_velocity_mps",
        "dropout_count",
    ]);
    w.write_record(&header)?;
    for k in 0..result.times_s.len() {
        let mut row = vec![
            result.times_s[k].to_string(),
            result.truth_range_m[k].to_string(),
            result.truth_velocity_mps[k].to_string(),
        ];
        if let Some((r, v)) = spoof {
            row.push(r[k].to_string());
            row.push(v[k].to_string());
        }
        row.extend([
            result.mean_range_m[k].to_string(),
            result.std_range_m[k].to_string(),
            result.mean_velocity_mps[k].to_string(),
            result.std_velocity_mps[k].to_string(),
            result.dropout_count[k].to_string(),
        ]);
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
