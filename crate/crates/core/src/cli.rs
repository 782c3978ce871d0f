//! Command-line front end: config loading, dispatch and CSV output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::experiments::{
    sweep, verify_theorem1, ExperimentConfig, SweepFamily, SweepResult, Theorem1Report, CONFIG_KEYS,
};

pub const SWEEP_HEADER: &str = "sweep_name,sweep_value,method,L,T,N,snr,mean_gap,ci_low,ci_high,trial_count,master_seed";
pub const THEOREM1_HEADER: &str = "N,eps,empirical_freq,bound,excluded_trials,trial_count,master_seed";

#[derive(Debug, Parser)]
#[command(name = "ddpc", version, about = "Direct vs. indirect data-driven predictive control benchmarks")]
pub struct Cli {
    /// Worker threads for the trial pool (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gap vs. number of experiments N.
    SweepN(RunArgs),
    /// Gap vs. control horizon T (over `t_grid`).
    SweepT(RunArgs),
    /// Gap vs. signal-to-noise ratio (over `snr_grid`).
    SweepSnr(RunArgs),
    /// Exceedance frequency of the implicit model error vs. its tail bound.
    Theorem1(RunArgs),
    /// Small built-in N-sweep.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Override a config key, e.g. `--set trials=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Loads a JSON config, applies `key=value` overrides and validates the result.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::ConfigFile {
        path: path.display().to_string(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::ConfigParse {
        key: None,
        message: format!("{}: {e}", path.display()),
    })?;
    let Value::Object(map) = value else {
        return Err(Error::ConfigParse {
            key: None,
            message: format!("{}: top level must be a JSON object", path.display()),
        });
    };
    config_from_map(map, overrides)
}

/// Applies overrides on top of an already-built config (used by `demo`).
pub fn apply_overrides(config: &ExperimentConfig, overrides: &[String]) -> Result<ExperimentConfig> {
    let Value::Object(map) = serde_json::to_value(config)? else {
        unreachable!("config serializes to an object")
    };
    config_from_map(map, overrides)
}

fn config_from_map(mut map: Map<String, Value>, overrides: &[String]) -> Result<ExperimentConfig> {
    for key in map.keys() {
        check_key(key)?;
    }
    for item in overrides {
        let (key, raw) = item.split_once('=').ok_or_else(|| Error::ConfigParse {
            key: None,
            message: format!("override `{item}` is not of the form key=value"),
        })?;
        let key = key.trim();
        check_key(key)?;
        // bare words fall back to JSON strings, so `--set methods=["direct"]` and `--set y_ref=2` both work
        let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
        map.insert(key.to_string(), value);
    }
    let config: ExperimentConfig = serde_path_to_error::deserialize(Value::Object(map)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        // missing fields surface at the root; pull the name out of serde's message
        let key = if path == "." {
            inner.split('`').nth(1).map(str::to_string)
        } else {
            Some(path.split(['.', '[']).next().unwrap_or(&path).to_string())
        };
        Error::ConfigParse { key, message: inner }
    })?;
    config.validate()?;
    Ok(config)
}

fn check_key(key: &str) -> Result<()> {
    if CONFIG_KEYS.contains(&key) {
        Ok(())
    } else {
        Err(Error::Config {
            key: key.to_string(),
            reason: "unknown config key".into(),
        })
    }
}

fn real(x: f64) -> String {
    format!("{x:.15e}")
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in &result.rows {
        let lag = r.lag.map(|l| l.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.sweep_name,
            real(r.sweep_value),
            r.method,
            lag,
            r.horizon,
            r.experiments,
            real(r.snr),
            real(r.mean_gap),
            real(r.ci_low),
            real(r.ci_high),
            r.trial_count,
            r.master_seed
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn theorem1_csv(report: &Theorem1Report) -> String {
    let mut out = String::new();
    out.push_str(THEOREM1_HEADER);
    out.push('\n');
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.experiments,
            real(r.eps),
            real(r.empirical_freq),
            real(r.bound),
            r.excluded_trials,
            r.trial_count,
            r.master_seed
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// One line per sweep point, e.g. `T=5 N=20 snr=1.333: direct 1.2e-1 | L=2 3.4e-2`.
pub fn sweep_summary(result: &SweepResult) -> Vec<String> {
    let mut lines: Vec<String> = Vec::new();
    let mut current = None;
    for r in &result.rows {
        let point = (r.horizon, r.experiments, r.snr.to_bits());
        if current != Some(point) {
            current = Some(point);
            lines.push(format!("T={} N={} snr={:.4}:", r.horizon, r.experiments, r.snr));
        }
        let line = lines.last_mut().expect("pushed above");
        match r.lag {
            None => write!(line, " {} {:.4e}", r.method, r.mean_gap),
            Some(l) => write!(line, " {} L={l} {:.4e}", r.method, r.mean_gap),
        }
        .expect("writing to a String cannot fail");
    }
    lines
}

pub fn theorem1_summary(report: &Theorem1Report) -> Vec<String> {
    report
        .per_n
        .iter()
        .map(|d| {
            let mut line = format!(
                "N={}: mean ||Delta||_F {:.4e}, included {}, excluded {}:",
                d.experiments, d.mean_frobenius, d.included, d.excluded
            );
            for r in report.rows.iter().filter(|r| r.experiments == d.experiments) {
                write!(line, " eps={} freq {:.4} bound {:.4e};", r.eps, r.empirical_freq, r.bound)
                    .expect("writing to a String cannot fail");
            }
            line
        })
        .collect()
}

/// Writes `contents` to `path` via a sibling temp file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn run_sweep(config: &ExperimentConfig, family: SweepFamily) -> Result<(String, Vec<String>)> {
    let result = sweep(config, family)?;
    Ok((sweep_csv(&result), sweep_summary(&result)))
}

fn run_theorem1(config: &ExperimentConfig) -> Result<(String, Vec<String>)> {
    let report = verify_theorem1(config, &config.eps_grid, config.trials)?;
    Ok((theorem1_csv(&report), theorem1_summary(&report)))
}

/// Executes a parsed invocation. Summaries go to stderr when the CSV goes to stdout.
pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Config {
            key: "threads".into(),
            reason: e.to_string(),
        })?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<()> {
    let (csv, summary, out) = match command {
        Command::SweepN(a) => {
            let (csv, s) = run_sweep(&parse_config(&a.config, &a.overrides)?, SweepFamily::N)?;
            (csv, s, Some(a.out))
        }
        Command::SweepT(a) => {
            let (csv, s) = run_sweep(&parse_config(&a.config, &a.overrides)?, SweepFamily::T)?;
            (csv, s, Some(a.out))
        }
        Command::SweepSnr(a) => {
            let (csv, s) = run_sweep(&parse_config(&a.config, &a.overrides)?, SweepFamily::Snr)?;
            (csv, s, Some(a.out))
        }
        Command::Theorem1(a) => {
            let (csv, s) = run_theorem1(&parse_config(&a.config, &a.overrides)?)?;
            (csv, s, Some(a.out))
        }
        Command::Demo(a) => {
            let config = apply_overrides(&ExperimentConfig::demo(), &a.overrides)?;
            let (csv, s) = run_sweep(&config, SweepFamily::N)?;
            (csv, s, a.out)
        }
    };
    match out {
        Some(path) => {
            write_atomic(&path, &csv)?;
            for line in &summary {
                println!("{line}");
            }
            println!("wrote {}", path.display());
        }
        None => {
            for line in &summary {
                eprintln!("{line}");
            }
            print!("{csv}");
        }
    }
    Ok(())
}
