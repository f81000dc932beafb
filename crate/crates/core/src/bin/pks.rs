//! Command-line front end.
//!
//! Exit status: 0 when the run completed, 2 when blow-up was detected, 1 for
//! any error or aborted run. Overrides come from `PKS_SECTION__KEY=value`
//! environment variables first, then from `--set`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use toml::Value;

use pks::harness::config::{env_overrides, load_config, parse_assignment, parse_document};
use pks::harness::output::CsvTable;
use pks::harness::scenario::{preset, scenario_config};
use pks::harness::sweep::{sweep, SweepSpec};
use pks::harness::{execute, RunReport};
use pks::hypo::fit_decay_rate;
use pks::integrator::RunStatus;
use pks::{PksError, Result};

#[derive(Parser)]
#[command(name = "pks", version, about = "Shear-advected Patlak-Keller-Segel simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a TOML configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a key, e.g. `--set model.A=1e3`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (same as `--set output.directory=...`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named preset: blowup_noflow, suppression, passive_scalar_ed, elliptic_comparison.
    Scenario {
        name: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one configuration per value of a parameter.
    Sweep {
        /// Dotted key, e.g. `model.A`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        /// Preset to sweep (default `suppression`).
        #[arg(long, conflicts_with = "config")]
        scenario: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value = "pks-out/sweep")]
        out: PathBuf,
    },
    /// Fit an exponential decay rate to a records column.
    FitRate {
        #[arg(long)]
        input: PathBuf,
        /// Column name; `h2` is derived from `nneq_l2` and `gradc_neq_l2`.
        #[arg(long)]
        column: String,
        /// Time window `a,b`.
        #[arg(long)]
        window: String,
    },
}

fn overrides(set: &[String], out: Option<&Path>) -> Result<Vec<(String, String)>> {
    let mut all = env_overrides(std::env::vars());
    for s in set {
        all.push(parse_assignment(s)?);
    }
    if let Some(dir) = out {
        let lit = Value::String(dir.to_string_lossy().into_owned()).to_string();
        all.push(("output.directory".into(), lit));
    }
    Ok(all)
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    let bad = || PksError::Config(format!("window '{s}' is not of the form a,b"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    Ok((a, b))
}

fn report(r: &RunReport) -> ExitCode {
    let o = &r.outcome;
    println!("status: {}", o.status.as_str());
    if let Some(reason) = &o.reason {
        println!("reason: {reason}");
    }
    println!("t_final: {}", o.final_state.t);
    println!("steps: {}", o.steps);
    match (r.fit.rate, r.fit.r_squared) {
        (Some(rate), Some(r2)) => println!("fit {}: rate {rate:.6e}, r^2 {r2:.4}", r.fit.column),
        _ => println!(
            "fit {}: n/a ({})",
            r.fit.column,
            r.fit.error.as_deref().unwrap_or("no data")
        ),
    }
    println!("output: {}", r.directory.display());
    match o.status {
        RunStatus::Completed => ExitCode::SUCCESS,
        RunStatus::BlowupDetected => ExitCode::from(2),
        _ => ExitCode::FAILURE,
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Run { config, set, out } => {
            let cfg = load_config(&config, &overrides(&set, out.as_deref())?)?;
            Ok(report(&execute(&cfg, None)?))
        }
        Cmd::Scenario { name, set, out } => {
            let cfg = scenario_config(&name, &overrides(&set, out.as_deref())?)?;
            Ok(report(&execute(&cfg, Some(&name))?))
        }
        Cmd::Sweep {
            param,
            values,
            scenario,
            config,
            set,
            out,
        } => {
            let spec = SweepSpec::new(&param, SweepSpec::parse_values(&values))?;
            let (base, name) = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| PksError::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    (parse_document(&text, &path)?, None)
                }
                None => {
                    let name = scenario.unwrap_or_else(|| "suppression".into());
                    (preset(&name)?, Some(name))
                }
            };
            let rep = sweep(&spec, &base, &overrides(&set, None)?, &out, name.as_deref())?;
            println!("{:<14} {:<16} {:>14} {:>8}", spec.param, "status", "rate", "r^2");
            for r in &rep.rows {
                let num = |v: Option<f64>, p: usize| v.map_or("-".into(), |x| format!("{x:.p$e}"));
                println!(
                    "{:<14} {:<16} {:>14} {:>8}",
                    r.value,
                    r.status,
                    num(r.rate, 4),
                    r.r_squared.map_or("-".into(), |x| format!("{x:.4}"))
                );
            }
            match (rep.slope, &rep.slope_note) {
                (Some(s), _) => println!("scaling slope: {s:.4}"),
                (None, Some(note)) => println!("scaling slope: n/a ({note})"),
                (None, None) => {}
            }
            println!("output: {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::FitRate {
            input,
            column,
            window,
        } => {
            let table = CsvTable::read(&input)?;
            let fit = fit_decay_rate(&table.series(&column)?, parse_window(&window)?)?;
            println!("column: {column}");
            println!("window: {},{}", fit.window.0, fit.window.1);
            println!("rate: {:.9e}", fit.rate);
            println!("r_squared: {:.6}", fit.r_squared);
            println!("samples: {}", fit.samples);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
