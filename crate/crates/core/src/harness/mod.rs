//! Configuration, scenario presets, sweeps and output files.

pub mod config;
pub mod output;
pub mod scenario;
pub mod sweep;

use std::fs;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::error::{PksError, Result};
use crate::hypo::fit_decay_rate;
use crate::integrator::{run_from, ImexStepper, RunOutcome};
use crate::monitors::MonitorRecord;

use config::{Format, RunConfig};
use output::{
    columns, ensure_dir, write_csv, write_json, CsvTable, FitSummary, RunMetadata,
    CHECKPOINT_JSON, METADATA_JSON, RECORDS_CSV, RECORDS_JSON, RESOLVED_CONFIG, SCHEMA_VERSION,
};

/// What one run produced.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub config: RunConfig,
    pub config_hash: String,
    pub outcome: RunOutcome,
    pub fit: FitSummary,
    pub directory: PathBuf,
    pub wall_seconds: f64,
}

/// Fits `cfg.fit` to in-memory records.
pub fn fit_records(cfg: &RunConfig, records: &[MonitorRecord]) -> FitSummary {
    let window = cfg.fit_window();
    let table = CsvTable::from_records(records, cfg.hypo.k_report);
    let fit = table
        .series(&cfg.fit.column)
        .and_then(|s| fit_decay_rate(&s, window));
    FitSummary {
        column: cfg.fit.column.clone(),
        window,
        rate: fit.as_ref().ok().map(|f| f.rate),
        r_squared: fit.as_ref().ok().map(|f| f.r_squared),
        samples: fit.as_ref().ok().map(|f| f.samples),
        error: fit.err().map(|e| e.to_string()),
    }
}

/// Runs a resolved configuration and writes its output directory.
pub fn execute(cfg: &RunConfig, scenario: Option<&str>) -> Result<RunReport> {
    let setup = cfg.setup()?;
    let hash = cfg.hash()?;
    let dir = ensure_dir(&cfg.output.directory)?;
    let echo = dir.join(RESOLVED_CONFIG);
    fs::write(&echo, cfg.to_toml()?).map_err(|e| PksError::io(&echo, e))?;

    let mut stepper = ImexStepper::new(&setup.state, &setup.shear, &setup.params, setup.mode)?;
    let clock = Instant::now();
    let outcome = run_from(&mut stepper, &setup.step, &setup.record, |_| Ok(()))?;
    let wall_seconds = clock.elapsed().as_secs_f64();

    let k = cfg.hypo.k_report;
    for f in &cfg.output.formats {
        match f {
            Format::Csv => write_csv(&dir.join(RECORDS_CSV), &outcome.records, k)?,
            Format::Json => write_json(&dir.join(RECORDS_JSON), &outcome.records)?,
        }
    }
    if cfg.output.checkpoint && stepper.is_finite() {
        stepper.checkpoint(&hash).save(&dir.join(CHECKPOINT_JSON))?;
    }
    let fit = fit_records(cfg, &outcome.records);
    let meta = RunMetadata {
        schema_version: SCHEMA_VERSION.into(),
        solver_version: env!("CARGO_PKG_VERSION").into(),
        scenario: scenario.map(str::to_owned),
        config_hash: hash.clone(),
        status: outcome.status.as_str().into(),
        reason: outcome.reason.clone(),
        steps: outcome.steps,
        t_final: outcome.final_state.t,
        records: outcome.records.len(),
        columns: columns(k),
        fit: Some(fit.clone()),
        wall_seconds,
        finished_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    write_json(&dir.join(METADATA_JSON), &meta)?;
    Ok(RunReport {
        config: cfg.clone(),
        config_hash: hash,
        outcome,
        fit,
        directory: dir,
        wall_seconds,
    })
}
