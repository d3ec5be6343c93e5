//! Single runs and parameter sweeps.

use std::path::{Path, PathBuf};
use std::time::Instant;

use drcbf_core::{run_simulation, RunStatus, TrajectoryLog};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{apply_overrides, Override, RunConfig};
use crate::error::{exit, CliError};
use crate::output::{fmt_f64, summarize, write_csv, write_json, write_plots, RunSummary};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const METADATA_FILE: &str = "metadata.json";
pub const COMPARISON_FILE: &str = "comparison.csv";

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub log: TrajectoryLog,
    pub summary: RunSummary,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match (&self.summary.status, self.summary.violation) {
            (RunStatus::Failed { .. }, _) => exit::FAULT,
            (RunStatus::Completed, true) => exit::VIOLATION,
            (RunStatus::Completed, false) => exit::OK,
        }
    }
}

/// Simulates without touching the filesystem.
pub fn simulate(config: &RunConfig) -> Result<(TrajectoryLog, RunSummary), CliError> {
    let sim = config.scenario().build()?;
    let start = Instant::now();
    let log = run_simulation(&sim)?;
    let summary = summarize(&log, config.params.d_min, start.elapsed().as_secs_f64());
    Ok((log, summary))
}

/// Simulates and writes the trajectory, summary, metadata and plots into
/// [`RunConfig::run_dir`].
pub fn execute_run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let (log, summary) = simulate(config)?;
    let dir = config.run_dir();
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    write_csv(&log, &dir.join(TRAJECTORY_FILE))?;
    write_json(&summary, &dir.join(SUMMARY_FILE))?;
    write_json(&log.metadata, &dir.join(METADATA_FILE))?;
    if config.output.plots {
        write_plots(&log, config.params.d_min, &dir)?;
    }
    Ok(RunOutcome { dir, log, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: Value,
    pub dir: PathBuf,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub param: String,
    pub rows: Vec<SweepRow>,
    pub comparison: PathBuf,
}

impl SweepOutcome {
    /// Worst exit code over the runs.
    pub fn exit_code(&self) -> i32 {
        self.rows
            .iter()
            .map(|r| match (&r.summary.status, r.summary.violation) {
                (RunStatus::Failed { .. }, _) => exit::FAULT,
                (_, true) => exit::VIOLATION,
                _ => exit::OK,
            })
            .max()
            .unwrap_or(exit::OK)
    }
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// One run per value of `param`, all sharing the config's seed. Every
/// variant is validated before any run starts, so an unknown path fails
/// without partial output.
pub fn sweep(config: &RunConfig, param: &str, values: &[Value]) -> Result<SweepOutcome, CliError> {
    if values.is_empty() {
        return Err(CliError::Config {
            path: param.into(),
            message: "sweep needs at least one value".into(),
        });
    }
    let root = config.run_dir();
    let variants = values
        .iter()
        .map(|v| {
            let mut c = apply_overrides(config, &[Override::new(param, v.clone())])?;
            c.output.dir = root.clone();
            c.output.name = Some(format!("{param}={}", value_label(v)));
            c.scenario().resolve_gains()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let outcomes: Vec<Result<RunOutcome, CliError>> =
        variants.par_iter().map(execute_run).collect();
    let mut rows = Vec::with_capacity(outcomes.len());
    for (value, outcome) in values.iter().zip(outcomes) {
        let o = outcome?;
        rows.push(SweepRow {
            value: value.clone(),
            dir: o.dir,
            summary: o.summary,
        });
    }
    let comparison = root.join(COMPARISON_FILE);
    write_comparison(param, &rows, &comparison)?;
    Ok(SweepOutcome {
        param: param.into(),
        rows,
        comparison,
    })
}

fn write_comparison(param: &str, rows: &[SweepRow], path: &Path) -> Result<(), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        param,
        "steady_state_distance",
        "min_distance",
        "violation",
        "min_phi",
        "guard_events",
        "status",
    ])
    .map_err(csv_err)?;
    for r in rows {
        let s = &r.summary;
        let status = match &s.status {
            RunStatus::Completed => "completed",
            RunStatus::Failed { .. } => "failed",
        };
        w.write_record([
            value_label(&r.value),
            fmt_f64(s.steady_state_distance),
            fmt_f64(s.min_distance),
            s.violation.to_string(),
            fmt_f64(s.min_phi),
            s.guard_events.to_string(),
            status.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
