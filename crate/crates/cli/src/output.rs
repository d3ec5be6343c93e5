//! Trajectory CSV, run summary and SVG plots.

use std::fmt::Write as _;
use std::path::Path;

use drcbf_core::{QpStatus, RunStatus, TrajectoryLog};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Exact round trip: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn status_name(s: QpStatus) -> &'static str {
    match s {
        QpStatus::Optimal => "optimal",
        QpStatus::Infeasible => "infeasible",
    }
}

pub fn csv_header(n_levels: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "D", "v_f", "u", "slack", "d_u", "d_m"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..n_levels).map(|i| format!("phi_{i}")));
    h.extend(["cbf_residual", "clf_residual", "qp_status"].map(String::from));
    h
}

pub fn write_csv(log: &TrajectoryLog, path: &Path) -> Result<(), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let n_levels = log.records.first().map_or(0, |r| r.phi.len());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(csv_header(n_levels)).map_err(csv_err)?;
    for r in &log.records {
        let mut row = vec![
            fmt_f64(r.t),
            fmt_f64(r.x[0]),
            fmt_f64(r.x[1]),
            fmt_f64(r.u[0]),
            fmt_f64(r.slack),
            fmt_f64(r.d[0]),
            fmt_f64(r.d[1]),
        ];
        row.extend(r.phi.iter().map(|v| fmt_f64(*v)));
        row.push(r.cbf_residual.map(fmt_f64).unwrap_or_default());
        row.push(fmt_f64(r.clf_residual));
        row.push(status_name(r.qp_status).into());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parsed trajectory CSV: header plus numeric columns (`qp_status` kept as
/// text, empty cells as `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub status: Vec<String>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_csv(path: &Path) -> Result<CsvTable, CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    let status_col = header.iter().position(|h| h == "qp_status");
    let mut rows = Vec::new();
    let mut status = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let mut row = Vec::with_capacity(rec.len());
        for (i, cell) in rec.iter().enumerate() {
            if Some(i) == status_col {
                status.push(cell.to_string());
                row.push(None);
            } else if cell.is_empty() {
                row.push(None);
            } else {
                row.push(Some(cell.parse::<f64>().map_err(|e| CliError::Config {
                    path: format!("{}:{}", path.display(), header[i]),
                    message: e.to_string(),
                })?));
            }
        }
        rows.push(row);
    }
    Ok(CsvTable {
        header,
        rows,
        status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Option<String>,
    pub status: RunStatus,
    pub steps: usize,
    /// `min_t D(t)`.
    pub min_distance: f64,
    /// Mean of `D` over the final 20% of the horizon.
    pub steady_state_distance: f64,
    /// Mean of `v_f` over the final 20% of the horizon.
    pub steady_state_speed: f64,
    /// `min_t D(t) < D_min`.
    pub violation: bool,
    pub min_phi: f64,
    pub guard_events: usize,
    pub wall_clock_seconds: f64,
}

pub fn summarize(log: &TrajectoryLog, d_min: f64, wall_clock_seconds: f64) -> RunSummary {
    let min_distance = log
        .records
        .iter()
        .map(|r| r.x[0])
        .fold(f64::INFINITY, f64::min);
    let cutoff = 0.8 * log.metadata.horizon;
    let tail: Vec<_> = log.records.iter().filter(|r| r.t >= cutoff).collect();
    let mean = |f: &dyn Fn(&drcbf_core::StepRecord) -> f64| {
        if tail.is_empty() {
            f64::NAN
        } else {
            tail.iter().map(|r| f(r)).sum::<f64>() / tail.len() as f64
        }
    };
    RunSummary {
        mode: log.metadata.mode.clone(),
        status: log.status.clone(),
        steps: log.records.len(),
        min_distance,
        steady_state_distance: mean(&|r| r.x[0]),
        steady_state_speed: mean(&|r| r.x[1]),
        violation: min_distance - d_min < 0.0,
        min_phi: log.min_phi(),
        guard_events: log.guard_events(),
        wall_clock_seconds,
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A horizontal reference line drawn dashed across the plot.
pub struct Reference {
    pub value: f64,
    pub label: String,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 56.0;
const MAX_POINTS: usize = 1500;

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(t);
        t += step;
    }
    out
}

/// Line plot of `ys` against `ts` as a standalone SVG document.
pub fn line_plot(
    title: &str,
    y_label: &str,
    ts: &[f64],
    ys: &[f64],
    reference: Option<&Reference>,
) -> String {
    let stride = ts.len().div_ceil(MAX_POINTS).max(1);
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(ys)
        .step_by(stride)
        .map(|(t, y)| (*t, *y))
        .chain(ts.last().zip(ys.last()).map(|(t, y)| (*t, *y)))
        .collect();
    let (t0, t1) = (
        ts.first().copied().unwrap_or(0.0),
        ts.last().copied().unwrap_or(1.0),
    );
    let mut lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if let Some(r) = reference {
        lo = lo.min(r.value);
        hi = hi.max(r.value);
    }
    if !(lo.is_finite() && hi.is_finite()) {
        lo = 0.0;
        hi = 1.0;
    }
    let pad = 0.05 * (hi - lo).max(1e-9);
    let (lo, hi) = (lo - pad, hi + pad);
    let sx = |t: f64| MARGIN + (t - t0) / (t1 - t0).max(1e-12) * (WIDTH - 1.5 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - lo) / (hi - lo) * (HEIGHT - 1.5 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#,
        WIDTH / 2.0
    );
    let (x0, x1, y0, y1) = (sx(t0), sx(t1), sy(lo), sy(hi));
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" fill="none" stroke="black"/>"#
    );
    for t in nice_ticks(t0, t1) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#,
            y0 + 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#,
            y0 + 18.0
        );
    }
    for v in nice_ticks(lo, hi) {
        let y = sy(v);
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="black"/>"#,
            x0 - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 7.0,
            y + 4.0,
            format_tick(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">t [s]</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{y_label}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    if let Some(r) = reference {
        let y = sy(r.value);
        let _ = writeln!(
            s,
            r#"<line x1="{x0:.1}" y1="{y:.1}" x2="{x1:.1}" y2="{y:.1}" stroke="red" stroke-dasharray="6,4"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="red">{}</text>"#,
            x1,
            y - 4.0,
            r.label
        );
    }
    let mut d = String::new();
    for (i, (t, y)) in pts.iter().enumerate() {
        let _ = write!(
            d,
            "{}{:.2},{:.2} ",
            if i == 0 { "M" } else { "L" },
            sx(*t),
            sy(*y)
        );
    }
    let _ = writeln!(
        s,
        r#"<path d="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
        d.trim_end()
    );
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

/// `velocity.svg` and `distance.svg` with the minimum-distance line.
pub fn write_plots(log: &TrajectoryLog, d_min: f64, dir: &Path) -> Result<(), CliError> {
    let ts: Vec<f64> = log.records.iter().map(|r| r.t).collect();
    let d: Vec<f64> = log.records.iter().map(|r| r.x[0]).collect();
    let v: Vec<f64> = log.records.iter().map(|r| r.x[1]).collect();
    let mode = log.metadata.mode.as_deref().unwrap_or("unfiltered");
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|source| CliError::Io { path, source })
    };
    write(
        "velocity.svg",
        line_plot(
            &format!("follower speed ({mode})"),
            "v_f [m/s]",
            &ts,
            &v,
            None,
        ),
    )?;
    let reference = Reference {
        value: d_min,
        label: format!("D_min = {d_min}"),
    };
    write(
        "distance.svg",
        line_plot(
            &format!("distance ({mode})"),
            "D [m]",
            &ts,
            &d,
            Some(&reference),
        ),
    )
}
