//! `trace.csv`, `summary.json` and `config_resolved.json`.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! fixed log always produces the same bytes.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::mission::{MonteCarloSummary, RunLog};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config_resolved.json";
pub const MONTE_CARLO_FILE: &str = "monte_carlo.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    Error::Io { path: path.to_path_buf(), source }
}

/// Column names of `trace.csv` for `m` landmarks.
pub fn trace_header(m: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "step", "t_sec", "x_true", "y_true", "th_true", "x_ref", "y_ref", "th_ref", "x_est", "y_est", "th_est", "p11",
        "p12", "p13", "p22", "p23", "p33",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=m).map(|i| format!("u_{i}")));
    h.extend(
        ["di_bits", "track_err_m", "v_cmd", "w_cmd", "ccp_iters", "admm_iters", "wall_ms"].iter().map(|s| s.to_string()),
    );
    h
}

pub fn trace_csv(log: &RunLog) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let here = Path::new(TRACE_FILE);
    w.write_record(trace_header(log.landmark_count())).map_err(|e| csv_err(here, e))?;
    for s in &log.steps {
        let p = &s.covariance;
        let mut row: Vec<String> = vec![s.step.to_string()];
        row.extend(
            [
                s.t_sec,
                s.truth.x,
                s.truth.y,
                s.truth.theta,
                s.reference.x,
                s.reference.y,
                s.reference.theta,
                s.estimate.x,
                s.estimate.y,
                s.estimate.theta,
                p.get(0, 0),
                p.get(0, 1),
                p.get(0, 2),
                p.get(1, 1),
                p.get(1, 2),
                p.get(2, 2),
            ]
            .iter()
            .map(f64::to_string),
        );
        row.extend(s.u.iter().map(f64::to_string));
        row.extend([s.di_bits, s.track_err_m, s.command.v, s.command.omega].iter().map(f64::to_string));
        row.push(s.ccp_iters.to_string());
        row.push(s.admm_iters.to_string());
        row.push(s.wall_ms.to_string());
        w.write_record(&row).map_err(|e| csv_err(here, e))?;
    }
    w.into_inner().map_err(|e| Error::Io { path: here.to_path_buf(), source: e.into_error() })
}

pub fn summary_json(log: &RunLog) -> String {
    serde_json::to_string_pretty(&log.summary()).expect("summary serializes") + "\n"
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<PathBuf> {
    fs::write(&path, bytes).map_err(io_err(&path))?;
    Ok(path)
}

/// Writes the three run files into `dir`, creating it if needed.
pub fn export(log: &RunLog, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(vec![
        write(dir.join(TRACE_FILE), &trace_csv(log)?)?,
        write(dir.join(SUMMARY_FILE), summary_json(log).as_bytes())?,
        write(dir.join(CONFIG_FILE), (log.config.to_json() + "\n").as_bytes())?,
    ])
}

/// Per-run statistics plus their mean and standard deviation.
pub fn export_monte_carlo(summary: &MonteCarloSummary, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let text = serde_json::to_string_pretty(summary).expect("summary serializes") + "\n";
    write(dir.join(MONTE_CARLO_FILE), text.as_bytes())
}
