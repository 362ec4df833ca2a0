//! Run-directory persistence: canonical config, the diagnostics series as
//! CSV, and the summary/trace as JSON. Byte-stable for regression diffs.

use crate::config::{parse_config, ExperimentConfig};
use crate::error::{Error, Result};
use crate::experiments::{EntropyPoint, RunRecord, RunSummary};
use crate::functionals::{DiagnosticsRow, SERIES_HEADER};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Everything not covered by config.cfg and series.csv.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SummaryFile {
    summary: RunSummary,
    entropy_trace: Vec<EntropyPoint>,
    converged: bool,
    t_final: f64,
    blowup: Option<String>,
}

/// Resumable integrator state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateFile {
    pub t: f64,
    pub dt_last: f64,
    /// SHA-256 of the canonical config text.
    pub config_hash: String,
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config.render().as_bytes());
    format!("{:x}", hasher.finalize())
}

/// Stable run-directory name derived from the config.
pub fn run_dir_name(config: &ExperimentConfig) -> String {
    format!("run-{}", &config_hash(config)[..12])
}

pub fn series_to_csv(rows: &[DiagnosticsRow]) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn series_from_csv(text: &str) -> Result<Vec<DiagnosticsRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == SERIES_HEADER => {}
        _ => {
            return Err(Error::Parse { line: 1, msg: "bad or missing series header".into() });
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(DiagnosticsRow::from_csv_line(line, i + 1)?);
    }
    Ok(rows)
}

pub fn write_run(record: &RunRecord, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.cfg"), record.config.render())?;
    std::fs::write(dir.join("series.csv"), series_to_csv(&record.rows))?;
    let summary = SummaryFile {
        summary: record.summary(),
        entropy_trace: record.entropy_trace.clone(),
        converged: record.converged,
        t_final: record.t_final,
        blowup: record.blowup.clone(),
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    std::fs::write(dir.join("summary.json"), json)?;
    let state = StateFile {
        t: record.t_final,
        dt_last: record.rows.last().map_or(0.0, |r| r.dt),
        config_hash: config_hash(&record.config),
    };
    let mut json = serde_json::to_string_pretty(&state)?;
    json.push('\n');
    std::fs::write(dir.join("state.json"), json)?;
    Ok(())
}

pub fn read_run(dir: &Path) -> Result<RunRecord> {
    let config = parse_config(&std::fs::read_to_string(dir.join("config.cfg"))?)?;
    let rows = series_from_csv(&std::fs::read_to_string(dir.join("series.csv"))?)?;
    let summary: SummaryFile =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json"))?)?;
    Ok(RunRecord {
        config,
        rows,
        entropy_trace: summary.entropy_trace,
        converged: summary.converged,
        t_final: summary.t_final,
        blowup: summary.blowup,
    })
}

pub fn read_state(dir: &Path) -> Result<StateFile> {
    Ok(serde_json::from_str(&std::fs::read_to_string(dir.join("state.json"))?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InitSpec;
    use crate::experiments::run_flow;

    fn small_record() -> RunRecord {
        let cfg = ExperimentConfig {
            n_grid: 129,
            init: InitSpec::Perturbed { epsilon: 0.1, mode: 1 },
            t_max: 1.0,
            ..ExperimentConfig::default()
        };
        run_flow(&cfg).unwrap()
    }

    #[test]
    fn write_read_round_trip() {
        let record = small_record();
        let dir = tempfile::tempdir().unwrap();
        let run_dir = dir.path().join(run_dir_name(&record.config));
        write_run(&record, &run_dir).unwrap();
        let back = read_run(&run_dir).unwrap();
        assert_eq!(record, back);
        let state = read_state(&run_dir).unwrap();
        assert_eq!(state.t, record.t_final);
        assert_eq!(state.config_hash, config_hash(&record.config));
    }

    #[test]
    fn series_csv_is_byte_stable_and_ordered() {
        let record = small_record();
        let a = series_to_csv(&record.rows);
        let b = series_to_csv(&series_from_csv(&a).unwrap());
        assert_eq!(a, b);
        let mut last = f64::NEG_INFINITY;
        for row in series_from_csv(&a).unwrap() {
            assert!(row.t > last);
            last = row.t;
        }
    }

    #[test]
    fn dir_name_tracks_config() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { t_max: 49.0, ..ExperimentConfig::default() };
        assert_ne!(run_dir_name(&a), run_dir_name(&b));
        assert_eq!(run_dir_name(&a), run_dir_name(&a.clone()));
        assert!(run_dir_name(&a).starts_with("run-"));
    }

    #[test]
    fn bad_series_header_rejected() {
        assert!(matches!(series_from_csv("t,oops\n1,2\n"), Err(Error::Parse { line: 1, .. })));
    }
}
