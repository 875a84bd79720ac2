//! Result persistence: one CSV row per replication plus a summary and a
//! metadata sidecar.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use nested_evidence::stats;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;

/// Column order of the per-replication CSV.
pub const RESULT_COLUMNS: &[&str] = &[
    "experiment",
    "estimator",
    "point",
    "d",
    "n_live",
    "steps",
    "replication",
    "seed",
    "log_z",
    "reference_log_z",
    "error",
    "iterations",
    "likelihood_evaluations",
    "wall_seconds",
    "status",
    "message",
    "config_hash",
];

/// Column order of the summary CSV.
pub const SUMMARY_COLUMNS: &[&str] = &[
    "experiment",
    "estimator",
    "point",
    "d",
    "n_live",
    "steps",
    "count",
    "failures",
    "median_error",
    "iqr_error",
    "sd_log_z",
    "mean_iterations",
    "mean_likelihood_evaluations",
    "statistic",
    "config_hash",
];

#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub estimator: String,
    /// Readable config point, e.g. `d=5;N=100;M=1`.
    pub point: String,
    pub d: usize,
    pub n_live: usize,
    pub steps: usize,
    pub replication: usize,
    pub seed: u64,
    pub log_z: f64,
    pub reference_log_z: f64,
    pub error: f64,
    pub iterations: u64,
    pub likelihood_evaluations: u64,
    pub wall_seconds: f64,
    pub status: String,
    pub message: String,
    pub config_hash: String,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub estimator: String,
    pub point: String,
    pub d: usize,
    pub n_live: usize,
    pub steps: usize,
    pub count: usize,
    pub failures: usize,
    pub median_error: f64,
    pub iqr_error: f64,
    pub sd_log_z: f64,
    pub mean_iterations: f64,
    pub mean_likelihood_evaluations: f64,
    /// Experiment-specific figure (the variance ratio for `clt`), NaN otherwise.
    pub statistic: f64,
    pub config_hash: String,
}

impl SummaryRow {
    /// Summarises rows that share estimator and point; failed rows are counted, not used.
    pub fn from_rows(rows: &[&ResultRow]) -> Option<SummaryRow> {
        let first = rows.first()?;
        let good: Vec<&&ResultRow> = rows.iter().filter(|r| r.ok()).collect();
        let errors: Vec<f64> = good.iter().map(|r| r.error).collect();
        let log_z: Vec<f64> = good.iter().map(|r| r.log_z).collect();
        let stat = |f: &dyn Fn(&[f64]) -> f64, v: &[f64]| if v.is_empty() { f64::NAN } else { f(v) };
        let its: Vec<f64> = good.iter().map(|r| r.iterations as f64).collect();
        let evals: Vec<f64> = good.iter().map(|r| r.likelihood_evaluations as f64).collect();
        Some(SummaryRow {
            experiment: first.experiment.clone(),
            estimator: first.estimator.clone(),
            point: first.point.clone(),
            d: first.d,
            n_live: first.n_live,
            steps: first.steps,
            count: good.len(),
            failures: rows.len() - good.len(),
            median_error: stat(&stats::median, &errors),
            iqr_error: stat(&stats::iqr, &errors),
            sd_log_z: if log_z.len() > 1 { stats::std_dev(&log_z) } else { f64::NAN },
            mean_iterations: stat(&stats::mean, &its),
            mean_likelihood_evaluations: stat(&stats::mean, &evals),
            statistic: f64::NAN,
            config_hash: first.config_hash.clone(),
        })
    }
}

/// Groups rows by `(estimator, point)` in first-seen order and summarises each group.
pub fn summarise(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in rows {
        let k = (r.estimator.as_str(), r.point.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.iter()
        .filter_map(|&(e, p)| {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.estimator == e && r.point == p).collect();
            SummaryRow::from_rows(&group)
        })
        .collect()
}

/// Where rows go. Experiments hand over rows one config point at a time.
pub trait RowSink {
    fn append(&mut self, rows: &[ResultRow]) -> Result<()>;
}

impl RowSink for Vec<ResultRow> {
    fn append(&mut self, rows: &[ResultRow]) -> Result<()> {
        self.extend_from_slice(rows);
        Ok(())
    }
}

/// Append-only CSV log, flushed after every batch.
pub struct ResultLog {
    path: PathBuf,
    writer: csv::Writer<File>,
    rows: Vec<ResultRow>,
}

impl ResultLog {
    /// Creates `<dir>/<experiment>.csv` and its `.meta` sidecar.
    pub fn create(dir: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let name = cfg.experiment.name();
        let path = dir.join(format!("{name}.csv"));
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(&path)?;
        writer.write_record(RESULT_COLUMNS)?;
        writer.flush()?;
        write_metadata(&dir.join(format!("{name}.meta")), cfg)?;
        Ok(ResultLog {
            path,
            writer,
            rows: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<ResultRow> {
        self.rows
    }
}

impl RowSink for ResultLog {
    fn append(&mut self, rows: &[ResultRow]) -> Result<()> {
        for r in rows {
            self.writer.serialize(r)?;
        }
        self.writer.flush()?;
        self.rows.extend_from_slice(rows);
        Ok(())
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar: config echo, hash, version and column order.
pub fn write_metadata(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "# {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))?;
    writeln!(f, "artifact_version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(f, "config_hash = {}", cfg.hash())?;
    writeln!(f, "columns = {}", RESULT_COLUMNS.join(", "))?;
    writeln!(f, "summary_columns = {}", SUMMARY_COLUMNS.join(", "))?;
    writeln!(f, "# config")?;
    write!(f, "{}", cfg.canonical())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(est: &str, point: &str, err: f64, status: &str) -> ResultRow {
        ResultRow {
            experiment: "x".into(),
            estimator: est.into(),
            point: point.into(),
            d: 1,
            n_live: 10,
            steps: 1,
            replication: 0,
            seed: 1,
            log_z: err,
            reference_log_z: 0.0,
            error: err,
            iterations: 4,
            likelihood_evaluations: 8,
            wall_seconds: 0.0,
            status: status.into(),
            message: String::new(),
            config_hash: "h".into(),
        }
    }

    #[test]
    fn summary_groups_and_skips_failures() {
        let rows = vec![
            row("a", "p", 1.0, "ok"),
            row("b", "p", 5.0, "ok"),
            row("a", "p", 3.0, "ok"),
            row("a", "p", f64::NAN, "failed"),
        ];
        let s = summarise(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].estimator, "a");
        assert_eq!(s[0].count, 2);
        assert_eq!(s[0].failures, 1);
        assert_eq!(s[0].median_error, 2.0);
        assert_eq!(s[1].count, 1);
        assert!(s[1].sd_log_z.is_nan());
    }

    #[test]
    fn log_writes_header_rows_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::parse("experiment = clt").unwrap();
        let mut log = ResultLog::create(dir.path(), &cfg).unwrap();
        log.append(&[row("ns", "p", 0.5, "ok")]).unwrap();
        log.append(&[row("ns", "p", f64::NAN, "failed")]).unwrap();
        let text = std::fs::read_to_string(log.path()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], RESULT_COLUMNS.join(","));
        assert_eq!(lines.len(), 3);
        assert!(lines[2].contains("NaN"));
        let meta = std::fs::read_to_string(dir.path().join("clt.meta")).unwrap();
        assert!(meta.contains(&format!("config_hash = {}", cfg.hash())));
        assert!(meta.contains("experiment = clt"));
    }
}
