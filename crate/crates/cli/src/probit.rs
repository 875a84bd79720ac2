//! Probit data loading and evidence-based model enumeration.

use nalgebra::DMatrix;
use nested_evidence::logval::log_sum_exp_raw;
use nested_evidence::models::{load_probit_csv, synthetic_probit, ProbitCsvOptions, ProbitModel};
use nested_evidence::nested_is::{nested_ellipsoid_evidence, EllipsoidSpec, ShellSchedule};
use nested_evidence::RandomSource;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// Design, responses and column names.
#[derive(Debug, Clone)]
pub struct ProbitDesign {
    pub columns: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: Vec<bool>,
}

/// Reads `data` (a CSV) when given, otherwise simulates from `theta`.
pub fn design_from_config(cfg: &ExperimentConfig) -> Result<ProbitDesign> {
    if cfg.has("data") {
        let mut opts = ProbitCsvOptions {
            intercept: cfg.get("intercept", true)?,
            cross_effects: Vec::new(),
        };
        for item in cfg.list::<String>("cross", &[])? {
            let (a, b) = item
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("cross effect {item:?} must be a:b")))?;
            opts.cross_effects.push((a.trim().to_string(), b.trim().to_string()));
        }
        let data = load_probit_csv(cfg.str_or("data", ""), &opts)?;
        return Ok(ProbitDesign {
            columns: data.columns,
            x: data.x,
            y: data.y,
        });
    }
    let theta: Vec<f64> = cfg.list("theta", &[0.5, -0.3, 0.8])?;
    if theta.is_empty() {
        return Err(CliError::Config("theta must have at least the intercept".into()));
    }
    let n: usize = cfg.get("n_obs", 200)?;
    let seed: u64 = cfg.get("data_seed", 77)?;
    let (x, y) = synthetic_probit(n, &theta, &mut RandomSource::new(seed, 0));
    let mut columns = vec!["(intercept)".to_string()];
    columns.extend((1..theta.len()).map(|k| format!("x{k}")));
    Ok(ProbitDesign { columns, x, y })
}

/// Nested-ellipsoid settings shared by every subset.
#[derive(Debug, Clone, Copy)]
pub struct NisSettings {
    pub n_live: usize,
    /// Multiplies the inverse negative Hessian before the factor 2 of scenario 1.
    pub curvature: f64,
    pub schedule: ShellSchedule,
    pub prior_sd: f64,
}

#[derive(Debug, Clone)]
pub struct SubsetEvidence {
    pub columns: Vec<usize>,
    pub names: Vec<String>,
    pub log_z: Option<f64>,
    pub shells: usize,
    pub probability: Option<f64>,
    pub error: Option<String>,
}

impl SubsetEvidence {
    pub fn label(&self) -> String {
        self.names.join("+")
    }
}

/// Column 0 plus every subset of the remaining columns, by bitmask order.
pub fn all_subsets(d: usize) -> Vec<Vec<usize>> {
    let extra = d.saturating_sub(1);
    (0..1usize << extra)
        .map(|mask| {
            let mut s = vec![0];
            s.extend((0..extra).filter(|b| mask >> b & 1 == 1).map(|b| b + 1));
            s
        })
        .collect()
}

/// Parses `all` or `;`-separated comma lists such as `0;0,2;0,1,2`.
pub fn parse_subsets(text: &str, d: usize) -> Result<Vec<Vec<usize>>> {
    if text.trim() == "all" {
        return Ok(all_subsets(d));
    }
    text.split(';')
        .map(|group| {
            group
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<usize>()
                        .map_err(|_| CliError::Config(format!("bad column index {s:?} in subsets")))
                })
                .collect()
        })
        .collect()
}

/// Evidence of each subset by scenario-1 nested ellipsoids, with posterior
/// model probabilities under equal prior weights.
///
/// A subset whose fit fails keeps its error message and is left out of the
/// normalisation. Subset `k` uses substream `k` of `rng`.
pub fn probit_model_enumeration(
    design: &ProbitDesign,
    subsets: &[Vec<usize>],
    settings: &NisSettings,
    rng: &RandomSource,
) -> Result<Vec<SubsetEvidence>> {
    let d = design.x.ncols();
    for s in subsets {
        if s.first() != Some(&0) {
            return Err(CliError::Config(format!("subset {s:?} must start with the intercept column 0")));
        }
        if let Some(&bad) = s.iter().find(|&&c| c >= d) {
            return Err(CliError::Config(format!("column {bad} out of range (design has {d})")));
        }
    }
    let mut out: Vec<SubsetEvidence> = subsets
        .par_iter()
        .enumerate()
        .map(|(k, cols)| {
            let names = cols.iter().map(|&c| design.columns[c].clone()).collect();
            let fit = || -> nested_evidence::Result<(f64, usize)> {
                let model = ProbitModel::new(design.x.select_columns(cols.iter()), design.y.clone(), settings.prior_sd)?;
                let spec = EllipsoidSpec::mode_and_curvature(&model, settings.curvature)?;
                let est = nested_ellipsoid_evidence(&model, &spec, settings.n_live, settings.schedule, &rng.substream(k as u64))?;
                Ok((est.log_z.get(), est.j))
            };
            match fit() {
                Ok((lz, j)) => SubsetEvidence {
                    columns: cols.clone(),
                    names,
                    log_z: Some(lz),
                    shells: j,
                    probability: None,
                    error: None,
                },
                Err(e) => SubsetEvidence {
                    columns: cols.clone(),
                    names,
                    log_z: None,
                    shells: 0,
                    probability: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let total = log_sum_exp_raw(out.iter().filter_map(|s| s.log_z).collect::<Vec<_>>());
    for s in &mut out {
        s.probability = s.log_z.filter(|_| total.is_finite()).map(|lz| (lz - total).exp());
    }
    Ok(out)
}

pub fn write_enumeration(path: &std::path::Path, rows: &[SubsetEvidence]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["subset", "columns", "log_z", "probability", "shells", "status", "message"])?;
    for r in rows {
        let cols: Vec<String> = r.columns.iter().map(|c| c.to_string()).collect();
        let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "NaN".into());
        w.write_record([
            r.label(),
            cols.join(" "),
            num(r.log_z),
            num(r.probability),
            r.shells.to_string(),
            if r.error.is_some() { "failed".into() } else { "ok".into() },
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
