//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Decentred,
    Mixture,
    Probit,
    Clt,
    VdScale,
    Enumerate,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Decentred => "decentred",
            ExperimentKind::Mixture => "mixture",
            ExperimentKind::Probit => "probit",
            ExperimentKind::Clt => "clt",
            ExperimentKind::VdScale => "vdscale",
            ExperimentKind::Enumerate => "enumerate",
        }
    }

    /// Estimators the experiment knows how to run.
    pub fn estimators(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Decentred | ExperimentKind::Clt => &["ns"],
            ExperimentKind::Mixture => &["ns", "reverse_is", "is", "mixture"],
            ExperimentKind::Probit => &["scenario1", "scenario2", "is_scenario1", "is_scenario2"],
            ExperimentKind::VdScale => &["quadrature"],
            ExperimentKind::Enumerate => &["scenario1"],
        }
    }

    /// Experiment-specific keys accepted in addition to the common ones.
    fn keys(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Decentred => &["dims", "y", "relative", "max_iterations"],
            ExperimentKind::Mixture => &[
                "n_obs",
                "p",
                "data_seed",
                "data",
                "grid_cells",
                "gamma",
                "relative",
                "draws",
                "burn",
                "fit_points",
                "fit_thin",
                "bandwidth_gaussian",
                "bandwidth_t",
                "t_dof",
                "omega1",
            ],
            ExperimentKind::Probit => &[
                "n_obs",
                "theta",
                "prior_sd",
                "data_seed",
                "n_values",
                "curvature",
                "scenario2_scale",
                "tol",
                "reference_draws",
            ],
            ExperimentKind::Clt => &["d", "n_live", "tau"],
            ExperimentKind::VdScale => &["dims", "tau"],
            ExperimentKind::Enumerate => &[
                "data",
                "intercept",
                "cross",
                "n_obs",
                "theta",
                "prior_sd",
                "data_seed",
                "subsets",
                "n_live",
                "curvature",
                "tol",
            ],
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "decentred" => ExperimentKind::Decentred,
            "mixture" => ExperimentKind::Mixture,
            "probit" => ExperimentKind::Probit,
            "clt" => ExperimentKind::Clt,
            "vdscale" => ExperimentKind::VdScale,
            "enumerate" => ExperimentKind::Enumerate,
            other => return Err(CliError::Config(format!("unknown experiment {other:?}"))),
        })
    }
}

const COMMON_KEYS: &[&str] = &["experiment", "seed", "replications", "estimators", "grid", "out"];

/// Parses the flat format: one `key = value` per line, `#` starts a comment.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", idx + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", idx + 1)));
        }
        if map.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key {k:?}", idx + 1)));
        }
    }
    Ok(map)
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub replications: usize,
    pub estimators: Vec<String>,
    /// `(N, M)` pairs.
    pub grid: Vec<(usize, usize)>,
    pub out_dir: PathBuf,
    pub params: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(parse_flat(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// A file path, or failing that the name of a built-in preset.
    pub fn load_or_preset(arg: &str) -> Result<Self> {
        if Path::new(arg).exists() {
            return Self::load(arg);
        }
        match preset(arg) {
            Some(text) => Self::parse(text),
            None => Err(CliError::Config(format!("{arg:?} is neither a file nor a preset name"))),
        }
    }

    pub fn from_map(mut map: BTreeMap<String, String>) -> Result<Self> {
        let experiment: ExperimentKind = map
            .remove("experiment")
            .ok_or_else(|| CliError::Config("missing key `experiment`".into()))?
            .parse()?;
        for k in map.keys() {
            if !COMMON_KEYS.contains(&k.as_str()) && !experiment.keys().contains(&k.as_str()) {
                return Err(CliError::Config(format!(
                    "key {k:?} is not used by the {} experiment",
                    experiment.name()
                )));
            }
        }
        let seed = match map.remove("seed") {
            Some(s) => parse_value(&s, "seed")?,
            None => 1,
        };
        let replications = match map.remove("replications") {
            Some(s) => parse_value(&s, "replications")?,
            None => 1,
        };
        let estimators = match map.remove("estimators") {
            Some(s) => split_list(&s).map(str::to_string).collect(),
            None => experiment.estimators().iter().map(|s| s.to_string()).collect(),
        };
        let grid = match map.remove("grid") {
            Some(s) => parse_grid(&s)?,
            None => Vec::new(),
        };
        let out_dir = PathBuf::from(map.remove("out").unwrap_or_else(|| "results".into()));
        let cfg = ExperimentConfig {
            experiment,
            seed,
            replications,
            estimators,
            grid,
            out_dir,
            params: map,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(CliError::Config("replications must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(CliError::Config("estimator list is empty".into()));
        }
        for e in &self.estimators {
            if !self.experiment.estimators().contains(&e.as_str()) {
                return Err(CliError::Config(format!(
                    "estimator {e:?} is not available for {} (choose from {})",
                    self.experiment.name(),
                    self.experiment.estimators().join(", ")
                )));
            }
        }
        if self.grid.iter().any(|&(n, m)| n == 0 || m == 0) {
            return Err(CliError::Config("grid entries need N >= 1 and M >= 1".into()));
        }
        Ok(())
    }

    /// Canonical text of every setting except the output directory.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment = {}", self.experiment.name());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "replications = {}", self.replications);
        let _ = writeln!(s, "estimators = {}", self.estimators.join(", "));
        if !self.grid.is_empty() {
            let g: Vec<String> = self.grid.iter().map(|(n, m)| format!("{n}:{m}")).collect();
            let _ = writeln!(s, "grid = {}", g.join(", "));
        }
        for (k, v) in &self.params {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn has(&self, key: &str) -> bool {
        self.params.contains_key(key)
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.params.get(key).map(String::as_str).unwrap_or(default)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.params.get(key) {
            Some(v) => parse_value(v, key),
            None => Ok(default),
        }
    }

    pub fn list<T: FromStr + Clone>(&self, key: &str, default: &[T]) -> Result<Vec<T>> {
        match self.params.get(key) {
            Some(v) => split_list(v).map(|s| parse_value(s, key)).collect(),
            None => Ok(default.to_vec()),
        }
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

fn parse_value<T: FromStr>(s: &str, key: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("cannot parse {s:?} for key {key:?}")))
}

fn parse_grid(s: &str) -> Result<Vec<(usize, usize)>> {
    split_list(s)
        .map(|item| {
            let (n, m) = item
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("grid entry {item:?} must be N:M")))?;
            Ok((parse_value(n, "grid")?, parse_value(m, "grid")?))
        })
        .collect()
}

pub const PRESETS: &[&str] = &["decentred", "mixture", "probit", "clt", "vdscale", "enumerate"];

/// Desk-scale preset configurations.
pub fn preset(name: &str) -> Option<&'static str> {
    Some(match name {
        "decentred" => {
            "experiment = decentred
seed = 2024
replications = 20
dims = 5, 10, 20
grid = 100:1, 100:3, 100:5
y = 3
relative = 1e-8
"
        }
        "mixture" => {
            "experiment = mixture
seed = 7
replications = 50
n_obs = 10
p = 0.5
data_seed = 2024
grid_cells = 800, 500
grid = 1000:10
gamma = 1
relative = 1e-8
draws = 10000
burn = 2000
fit_points = 1000
fit_thin = 10
bandwidth_gaussian = 0.5
bandwidth_t = 2
t_dof = 3
omega1 = 1
"
        }
        "probit" => {
            "experiment = probit
seed = 5
replications = 50
n_obs = 200
theta = 0.5, -0.3, 0.8
prior_sd = 10
data_seed = 77
n_values = 2, 8, 32, 128
curvature = 1
scenario2_scale = 100
tol = 1e-8
reference_draws = 200000
"
        }
        "clt" => {
            "experiment = clt
seed = 42
replications = 500
d = 2
n_live = 100
tau = 1e-6
"
        }
        "vdscale" => {
            "experiment = vdscale
dims = 1, 2, 5, 10, 20, 40
tau = 1e-6
"
        }
        "enumerate" => {
            "experiment = enumerate
seed = 3
n_obs = 200
theta = 0.5, 0, 0.8
prior_sd = 10
data_seed = 11
subsets = all
n_live = 32
curvature = 1
tol = 1e-8
"
        }
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_format_basics() {
        let m = parse_flat("# comment\n a = 1 \nb=x, y # trailing\n\n").unwrap();
        assert_eq!(m["a"], "1");
        assert_eq!(m["b"], "x, y");
    }

    #[test]
    fn flat_format_errors() {
        assert!(parse_flat("a = 1\na = 2").is_err());
        assert!(parse_flat("novalue").is_err());
        assert!(parse_flat(" = 3").is_err());
    }

    #[test]
    fn every_preset_parses() {
        for name in PRESETS {
            let cfg = ExperimentConfig::parse(preset(name).unwrap()).unwrap();
            assert_eq!(cfg.experiment.name(), *name);
        }
    }

    #[test]
    fn rejects_unknown_keys_and_estimators() {
        assert!(ExperimentConfig::parse("experiment = clt\nbogus = 1").is_err());
        assert!(ExperimentConfig::parse("experiment = clt\nestimators = mixture").is_err());
        assert!(ExperimentConfig::parse("experiment = clt\nreplications = 0").is_err());
        assert!(ExperimentConfig::parse("experiment = nope").is_err());
        assert!(ExperimentConfig::parse("seed = 1").is_err());
        assert!(ExperimentConfig::parse("experiment = decentred\ngrid = 100").is_err());
    }

    #[test]
    fn hash_ignores_out_and_layout() {
        let a = ExperimentConfig::parse("experiment = clt\nseed = 3\nout = a").unwrap();
        let b = ExperimentConfig::parse("out=b\n\nseed=3\nexperiment=clt").unwrap();
        let c = ExperimentConfig::parse("experiment = clt\nseed = 4").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn typed_getters() {
        let cfg = ExperimentConfig::parse("experiment = decentred\ndims = 5, 10\ny = 2.5\ngrid = 10:1, 20:3").unwrap();
        assert_eq!(cfg.list::<usize>("dims", &[]).unwrap(), vec![5, 10]);
        assert_eq!(cfg.get("y", 3.0).unwrap(), 2.5);
        assert_eq!(cfg.get("relative", 1e-8).unwrap(), 1e-8);
        assert_eq!(cfg.grid, vec![(10, 1), (20, 3)]);
        assert!(cfg.get::<usize>("y", 0).is_err());
    }
}
