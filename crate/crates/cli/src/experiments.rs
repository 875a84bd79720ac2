//! Seeded replication sweeps.

use std::time::Instant;

use nested_evidence::alt::{
    importance_sampling, kernel_proposal_fit, mixture_estimate, mixture_gibbs, posterior_chain, reverse_is,
    KernelKind, ProposalDensity, RandomWalkKernel,
};
use nested_evidence::constrained::{ExactRadial, GibbsDecentred, RandomWalk};
use nested_evidence::diagnostics::{clt_check, grid_riemann_mixture, vd_scaling, CltReport, VdRow};
use nested_evidence::models::{parse_mixture_csv, CentredGaussianToy, DecentredGaussian, ProbitModel, TwoComponentMixture};
use nested_evidence::nested_is::{nested_ellipsoid_evidence, EllipsoidSpec, ShellSchedule};
use nested_evidence::{evidence_deterministic, run_nested, Model, NSConfig, RandomSource, StopRule};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, Result};
use crate::log::{ResultRow, RowSink};
use crate::probit::{design_from_config, parse_subsets, probit_model_enumeration, NisSettings, SubsetEvidence};

/// Everything a sweep produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub rows: Vec<ResultRow>,
    pub clt: Option<CltReport>,
    pub vd: Vec<VdRow>,
    pub enumeration: Vec<SubsetEvidence>,
}

impl Outcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok()).count() + self.enumeration.iter().filter(|s| s.error.is_some()).count()
    }
}

/// What one estimator returned inside a replication.
struct Measured {
    estimator: &'static str,
    result: std::result::Result<(f64, u64, u64), String>,
    seconds: f64,
}

fn measure<F>(estimator: &'static str, f: F) -> Measured
where
    F: FnOnce() -> nested_evidence::Result<(f64, u64, u64)>,
{
    let t0 = Instant::now();
    let result = f().map_err(|e| e.to_string());
    Measured {
        estimator,
        result,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

/// Fields shared by all rows of one config point.
struct Point<'a> {
    cfg: &'a ExperimentConfig,
    hash: String,
    label: String,
    d: usize,
    n_live: usize,
    steps: usize,
    reference: f64,
}

impl Point<'_> {
    fn row(&self, replication: usize, m: Measured) -> ResultRow {
        let (log_z, iterations, evals, status, message) = match m.result {
            Ok((lz, it, ev)) => (lz, it, ev, "ok", String::new()),
            Err(e) => (f64::NAN, 0, 0, "failed", e),
        };
        ResultRow {
            experiment: self.cfg.experiment.name().into(),
            estimator: m.estimator.into(),
            point: self.label.clone(),
            d: self.d,
            n_live: self.n_live,
            steps: self.steps,
            replication,
            seed: self.cfg.seed,
            log_z,
            reference_log_z: self.reference,
            error: log_z - self.reference,
            iterations,
            likelihood_evaluations: evals,
            wall_seconds: m.seconds,
            status: status.into(),
            message,
            config_hash: self.hash.clone(),
        }
    }

    /// Runs `f` for every replication in parallel and appends rows in replication order.
    ///
    /// Replication `r` of point `p` draws from stream `(seed, p).substream(r)`.
    fn sweep<F>(&self, index: usize, sink: &mut dyn RowSink, all: &mut Vec<ResultRow>, f: F) -> Result<()>
    where
        F: Fn(RandomSource) -> Vec<Measured> + Sync + Send,
    {
        let base = RandomSource::new(self.cfg.seed, index as u64);
        let per_rep: Vec<Vec<Measured>> = (0..self.cfg.replications)
            .into_par_iter()
            .map(|r| f(base.substream(r as u64)))
            .collect();
        let rows: Vec<ResultRow> = per_rep
            .into_iter()
            .enumerate()
            .flat_map(|(r, ms)| ms.into_iter().map(move |m| (r, m)))
            .map(|(r, m)| self.row(r, m))
            .collect();
        sink.append(&rows)?;
        all.extend(rows);
        Ok(())
    }
}

fn wants(cfg: &ExperimentConfig, name: &str) -> bool {
    cfg.estimators.iter().any(|e| e == name)
}

fn fitted(g: &nested_evidence::Result<ProposalDensity>) -> nested_evidence::Result<&ProposalDensity> {
    g.as_ref()
        .map_err(|e| nested_evidence::Error::Domain(format!("kernel fit failed: {e}")))
}

fn ns_summary(run: &nested_evidence::NSRun) -> nested_evidence::Result<(f64, u64, u64)> {
    if let Some(f) = &run.failure {
        return Err(nested_evidence::Error::Sampler(f.clone()));
    }
    Ok((evidence_deterministic(run).get(), run.j() as u64, run.likelihood_evaluations))
}

pub fn run_experiment(cfg: &ExperimentConfig, sink: &mut dyn RowSink) -> Result<Outcome> {
    match cfg.experiment {
        ExperimentKind::Decentred => decentred(cfg, sink),
        ExperimentKind::Mixture => mixture(cfg, sink),
        ExperimentKind::Probit => probit(cfg, sink),
        ExperimentKind::Clt => clt(cfg, sink),
        ExperimentKind::VdScale => Ok(Outcome {
            vd: vd_scaling(&cfg.list("dims", &[1, 2, 5, 10, 20, 40])?, cfg.get("tau", 1e-6)?)?,
            ..Outcome::default()
        }),
        ExperimentKind::Enumerate => enumerate(cfg),
    }
}

fn decentred(cfg: &ExperimentConfig, sink: &mut dyn RowSink) -> Result<Outcome> {
    let dims: Vec<usize> = cfg.list("dims", &[5, 10, 20])?;
    let y: f64 = cfg.get("y", 3.0)?;
    let relative: f64 = cfg.get("relative", 1e-8)?;
    let max_it: Option<usize> = if cfg.has("max_iterations") { Some(cfg.get("max_iterations", 0)?) } else { None };
    let grid = if cfg.grid.is_empty() { vec![(100, 1), (100, 3), (100, 5)] } else { cfg.grid.clone() };
    let mut rows = Vec::new();
    let hash = cfg.hash();
    let mut index = 0;
    for &d in &dims {
        if d == 0 {
            return Err(CliError::Config("dims must be positive".into()));
        }
        let model = DecentredGaussian::constant(d, y);
        for &(n, m) in &grid {
            let mut ns = NSConfig::new(n, StopRule::RelativeContribution(relative)).with_steps(m);
            if let Some(j) = max_it {
                ns = ns.with_stop(StopRule::MaxIterations(j));
            }
            ns.validate()?;
            let point = Point {
                cfg,
                hash: hash.clone(),
                label: format!("d={d};N={n};M={m}"),
                d,
                n_live: n,
                steps: m,
                reference: model.log_evidence().unwrap_or(f64::NAN),
            };
            point.sweep(index, sink, &mut rows, |mut rng| {
                vec![measure("ns", || ns_summary(&run_nested(&model, &GibbsDecentred, &ns, &mut rng)?))]
            })?;
            index += 1;
        }
    }
    Ok(Outcome {
        rows,
        ..Outcome::default()
    })
}

/// Settings of the four mixture estimators.
#[derive(Debug, Clone)]
pub struct MixtureSettings {
    pub n_live: usize,
    pub steps: usize,
    pub gamma: f64,
    pub relative: f64,
    pub draws: usize,
    pub burn: usize,
    pub fit_points: usize,
    pub fit_thin: usize,
    pub bandwidth_gaussian: f64,
    pub bandwidth_t: f64,
    pub t_dof: f64,
    pub omega1: f64,
}

pub fn mixture_model(cfg: &ExperimentConfig) -> Result<TwoComponentMixture> {
    let p: f64 = cfg.get("p", 0.5)?;
    let data = if cfg.has("data") {
        let path = cfg.str_or("data", "");
        parse_mixture_csv(&std::fs::read_to_string(path)?)?
    } else {
        let n: usize = cfg.get("n_obs", 10)?;
        TwoComponentMixture::synthetic_data(n, &mut RandomSource::new(cfg.get("data_seed", 2024)?, 0))
    };
    if data.is_empty() {
        return Err(CliError::Config("mixture data set is empty".into()));
    }
    Ok(TwoComponentMixture::new(p, data))
}

/// One replication of every requested mixture estimator; estimator `k` draws from substream `k`.
fn mixture_replication(
    model: &TwoComponentMixture,
    s: &MixtureSettings,
    estimators: &[String],
    rng: RandomSource,
) -> Vec<Measured> {
    let mut out = Vec::new();
    let want = |e: &str| estimators.iter().any(|x| x == e);
    if want("ns") {
        let mut r = rng.substream(0);
        let ns = NSConfig::new(s.n_live, StopRule::RelativeContribution(s.relative)).with_steps(s.steps);
        let rw = RandomWalk::new().with_gamma(s.gamma);
        out.push(measure("ns", || ns_summary(&run_nested(model, &rw, &ns, &mut r)?)));
    }
    if !(want("reverse_is") || want("is") || want("mixture")) {
        return out;
    }
    // Posterior chains: burn-in, a thinned chain for the kernel fits and an
    // independent chain for reverse IS.
    let mut r = rng.substream(1);
    let t_chain = Instant::now();
    let init = vec![2.0, 1.0];
    let burn = posterior_chain(model, &RandomWalkKernel::new(vec![0.3, 0.3], 1), &init, s.burn.max(2), 1, &mut r);
    let kernel = RandomWalkKernel::from_sample(&burn, 1);
    let start = burn.last().cloned().unwrap_or(init);
    let fit = posterior_chain(model, &kernel, &start, s.fit_points, s.fit_thin, &mut r);
    let eval = posterior_chain(model, &kernel, fit.last().unwrap_or(&start), s.draws, 1, &mut r);
    let chain_seconds = t_chain.elapsed().as_secs_f64();
    let g1 = kernel_proposal_fit(&fit, KernelKind::Gaussian, s.bandwidth_gaussian);
    let g2 = kernel_proposal_fit(&fit, KernelKind::StudentT(s.t_dof), s.bandwidth_t);
    let t = s.draws as u64;
    if want("reverse_is") {
        let mut m = measure("reverse_is", || {
            let e = reverse_is(&eval, model, fitted(&g1)?)?;
            Ok((e.log_z.get(), t, t))
        });
        m.seconds += chain_seconds;
        out.push(m);
    }
    if want("is") {
        let mut r2 = rng.substream(2);
        out.push(measure("is", || {
            let e = importance_sampling(model, fitted(&g2)?, s.draws, &mut r2)?;
            Ok((e.log_z.get(), t, t))
        }));
    }
    if want("mixture") {
        let mut r3 = rng.substream(3);
        out.push(measure("mixture", || {
            let g = fitted(&g2)?;
            let chain = mixture_gibbs(model, g, s.omega1, s.draws, &kernel, eval.last().unwrap_or(&start), &mut r3)?;
            let e = mixture_estimate(&chain, model, g, s.omega1)?;
            Ok((e.log_z.get(), t, t))
        }));
    }
    out
}

fn mixture(cfg: &ExperimentConfig, sink: &mut dyn RowSink) -> Result<Outcome> {
    let model = mixture_model(cfg)?;
    let cells: Vec<usize> = cfg.list("grid_cells", &[800, 500])?;
    if cells.len() != 2 {
        return Err(CliError::Config("grid_cells needs two counts".into()));
    }
    let reference = grid_riemann_mixture(&model, cells[0], cells[1])?.get();
    let grid = if cfg.grid.is_empty() { vec![(1000, 10)] } else { cfg.grid.clone() };
    let mut rows = Vec::new();
    let hash = cfg.hash();
    for (index, &(n, m)) in grid.iter().enumerate() {
        let s = MixtureSettings {
            n_live: n,
            steps: m,
            gamma: cfg.get("gamma", 1.0)?,
            relative: cfg.get("relative", 1e-8)?,
            draws: cfg.get("draws", 10_000)?,
            burn: cfg.get("burn", 2000)?,
            fit_points: cfg.get("fit_points", 1000)?,
            fit_thin: cfg.get::<usize>("fit_thin", 10)?.max(1),
            bandwidth_gaussian: cfg.get("bandwidth_gaussian", 0.5)?,
            bandwidth_t: cfg.get("bandwidth_t", 2.0)?,
            t_dof: cfg.get("t_dof", 3.0)?,
            omega1: cfg.get("omega1", 1.0)?,
        };
        if s.draws == 0 || s.fit_points < 2 {
            return Err(CliError::Config("draws and fit_points must be positive".into()));
        }
        let point = Point {
            cfg,
            hash: hash.clone(),
            label: format!("n={};N={n};M={m}", model.data.len()),
            d: 2,
            n_live: n,
            steps: m,
            reference,
        };
        point.sweep(index, sink, &mut rows, |rng| mixture_replication(&model, &s, &cfg.estimators, rng))?;
    }
    Ok(Outcome {
        rows,
        ..Outcome::default()
    })
}

/// The probit model named by the config and a high-precision IS reference.
pub fn probit_model(cfg: &ExperimentConfig) -> Result<ProbitModel> {
    let design = design_from_config(cfg)?;
    Ok(ProbitModel::new(design.x, design.y, cfg.get("prior_sd", 10.0)?)?)
}

fn probit(cfg: &ExperimentConfig, sink: &mut dyn RowSink) -> Result<Outcome> {
    let model = probit_model(cfg)?;
    let mult: f64 = cfg.get("curvature", 1.0)?;
    let tol: f64 = cfg.get("tol", 1e-8)?;
    let schedule = ShellSchedule::Adaptive { tol, max: 1 << 22 };
    let s1 = EllipsoidSpec::mode_and_curvature(&model, mult)?;
    let s2 = EllipsoidSpec::mode_only(&model, cfg.get("scenario2_scale", 100.0)?)?;
    let optimal = ProposalDensity::gaussian(&EllipsoidSpec::new(model.fit.mode.as_slice().to_vec(), model.curvature(mult))?);
    let reference = importance_sampling(
        &model,
        &optimal,
        cfg.get("reference_draws", 200_000)?,
        &mut RandomSource::new(cfg.seed, u64::MAX),
    )?
    .log_z
    .get();
    let hash = cfg.hash();
    let mut rows = Vec::new();
    for (index, &n) in cfg.list::<usize>("n_values", &[2, 8, 32, 128])?.iter().enumerate() {
        if n == 0 {
            return Err(CliError::Config("n_values must be positive".into()));
        }
        let point = Point {
            cfg,
            hash: hash.clone(),
            label: format!("N={n}"),
            d: model.x.ncols(),
            n_live: n,
            steps: 1,
            reference,
        };
        point.sweep(index, sink, &mut rows, |rng| {
            let mut out = Vec::new();
            for (k, (name, is_name, spec)) in [("scenario1", "is_scenario1", &s1), ("scenario2", "is_scenario2", &s2)]
                .into_iter()
                .enumerate()
            {
                if !(wants(cfg, name) || wants(cfg, is_name)) {
                    continue;
                }
                let t0 = Instant::now();
                let est = nested_ellipsoid_evidence(&model, spec, n, schedule, &rng.substream(2 * k as u64));
                let seconds = t0.elapsed().as_secs_f64();
                let budget = est.as_ref().map(|e| e.j).unwrap_or(0);
                if wants(cfg, name) {
                    out.push(Measured {
                        estimator: name,
                        result: est
                            .as_ref()
                            .map(|e| (e.log_z.get(), e.j as u64, e.likelihood_evaluations()))
                            .map_err(|e| e.to_string()),
                        seconds,
                    });
                }
                if wants(cfg, is_name) {
                    let mut r = rng.substream(2 * k as u64 + 1);
                    out.push(measure(is_name, || {
                        if budget == 0 {
                            return Err(nested_evidence::Error::Config("no matching nested-ellipsoid budget".into()));
                        }
                        let e = importance_sampling(&model, &optimal, budget, &mut r)?;
                        Ok((e.log_z.get(), budget as u64, budget as u64))
                    }));
                }
            }
            out
        })?;
    }
    Ok(Outcome {
        rows,
        ..Outcome::default()
    })
}

fn clt(cfg: &ExperimentConfig, sink: &mut dyn RowSink) -> Result<Outcome> {
    let d: usize = cfg.get("d", 2)?;
    let n: usize = cfg.get("n_live", 100)?;
    let tau: f64 = cfg.get("tau", 1e-6)?;
    if d == 0 {
        return Err(CliError::Config("d must be positive".into()));
    }
    let model = CentredGaussianToy::new(d);
    let ns = NSConfig::new(n, StopRule::FixedTruncation(model.truncation_epsilon(tau)));
    ns.validate()?;
    let t0 = Instant::now();
    let report = clt_check(&model, &ExactRadial, &ns, cfg.replications, cfg.seed)?;
    let per = t0.elapsed().as_secs_f64() / cfg.replications as f64;
    let reference = model.log_evidence().unwrap_or(0.0);
    let point = Point {
        cfg,
        hash: cfg.hash(),
        label: format!("d={d};N={n}"),
        d,
        n_live: n,
        steps: 1,
        reference,
    };
    let j = ns.fixed_iterations().unwrap_or(0) as u64;
    let sqrt_n = (n as f64).sqrt();
    let rows: Vec<ResultRow> = report
        .scaled_errors
        .iter()
        .enumerate()
        .map(|(r, e)| {
            point.row(
                r,
                Measured {
                    estimator: "ns",
                    result: Ok((reference + e / sqrt_n, j, j + n as u64)),
                    seconds: per,
                },
            )
        })
        .collect();
    sink.append(&rows)?;
    Ok(Outcome {
        rows,
        clt: Some(report),
        ..Outcome::default()
    })
}

fn enumerate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let design = design_from_config(cfg)?;
    let subsets = parse_subsets(cfg.str_or("subsets", "all"), design.x.ncols())?;
    let settings = NisSettings {
        n_live: cfg.get("n_live", 32)?,
        curvature: cfg.get("curvature", 1.0)?,
        schedule: ShellSchedule::Adaptive {
            tol: cfg.get("tol", 1e-8)?,
            max: 1 << 22,
        },
        prior_sd: cfg.get("prior_sd", 10.0)?,
    };
    if settings.n_live == 0 {
        return Err(CliError::Config("n_live must be positive".into()));
    }
    let enumeration = probit_model_enumeration(&design, &subsets, &settings, &RandomSource::new(cfg.seed, 0))?;
    Ok(Outcome {
        enumeration,
        ..Outcome::default()
    })
}
