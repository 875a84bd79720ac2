//! Nested importance sampling: nested sampling on an instrumental pair
//! `(π̃, L̃)` reweighted so the estimate still targets the evidence of
//! `(π, L)`, and the exact nested-ellipsoid scheme.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::constrained::{unit_direction, ConstrainedSampler, Constraint, Draw};
use crate::error::{Error, Result};
use crate::logval::{LogAccumulator, LogValue};
use crate::model::Model;
use crate::models::ProbitModel;
use crate::nested::{log_deterministic_width, run_nested, NSConfig, NSRun};
use crate::rng::RandomSource;
use crate::special::{chi2_ln_cdf_sf, chi2_quantile_tails};

/// An instrumental prior/likelihood pair, itself a [`Model`], with the
/// weight `w` satisfying `π̃ L̃ w = π L`.
pub trait InstrumentalPair: Model {
    /// `log w(θ)`.
    fn log_weight(&self, theta: &[f64]) -> f64;

    /// `log(φ_i w(θ_i))` for a recorded point with level `log_phi`.
    fn log_weighted_level(&self, theta: &[f64], log_phi: f64) -> f64 {
        log_phi + self.log_weight(theta)
    }
}

/// The target model used as its own instrumental pair with `w ≡ c`.
#[derive(Debug, Clone)]
pub struct IdentityPair<M> {
    pub model: M,
    pub log_c: f64,
}

impl<M: Model> IdentityPair<M> {
    pub fn new(model: M) -> Self {
        IdentityPair { model, log_c: 0.0 }
    }

    pub fn with_constant(model: M, log_c: f64) -> Self {
        IdentityPair { model, log_c }
    }
}

macro_rules! forward_model {
    ($field:ident) => {
        fn dim(&self) -> usize {
            self.$field.dim()
        }
        fn log_prior(&self, theta: &[f64]) -> f64 {
            self.$field.log_prior(theta)
        }
        fn log_lik(&self, theta: &[f64]) -> f64 {
            self.$field.log_lik(theta)
        }
        fn sample_prior(&self, rng: &mut RandomSource) -> Vec<f64> {
            self.$field.sample_prior(rng)
        }
        fn prior_scales(&self) -> Vec<f64> {
            self.$field.prior_scales()
        }
    };
}

impl<M: Model> Model for IdentityPair<M> {
    forward_model!(model);
}

impl<M: Model> InstrumentalPair for IdentityPair<M> {
    fn log_weight(&self, _theta: &[f64]) -> f64 {
        self.log_c
    }
}

/// Runs on `instrumental` and reweights by `π L / (π̃ L̃)` of `target`.
#[derive(Debug, Clone)]
pub struct ReweightedPair<T, I> {
    pub target: T,
    pub instrumental: I,
}

impl<T: Model, I: Model> ReweightedPair<T, I> {
    pub fn new(target: T, instrumental: I) -> Result<Self> {
        if target.dim() != instrumental.dim() {
            return Err(Error::Config("target and instrumental dimensions differ".into()));
        }
        Ok(ReweightedPair { target, instrumental })
    }
}

impl<T: Model, I: Model> Model for ReweightedPair<T, I> {
    forward_model!(instrumental);
}

impl<T: Model, I: Model> InstrumentalPair for ReweightedPair<T, I> {
    fn log_weight(&self, theta: &[f64]) -> f64 {
        let num = self.target.log_prior(theta) + self.target.log_lik(theta);
        if num == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        num - self.instrumental.log_prior(theta) - self.instrumental.log_lik(theta)
    }

    fn log_weighted_level(&self, theta: &[f64], _log_phi: f64) -> f64 {
        let num = self.target.log_prior(theta) + self.target.log_lik(theta);
        if num == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        num - self.instrumental.log_prior(theta)
    }
}

/// Checks `π(θ) > 0 ⇒ π̃(θ) > 0` and the weight identity on `count` target
/// prior draws; returns the largest log-domain discrepancy.
pub fn check_pair<T, P>(target: &T, pair: &P, count: usize, rng: &mut RandomSource) -> Result<f64>
where
    T: Model + ?Sized,
    P: InstrumentalPair + ?Sized,
{
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let theta = target.sample_prior(rng);
        let lp = target.log_prior(&theta);
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let lpt = pair.log_prior(&theta);
        if lpt == f64::NEG_INFINITY {
            return Err(Error::domain("target prior support is not covered by the instrumental prior"));
        }
        let lhs = lpt + pair.log_lik(&theta) + pair.log_weight(&theta);
        let rhs = lp + target.log_lik(&theta);
        if lhs.is_finite() || rhs.is_finite() {
            worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        }
    }
    Ok(worst)
}

/// Output of [`run_nested_is`].
#[derive(Debug, Clone)]
pub struct NestedIsRun {
    pub log_z: LogValue,
    pub run: NSRun,
}

/// Nested sampling on the pair, returning `log Σ (x_{i-1} − x_i) φ_i w(θ_i)`.
pub fn run_nested_is<P, S>(pair: &P, sampler: &S, cfg: &NSConfig, rng: &mut RandomSource) -> Result<NestedIsRun>
where
    P: InstrumentalPair + ?Sized,
    S: ConstrainedSampler<P> + ?Sized,
{
    let run = run_nested(pair, sampler, cfg, rng)?;
    let mut acc = LogAccumulator::new();
    for r in &run.records {
        acc.push(log_deterministic_width(r.i, run.n_live) + pair.log_weighted_level(&r.theta, r.log_phi.get()));
    }
    Ok(NestedIsRun {
        log_z: acc.log_value(),
        run,
    })
}

/// Gaussian N(θ̂, Σ̂) with its lower Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidSpec {
    pub center: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub chol: DMatrix<f64>,
    log_det_half: f64,
}

impl EllipsoidSpec {
    pub fn new(center: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = center.len();
        if d == 0 || sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::Config(format!(
                "centre has {d} entries but the scale matrix is {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let asym = (&sigma - sigma.transpose()).abs().max();
        if asym > 1e-12 * sigma.abs().max() {
            return Err(Error::LinAlg("scale matrix is not symmetric".into()));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::LinAlg("scale matrix is not positive definite".into()))?
            .l();
        let log_det_half = chol.diagonal().iter().map(|v| v.ln()).sum();
        Ok(EllipsoidSpec {
            center: DVector::from_vec(center),
            sigma,
            chol,
            log_det_half,
        })
    }

    /// `(θ̂, 2Σ_m)` built from a fitted probit model.
    pub fn mode_and_curvature(model: &ProbitModel, multiplier: f64) -> Result<Self> {
        Self::new(model.fit.mode.as_slice().to_vec(), model.curvature(2.0 * multiplier))
    }

    /// `(θ̂, τ I)` from the mode alone.
    pub fn mode_only(model: &ProbitModel, tau: f64) -> Result<Self> {
        let d = model.fit.mode.len();
        Self::new(model.fit.mode.as_slice().to_vec(), DMatrix::identity(d, d) * tau)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `(θ − θ̂)ᵀ Σ̂⁻¹ (θ − θ̂)`.
    pub fn mahalanobis2(&self, theta: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(theta) - &self.center;
        let z = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        z.norm_squared()
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let d = self.dim() as f64;
        -0.5 * d * (2.0 * PI).ln() - self.log_det_half - 0.5 * self.mahalanobis2(theta)
    }

    /// `θ̂ + C u`.
    pub fn map(&self, u: &[f64]) -> Vec<f64> {
        (&self.center + &self.chol * DVector::from_column_slice(u)).as_slice().to_vec()
    }

    pub fn sample(&self, rng: &mut RandomSource) -> Vec<f64> {
        let z = rng.normal_vec(self.dim());
        self.map(&z)
    }

    /// Reads a centre line followed by `d` matrix rows; entries separated by
    /// commas or whitespace, `#` lines ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let vals = t
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| Error::parse(k + 1, format!("bad number '{s}'"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push((k + 1, vals));
        }
        let Some((_, center)) = rows.first().cloned() else {
            return Err(Error::parse(1, "empty ellipsoid file"));
        };
        let d = center.len();
        if rows.len() != d + 1 {
            return Err(Error::parse(
                rows.last().map_or(1, |r| r.0),
                format!("expected {d} matrix rows, found {}", rows.len() - 1),
            ));
        }
        let mut sigma = DMatrix::zeros(d, d);
        for (r, (line, vals)) in rows[1..].iter().enumerate() {
            if vals.len() != d {
                return Err(Error::parse(*line, format!("expected {d} entries, found {}", vals.len())));
            }
            for (c, v) in vals.iter().enumerate() {
                sigma[(r, c)] = *v;
            }
        }
        Self::new(center, sigma)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// A point on the ellipsoid `{Mahalanobis² = q}` at a uniform direction.
pub fn shell_point(spec: &EllipsoidSpec, q: f64, rng: &mut RandomSource) -> Vec<f64> {
    let v = unit_direction(spec.dim(), rng);
    let r = q.sqrt();
    let u: Vec<f64> = v.iter().map(|c| r * c).collect();
    spec.map(&u)
}

/// Draw on the boundary of the ellipsoid holding Gaussian mass `x`.
pub fn ellipsoid_shell_sample(spec: &EllipsoidSpec, x: f64, rng: &mut RandomSource) -> Result<Vec<f64>> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::domain(format!("prior-mass level must lie in (0,1), got {x}")));
    }
    let q = chi2_quantile_tails(x, 1.0 - x, spec.dim() as f64)?;
    Ok(shell_point(spec, q, rng))
}

/// How many shells [`nested_ellipsoid_evidence`] visits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShellSchedule {
    Fixed(usize),
    /// Stop once `x_i` times the largest integrand seen so far falls below
    /// `tol` times the running estimate; at most `max` shells.
    Adaptive { tol: f64, max: usize },
}

impl Default for ShellSchedule {
    fn default() -> Self {
        ShellSchedule::Adaptive { tol: 1e-8, max: 1 << 20 }
    }
}

#[derive(Debug, Clone)]
pub struct EllipsoidEstimate {
    pub log_z: LogValue,
    /// Shells used; each costs one likelihood evaluation.
    pub j: usize,
    /// `log{π L / π̃}` at each shell point.
    pub log_integrand: Vec<f64>,
    /// Whether an adaptive schedule hit its cap before the tolerance.
    pub capped: bool,
}

impl EllipsoidEstimate {
    pub fn likelihood_evaluations(&self) -> u64 {
        self.j as u64
    }
}

/// Nested-ellipsoid evidence: shell `i` sits at exact Gaussian mass
/// `e^{-i/N}` and contributes `(x_{i-1} − x_i) π L / π̃`.
///
/// Shell `i` draws its direction from substream `i` of `rng`, so the result
/// does not depend on how shells are scheduled across threads.
pub fn nested_ellipsoid_evidence<M>(
    model: &M,
    spec: &EllipsoidSpec,
    n: usize,
    schedule: ShellSchedule,
    rng: &RandomSource,
) -> Result<EllipsoidEstimate>
where
    M: Model + ?Sized,
{
    if n == 0 {
        return Err(Error::Config("N must be positive".into()));
    }
    if model.dim() != spec.dim() {
        return Err(Error::Config("ellipsoid and model dimensions differ".into()));
    }
    let df = spec.dim() as f64;
    let shell = |i: usize| -> Result<f64> {
        let t = i as f64 / n as f64;
        let q = chi2_quantile_tails((-t).exp(), -(-t).exp_m1(), df)?;
        let mut sub = rng.substream(i as u64);
        let theta = shell_point(spec, q, &mut sub);
        let num = model.log_prior(&theta) + model.log_lik(&theta);
        Ok(if num == f64::NEG_INFINITY {
            num
        } else {
            num - spec.log_density(&theta)
        })
    };
    let batch = |lo: usize, hi: usize| -> Result<Vec<f64>> { (lo..=hi).into_par_iter().map(shell).collect() };

    let mut values: Vec<f64> = Vec::new();
    let mut acc = LogAccumulator::new();
    let mut capped = false;
    match schedule {
        ShellSchedule::Fixed(j) => {
            if j == 0 {
                return Err(Error::Config("j must be positive".into()));
            }
            values = batch(1, j)?;
            for (k, v) in values.iter().enumerate() {
                acc.push(log_deterministic_width(k + 1, n) + v);
            }
        }
        ShellSchedule::Adaptive { tol, max } => {
            let block = n.max(64);
            let log_tol = tol.ln();
            let mut top = f64::NEG_INFINITY;
            'outer: loop {
                let lo = values.len() + 1;
                if lo > max {
                    capped = true;
                    break;
                }
                let hi = (lo + block - 1).min(max);
                for v in batch(lo, hi)? {
                    let i = values.len() + 1;
                    values.push(v);
                    acc.push(log_deterministic_width(i, n) + v);
                    top = top.max(v);
                    let z = acc.value();
                    if i >= n && z > f64::NEG_INFINITY && -(i as f64) / n as f64 + top < log_tol + z {
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(EllipsoidEstimate {
        log_z: acc.log_value(),
        j: values.len(),
        log_integrand: values,
        capped,
    })
}

/// Log of a decreasing function of the squared Mahalanobis distance.
pub type LogLambda = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Instrumental pair with Gaussian prior `π̃ = N(θ̂, Σ̂)` and `L̃ = λ(Mahalanobis²)`.
#[derive(Clone)]
pub struct EllipsoidPair<M> {
    pub target: M,
    pub spec: EllipsoidSpec,
    log_lambda: LogLambda,
}

impl<M: Model> EllipsoidPair<M> {
    /// Uses `log λ(q) = −q/2`.
    pub fn new(target: M, spec: EllipsoidSpec) -> Result<Self> {
        Self::with_lambda(target, spec, Arc::new(|q: f64| -0.5 * q))
    }

    pub fn with_lambda(target: M, spec: EllipsoidSpec, log_lambda: LogLambda) -> Result<Self> {
        if target.dim() != spec.dim() {
            return Err(Error::Config("ellipsoid and model dimensions differ".into()));
        }
        Ok(EllipsoidPair {
            target,
            spec,
            log_lambda,
        })
    }
}

impl<M: Model> Model for EllipsoidPair<M> {
    fn dim(&self) -> usize {
        self.spec.dim()
    }
    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.spec.log_density(theta)
    }
    fn log_lik(&self, theta: &[f64]) -> f64 {
        (self.log_lambda)(self.spec.mahalanobis2(theta))
    }
    fn sample_prior(&self, rng: &mut RandomSource) -> Vec<f64> {
        self.spec.sample(rng)
    }
    fn prior_scales(&self) -> Vec<f64> {
        self.spec.sigma.diagonal().iter().map(|v| v.sqrt()).collect()
    }
}

impl<M: Model> InstrumentalPair for EllipsoidPair<M> {
    fn log_weight(&self, theta: &[f64]) -> f64 {
        self.log_weighted_level(theta, 0.0) - self.log_lik(theta)
    }

    // φ_i w(θ_i) = π L / π̃; λ never enters.
    fn log_weighted_level(&self, theta: &[f64], _log_phi: f64) -> f64 {
        let num = self.target.log_prior(theta) + self.target.log_lik(theta);
        if num == f64::NEG_INFINITY {
            return num;
        }
        num - self.spec.log_density(theta)
    }
}

/// Exact draw from `π̃` restricted to the ellipsoid through the boundary point.
#[derive(Debug, Clone, Copy, Default)]
pub struct EllipsoidExact;

impl<M: Model> ConstrainedSampler<EllipsoidPair<M>> for EllipsoidExact {
    fn draw(&self, pair: &EllipsoidPair<M>, c: &Constraint<'_>, rng: &mut RandomSource) -> Result<Draw> {
        let df = pair.spec.dim() as f64;
        let q_b = pair.spec.mahalanobis2(c.boundary);
        let (ln_f, _) = chi2_ln_cdf_sf(q_b, df)?;
        let p = rng.uniform().ln() + ln_f;
        let q = chi2_quantile_tails(p.exp(), -p.exp_m1(), df)?.min(q_b);
        let theta = shell_point(&pair.spec, q, rng);
        let log_lik = pair.log_lik(&theta).max(c.level);
        Ok(Draw {
            theta,
            log_lik,
            evaluations: 1,
            proposed: 1,
            accepted: 1,
        })
    }

    fn uses_start(&self) -> bool {
        false
    }
}
