//! Competing evidence estimators: reverse importance sampling (Ẑ₁),
//! importance sampling (Ẑ₂) and the mixture / bridge estimator (Ẑ₃).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand_distr::StudentT;

use crate::error::{Error, Result};
use crate::logval::{log_add_exp, log_sum_exp_raw, LogValue};
use crate::model::Model;
use crate::models::DecentredGaussian;
use crate::nested::{posterior_weights, NSRun};
use crate::nested_is::EllipsoidSpec;
use crate::rng::RandomSource;
use crate::special::ln_gamma;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Gaussian,
    StudentT(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Analytic(String),
    KernelFit {
        kind: KernelKind,
        bandwidth_factor: f64,
        bandwidth: Vec<f64>,
        points: usize,
    },
}

type LogDensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type SamplerFn = Arc<dyn Fn(&mut RandomSource) -> Vec<f64> + Send + Sync>;

/// A normalized proposal density `g`, optionally with a sampler.
#[derive(Clone)]
pub struct ProposalDensity {
    log_density: LogDensityFn,
    sampler: Option<SamplerFn>,
    pub provenance: Provenance,
}

impl fmt::Debug for ProposalDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProposalDensity")
            .field("sampler", &self.sampler.is_some())
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl ProposalDensity {
    pub fn analytic<F>(name: &str, log_density: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        ProposalDensity {
            log_density: Arc::new(log_density),
            sampler: None,
            provenance: Provenance::Analytic(name.to_string()),
        }
    }

    pub fn with_sampler<F>(mut self, sampler: F) -> Self
    where
        F: Fn(&mut RandomSource) -> Vec<f64> + Send + Sync + 'static,
    {
        self.sampler = Some(Arc::new(sampler));
        self
    }

    /// `N(θ̂, Σ̂)`.
    pub fn gaussian(spec: &EllipsoidSpec) -> Self {
        let a = spec.clone();
        let b = spec.clone();
        ProposalDensity::analytic("gaussian", move |t| a.log_density(t)).with_sampler(move |rng| b.sample(rng))
    }

    /// The model's own prior.
    pub fn prior<M: Model + Clone + 'static>(model: &M) -> Self {
        let a = model.clone();
        let b = model.clone();
        ProposalDensity::analytic("prior", move |t| a.log_prior(t)).with_sampler(move |rng| b.sample_prior(rng))
    }

    /// The exact posterior of a decentred Gaussian model.
    pub fn decentred_posterior(model: &DecentredGaussian) -> Self {
        let mean = model.posterior_mean();
        let m = model.clone();
        ProposalDensity::analytic("decentred posterior", move |t| {
            t.iter()
                .zip(&mean)
                .map(|(x, mu)| -0.5 * (PI).ln() - (x - mu) * (x - mu))
                .sum()
        })
        .with_sampler(move |rng| m.sample_posterior(rng))
    }

    #[inline]
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        (self.log_density)(theta)
    }

    pub fn has_sampler(&self) -> bool {
        self.sampler.is_some()
    }

    pub fn sample(&self, rng: &mut RandomSource) -> Result<Vec<f64>> {
        self.sampler
            .as_ref()
            .map(|s| s(rng))
            .ok_or_else(|| Error::Config("proposal has no sampler".into()))
    }
}

/// `0.9 · min(sd, IQR/1.34) · T^{-1/5}`.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let sd = stats::std_dev(xs);
    let iqr = stats::iqr(xs) / 1.34;
    let spread = if iqr > 0.0 { sd.min(iqr) } else { sd };
    0.9 * spread * (xs.len() as f64).powf(-0.2)
}

#[derive(Debug, Clone)]
struct ProductKernel {
    points: Vec<Vec<f64>>,
    h: Vec<f64>,
    kind: KernelKind,
    log_norm: f64,
}

impl ProductKernel {
    // Σ_i Π_k K(z_ik) in linear scale; the log-domain pass only runs when
    // every term underflows.
    fn log_density(&self, theta: &[f64]) -> f64 {
        let z2 = |p: &[f64]| -> f64 {
            p.iter()
                .zip(theta)
                .zip(&self.h)
                .map(|((x, t), h)| {
                    let z = (t - x) / h;
                    z * z
                })
                .sum()
        };
        match self.kind {
            KernelKind::Gaussian => {
                // exp underflows (slowly, through subnormals) past this point
                let s: f64 = self
                    .points
                    .iter()
                    .map(|p| {
                        let q = z2(p);
                        if q < 1400.0 {
                            (-0.5 * q).exp()
                        } else {
                            0.0
                        }
                    })
                    .sum();
                if s > 1e-280 {
                    return s.ln() + self.log_norm;
                }
                log_sum_exp_raw(self.points.iter().map(|p| -0.5 * z2(p))) + self.log_norm
            }
            KernelKind::StudentT(nu) => {
                let expo = -0.5 * (nu + 1.0);
                let int_expo = expo.fract() == 0.0 && expo.abs() < 64.0;
                let s: f64 = self
                    .points
                    .iter()
                    .map(|p| {
                        let prod: f64 = p
                            .iter()
                            .zip(theta)
                            .zip(&self.h)
                            .map(|((x, t), h)| {
                                let z = (t - x) / h;
                                1.0 + z * z / nu
                            })
                            .product();
                        if int_expo {
                            prod.powi(expo as i32)
                        } else {
                            prod.powf(expo)
                        }
                    })
                    .sum();
                if s > 1e-280 {
                    return s.ln() + self.log_norm;
                }
                let terms = self.points.iter().map(|p| {
                    p.iter()
                        .zip(theta)
                        .zip(&self.h)
                        .map(|((x, t), h)| expo * ((t - x) * (t - x) / (h * h * nu)).ln_1p())
                        .sum::<f64>()
                });
                log_sum_exp_raw(terms) + self.log_norm
            }
        }
    }

    fn sample(&self, rng: &mut RandomSource) -> Vec<f64> {
        let p = &self.points[rng.index(self.points.len())];
        match self.kind {
            KernelKind::Gaussian => p.iter().zip(&self.h).map(|(x, h)| x + h * rng.normal()).collect(),
            KernelKind::StudentT(nu) => {
                let t = StudentT::new(nu).expect("degrees of freedom are positive");
                p.iter().zip(&self.h).map(|(x, h)| x + h * rng.sample(&t)).collect()
            }
        }
    }
}

/// Product-kernel density estimate with per-coordinate Silverman bandwidths
/// scaled by `bandwidth_factor`.
pub fn kernel_proposal_fit(sample: &[Vec<f64>], kind: KernelKind, bandwidth_factor: f64) -> Result<ProposalDensity> {
    if sample.len() < 2 {
        return Err(Error::domain("kernel fit needs at least two points"));
    }
    if let KernelKind::StudentT(nu) = kind {
        if !(nu > 0.0) {
            return Err(Error::domain("t kernel needs positive degrees of freedom"));
        }
    }
    if !(bandwidth_factor > 0.0) {
        return Err(Error::domain("bandwidth factor must be positive"));
    }
    let d = sample[0].len();
    if sample.iter().any(|p| p.len() != d) {
        return Err(Error::domain("sample points have different dimensions"));
    }
    let mut h = Vec::with_capacity(d);
    for k in 0..d {
        let col: Vec<f64> = sample.iter().map(|p| p[k]).collect();
        let b = silverman_bandwidth(&col) * bandwidth_factor;
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::domain(format!("coordinate {k} has zero spread")));
        }
        h.push(b);
    }
    let log_k1 = match kind {
        KernelKind::Gaussian => -0.5 * (2.0 * PI).ln(),
        KernelKind::StudentT(nu) => ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln(),
    };
    let log_norm = d as f64 * log_k1 - h.iter().map(|v| v.ln()).sum::<f64>() - (sample.len() as f64).ln();
    let kernel = Arc::new(ProductKernel {
        points: sample.to_vec(),
        h: h.clone(),
        kind,
        log_norm,
    });
    let k2 = kernel.clone();
    Ok(ProposalDensity {
        log_density: Arc::new(move |t| kernel.log_density(t)),
        sampler: Some(Arc::new(move |rng| k2.sample(rng))),
        provenance: Provenance::KernelFit {
            kind,
            bandwidth_factor,
            bandwidth: h,
            points: sample.len(),
        },
    })
}

/// A log-scale evidence estimate with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub log_z: LogValue,
    /// Approximate standard error of `log Ẑ`.
    pub std_err: f64,
}

// log of the mean of exp(terms), with sd(w)/(√T mean(w)) as the error on the log.
fn log_mean_exp(terms: &[f64]) -> (f64, f64) {
    let t = terms.len() as f64;
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    let w: Vec<f64> = terms.iter().map(|v| (v - top).exp()).collect();
    let m = stats::mean(&w);
    let se = if terms.len() > 1 { stats::std_dev(&w) / (t.sqrt() * m) } else { f64::INFINITY };
    (top + m.ln(), se)
}

/// Reverse importance sampling from a posterior sample:
/// `Ẑ₁ = 1 / mean{g(θ_t) / (π(θ_t) L(θ_t))}`.
pub fn reverse_is<M: Model + ?Sized>(posterior_sample: &[Vec<f64>], model: &M, g: &ProposalDensity) -> Result<Estimate> {
    if posterior_sample.is_empty() {
        return Err(Error::domain("posterior sample is empty"));
    }
    let mut terms = Vec::with_capacity(posterior_sample.len());
    for (k, t) in posterior_sample.iter().enumerate() {
        let lp = model.log_prior(t) + model.log_lik(t);
        if lp == f64::NEG_INFINITY {
            return Err(Error::domain(format!("posterior sample point {k} has zero posterior density")));
        }
        terms.push(g.log_density(t) - lp);
    }
    let (lm, se) = log_mean_exp(&terms);
    Ok(Estimate {
        log_z: LogValue::new(-lm)?,
        std_err: se,
    })
}

/// Importance sampling with `T` draws from `g`:
/// `Ẑ₂ = mean{π(θ_t) L(θ_t) / g(θ_t)}`.
pub fn importance_sampling<M: Model + ?Sized>(
    model: &M,
    g: &ProposalDensity,
    t: usize,
    rng: &mut RandomSource,
) -> Result<Estimate> {
    if t == 0 {
        return Err(Error::domain("T must be positive"));
    }
    let mut terms = Vec::with_capacity(t);
    for _ in 0..t {
        let theta = g.sample(rng)?;
        let lp = model.log_prior(&theta);
        let v = if lp == f64::NEG_INFINITY {
            lp
        } else {
            lp + model.log_lik(&theta) - g.log_density(&theta)
        };
        terms.push(v);
    }
    let (lm, se) = log_mean_exp(&terms);
    Ok(Estimate {
        log_z: LogValue::new(lm)?,
        std_err: se,
    })
}

/// A posterior MCMC kernel `K(θ, ·)`.
pub trait PosteriorKernel<M: Model + ?Sized>: Send + Sync {
    fn step(&self, model: &M, theta: &[f64], rng: &mut RandomSource) -> Vec<f64>;
}

/// Random-walk Metropolis on `π L` with Gaussian steps.
#[derive(Debug, Clone)]
pub struct RandomWalkKernel {
    pub scales: Vec<f64>,
    pub steps: usize,
}

impl RandomWalkKernel {
    pub fn new(scales: Vec<f64>, steps: usize) -> Self {
        RandomWalkKernel { scales, steps }
    }

    /// `2.38/√d` times the per-coordinate sample standard deviation.
    pub fn from_sample(sample: &[Vec<f64>], steps: usize) -> Self {
        let d = sample.first().map_or(1, |p| p.len());
        let c = 2.38 / (d as f64).sqrt();
        let scales = (0..d)
            .map(|k| {
                let col: Vec<f64> = sample.iter().map(|p| p[k]).collect();
                c * stats::std_dev(&col)
            })
            .collect();
        RandomWalkKernel { scales, steps }
    }
}

impl<M: Model + ?Sized> PosteriorKernel<M> for RandomWalkKernel {
    fn step(&self, model: &M, theta: &[f64], rng: &mut RandomSource) -> Vec<f64> {
        let log_post = |t: &[f64]| {
            let lp = model.log_prior(t);
            if lp == f64::NEG_INFINITY {
                lp
            } else {
                lp + model.log_lik(t)
            }
        };
        let mut cur = theta.to_vec();
        let mut cur_lp = log_post(&cur);
        let mut prop = cur.clone();
        for _ in 0..self.steps {
            for ((p, c), s) in prop.iter_mut().zip(&cur).zip(&self.scales) {
                *p = c + s * rng.normal();
            }
            let lp = log_post(&prop);
            if lp > f64::NEG_INFINITY && (lp >= cur_lp || rng.uniform().ln() < lp - cur_lp) {
                cur.copy_from_slice(&prop);
                cur_lp = lp;
            }
        }
        cur
    }
}

/// Independent exact posterior draws for the decentred Gaussian.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactPosterior;

impl PosteriorKernel<DecentredGaussian> for ExactPosterior {
    fn step(&self, model: &DecentredGaussian, _theta: &[f64], rng: &mut RandomSource) -> Vec<f64> {
        model.sample_posterior(rng)
    }
}

/// `t` states from `init`, each `thin` kernel steps after the previous one.
pub fn posterior_chain<M, K>(
    model: &M,
    kernel: &K,
    init: &[f64],
    t: usize,
    thin: usize,
    rng: &mut RandomSource,
) -> Vec<Vec<f64>>
where
    M: Model + ?Sized,
    K: PosteriorKernel<M> + ?Sized,
{
    let thin = thin.max(1);
    let mut out = Vec::with_capacity(t);
    let mut cur = init.to_vec();
    for _ in 0..t {
        for _ in 0..thin {
            cur = kernel.step(model, &cur, rng);
        }
        out.push(cur.clone());
    }
    out
}

/// One state of the auxiliary-variable chain on `m ∝ ω₁ π L + g`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureChainState {
    pub theta: Vec<f64>,
    /// 1 when θ came from the posterior kernel, 2 when drawn from `g`.
    pub delta: u8,
}

// log of ω₁πL(θ) and of g(θ)
fn mixture_parts<M: Model + ?Sized>(model: &M, g: &ProposalDensity, log_w1: f64, theta: &[f64]) -> (f64, f64) {
    let lp = model.log_prior(theta);
    let a = if lp == f64::NEG_INFINITY {
        lp
    } else {
        log_w1 + lp + model.log_lik(theta)
    };
    (a, g.log_density(theta))
}

/// `ω₁πL/(ω₁πL + g)` in log domain.
#[inline]
fn log_first_component(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        a - log_add_exp(a, b)
    }
}

/// Gibbs sampler on `(θ, δ)`: δ from its conditional given the previous θ,
/// then θ from the posterior kernel (δ = 1) or independently from `g` (δ = 2).
pub fn mixture_gibbs<M, K>(
    model: &M,
    g: &ProposalDensity,
    omega1: f64,
    t: usize,
    kernel: &K,
    init: &[f64],
    rng: &mut RandomSource,
) -> Result<Vec<MixtureChainState>>
where
    M: Model + ?Sized,
    K: PosteriorKernel<M> + ?Sized,
{
    if !(omega1 > 0.0 && omega1.is_finite()) {
        return Err(Error::domain("ω₁ must be positive"));
    }
    if !g.has_sampler() {
        return Err(Error::Config("mixture Gibbs needs a proposal sampler".into()));
    }
    let log_w1 = omega1.ln();
    let mut chain = Vec::with_capacity(t);
    let mut cur = init.to_vec();
    for _ in 0..t {
        let (a, b) = mixture_parts(model, g, log_w1, &cur);
        let p1 = log_first_component(a, b).exp();
        let delta = if rng.uniform() < p1 { 1 } else { 2 };
        cur = if delta == 1 {
            kernel.step(model, &cur, rng)
        } else {
            g.sample(rng)?
        };
        chain.push(MixtureChainState {
            theta: cur.clone(),
            delta,
        });
    }
    Ok(chain)
}

fn rb_terms<M: Model + ?Sized>(chain: &[MixtureChainState], model: &M, g: &ProposalDensity, omega1: f64) -> Vec<(f64, f64)> {
    let log_w1 = omega1.ln();
    chain
        .iter()
        .map(|s| {
            let (a, b) = mixture_parts(model, g, log_w1, &s.theta);
            let den = log_add_exp(a, b);
            (a - den, b - den)
        })
        .collect()
}

/// `ξ̂ = mean{ω₁πL/(ω₁πL + g)}` over the chain.
pub fn rao_blackwell_xi<M: Model + ?Sized>(chain: &[MixtureChainState], model: &M, g: &ProposalDensity, omega1: f64) -> f64 {
    if chain.is_empty() {
        return f64::NAN;
    }
    let s: f64 = rb_terms(chain, model, g, omega1).iter().map(|(a, _)| a.exp()).sum();
    s / chain.len() as f64
}

/// Fraction of states with δ = 1.
pub fn delta_frequency(chain: &[MixtureChainState]) -> f64 {
    chain.iter().filter(|s| s.delta == 1).count() as f64 / chain.len() as f64
}

/// Solves `ω₁ Z / (ω₁ Z + 1) = ξ̂` for `log Z`.
pub fn z3_from_xi(xi: f64, omega1: f64) -> Result<LogValue> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::domain(format!("ξ̂ = {xi} must lie strictly inside (0,1)")));
    }
    if !(omega1 > 0.0) {
        return Err(Error::domain("ω₁ must be positive"));
    }
    LogValue::new(xi.ln() - omega1.ln() - (-xi).ln_1p())
}

/// The two-sum ratio `(1/ω₁) Σ ω₁πL/(ω₁πL+g) / Σ g/(ω₁πL+g)`.
pub fn z3_bridge_ratio<M: Model + ?Sized>(chain: &[MixtureChainState], model: &M, g: &ProposalDensity, omega1: f64) -> Result<LogValue> {
    let terms = rb_terms(chain, model, g, omega1);
    let num = log_sum_exp_raw(terms.iter().map(|t| t.0));
    let den = log_sum_exp_raw(terms.iter().map(|t| t.1));
    if den == f64::NEG_INFINITY {
        return Err(Error::domain("proposal density vanishes on the whole chain"));
    }
    LogValue::new(num - den - omega1.ln())
}

/// `Ẑ₃` from the chain, with a batch-means standard error on the log scale.
pub fn mixture_estimate<M: Model + ?Sized>(chain: &[MixtureChainState], model: &M, g: &ProposalDensity, omega1: f64) -> Result<Estimate> {
    let terms: Vec<f64> = rb_terms(chain, model, g, omega1).iter().map(|t| t.0.exp()).collect();
    if terms.is_empty() {
        return Err(Error::domain("empty chain"));
    }
    let xi = stats::mean(&terms);
    let log_z = z3_from_xi(xi, omega1)?;
    let batches = 20.min(terms.len());
    let size = terms.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| stats::mean(&terms[b * size..(b + 1) * size])).collect();
    let se_xi = if batches > 1 { stats::std_err(&means) } else { f64::INFINITY };
    Ok(Estimate {
        log_z,
        std_err: se_xi / (xi * (1.0 - xi)),
    })
}

/// Points from a comma-separated file, one per line; a non-numeric first
/// line is taken as a header.
pub fn parse_points_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = t.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) => {
                if let Some(first) = out.first() {
                    if first.len() != v.len() {
                        return Err(Error::parse(k + 1, format!("expected {} columns, found {}", first.len(), v.len())));
                    }
                }
                out.push(v);
            }
            Err(_) if k == 0 => continue,
            Err(_) => return Err(Error::parse(k + 1, "non-numeric cell")),
        }
    }
    if out.is_empty() {
        return Err(Error::parse(1, "no points"));
    }
    Ok(out)
}

/// Multinomial resample of a nested-sampling run by its posterior weights.
pub fn resample_run(run: &NSRun, count: usize, rng: &mut RandomSource) -> Result<Vec<Vec<f64>>> {
    let weights = posterior_weights(run)?;
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for (_, w) in &weights {
        acc += w;
        cdf.push(acc);
    }
    Ok((0..count)
        .map(|_| {
            let u = rng.uniform() * acc;
            let k = cdf.partition_point(|&c| c < u).min(weights.len() - 1);
            weights[k].0.to_vec()
        })
        .collect())
}
