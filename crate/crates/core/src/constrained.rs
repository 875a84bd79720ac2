//! Draws from the prior restricted to a likelihood super-level set
//! `{θ : log L(θ) ≥ level}`.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::models::{CentredGaussianToy, DecentredGaussian};
use crate::rng::RandomSource;
use crate::special::{chi2_ln_cdf_sf, chi2_quantile_tails, truncated_std_normal};

/// What the nested-sampling loop knows when it asks for a replacement.
#[derive(Debug, Clone, Copy)]
pub struct Constraint<'a> {
    /// Log-likelihood threshold (non-strict).
    pub level: f64,
    /// The discarded point whose likelihood defines `level`.
    pub boundary: &'a [f64],
    /// A surviving live point to start a Markov chain from.
    pub start: &'a [f64],
    /// Nested-sampling iteration index, starting at 1.
    pub iteration: usize,
    /// MCMC steps (or Gibbs sweeps) per replacement.
    pub steps: usize,
}

/// A replacement point and its bookkeeping.
#[derive(Debug, Clone)]
pub struct Draw {
    pub theta: Vec<f64>,
    pub log_lik: f64,
    /// Likelihood evaluations spent producing this draw.
    pub evaluations: u64,
    pub proposed: u64,
    pub accepted: u64,
}

/// Strategy producing draws from the constrained prior of model `M`.
pub trait ConstrainedSampler<M: Model + ?Sized>: Send + Sync {
    fn draw(&self, model: &M, c: &Constraint<'_>, rng: &mut RandomSource) -> Result<Draw>;

    /// Whether draws depend on the starting survivor.
    fn uses_start(&self) -> bool {
        true
    }
}

/// Exact draw from the centred Gaussian toy's constrained prior.
///
/// `4π‖θ‖²` is χ²(d); the constraint `log L ≥ level` bounds it by
/// `b = d log 2 − 2 level`. The radius comes from the χ² quantile of a uniform
/// fraction of `F_d(b)`, the direction from normalized standard Gaussians.
pub fn exact_radial(d: usize, level: f64, rng: &mut RandomSource) -> Result<Vec<f64>> {
    let df = d as f64;
    let bound = df * LN_2 - 2.0 * level;
    if !(bound > 0.0) {
        return Err(Error::domain(format!(
            "level {level} is at or above the maximum log-likelihood {}",
            0.5 * df * LN_2
        )));
    }
    let ln_mass = if bound.is_infinite() { 0.0 } else { chi2_ln_cdf_sf(bound, df)?.0 };
    let ln_p = rng.uniform().ln() + ln_mass;
    let p = ln_p.exp();
    let q = -ln_p.exp_m1();
    let s = chi2_quantile_tails(p, q, df)?.min(bound);
    let r = (s / (4.0 * PI)).sqrt();
    let u = unit_direction(d, rng);
    Ok(u.into_iter().map(|v| r * v).collect())
}

/// Uniform direction on the unit sphere in R^d.
pub fn unit_direction(d: usize, rng: &mut RandomSource) -> Vec<f64> {
    loop {
        let v = rng.normal_vec(d);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `M` Gibbs sweeps over the decentred Gaussian's constrained prior.
///
/// The constraint is `Σ (y_k − θ_k)² ≤ Σ (y_k − θ₀_k)²`. Each coordinate is
/// redrawn from N(0, 1) truncated to `[y_k − δ, y_k + δ]` with
/// `δ² = Σ_j (y_j − θ₀_j)² − Σ_{j≠k} (y_j − θ_j)²`.
pub fn gibbs_decentred(
    start: &[f64],
    boundary: &[f64],
    y: &[f64],
    sweeps: usize,
    rng: &mut RandomSource,
) -> Result<Vec<f64>> {
    let r2_max = radius2(y, boundary);
    gibbs_decentred_radius(start, r2_max, y, sweeps, rng)
}

fn radius2(y: &[f64], theta: &[f64]) -> f64 {
    y.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn gibbs_decentred_radius(
    start: &[f64],
    r2_max: f64,
    y: &[f64],
    sweeps: usize,
    rng: &mut RandomSource,
) -> Result<Vec<f64>> {
    let mut theta = start.to_vec();
    let margin = 1e-12 * r2_max;
    for _ in 0..sweeps {
        let before = theta.clone();
        let mut total = radius2(y, &theta);
        for k in 0..theta.len() {
            let own = (y[k] - theta[k]) * (y[k] - theta[k]);
            let delta2 = r2_max - (total - own);
            if delta2 < -margin.max(1e-300) {
                return Err(Error::Sampler(format!(
                    "Gibbs start violates the constraint (δ² = {delta2})"
                )));
            }
            let delta = (delta2 - margin).max(0.0).sqrt();
            let v = truncated_std_normal(y[k] - delta, y[k] + delta, rng.uniform());
            theta[k] = v;
            let new_own = (y[k] - v) * (y[k] - v);
            total = total - own + new_own;
        }
        // rounding guard: a sweep that lands outside is discarded
        if radius2(y, &theta) > r2_max {
            theta = before;
        }
    }
    Ok(theta)
}

/// Outcome of [`rwm_constrained`].
#[derive(Debug, Clone)]
pub struct RandomWalkOutcome {
    pub theta: Vec<f64>,
    pub log_lik: f64,
    pub proposed: u64,
    pub accepted: u64,
    pub evaluations: u64,
}

/// `steps` Metropolis moves targeting the prior truncated to `log L ≥ level`.
///
/// Proposal `θ' = θ + scales ⊙ z`; accepted with probability
/// `min{1, π(θ')/π(θ)}` when `log L(θ') ≥ level`. The likelihood is evaluated
/// only for proposals that pass the prior test.
pub fn rwm_constrained<M: Model + ?Sized>(
    model: &M,
    start: &[f64],
    start_log_lik: f64,
    level: f64,
    steps: usize,
    scales: &[f64],
    rng: &mut RandomSource,
) -> RandomWalkOutcome {
    let mut theta = start.to_vec();
    let mut log_prior = model.log_prior(&theta);
    let mut log_lik = start_log_lik;
    let mut out = RandomWalkOutcome {
        theta: Vec::new(),
        log_lik,
        proposed: 0,
        accepted: 0,
        evaluations: 0,
    };
    let mut prop = vec![0.0; theta.len()];
    for _ in 0..steps {
        for (k, p) in prop.iter_mut().enumerate() {
            *p = theta[k] + scales[k] * rng.normal();
        }
        out.proposed += 1;
        let lp = model.log_prior(&prop);
        if lp == f64::NEG_INFINITY {
            continue;
        }
        if lp < log_prior && rng.uniform().ln() >= lp - log_prior {
            continue;
        }
        let ll = model.log_lik(&prop);
        out.evaluations += 1;
        if ll >= level {
            theta.copy_from_slice(&prop);
            log_prior = lp;
            log_lik = ll;
            out.accepted += 1;
        }
    }
    out.theta = theta;
    out.log_lik = log_lik;
    out
}

/// Draws from the unconstrained prior until `log L ≥ level`, at most `budget` times.
///
/// Returns the point, its log-likelihood and the number of draws used.
pub fn rejection_from_prior<M: Model + ?Sized>(
    model: &M,
    level: f64,
    budget: u64,
    rng: &mut RandomSource,
) -> Result<(Vec<f64>, f64, u64)> {
    for attempt in 1..=budget {
        let theta = model.sample_prior(rng);
        let ll = model.log_lik(&theta);
        if ll >= level {
            return Ok((theta, ll, attempt));
        }
    }
    Err(Error::Sampler(format!(
        "rejection budget of {budget} prior draws exhausted at level {level}"
    )))
}

/// Exact sampler for [`CentredGaussianToy`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactRadial;

impl ConstrainedSampler<CentredGaussianToy> for ExactRadial {
    fn draw(&self, model: &CentredGaussianToy, c: &Constraint<'_>, rng: &mut RandomSource) -> Result<Draw> {
        let theta = exact_radial(model.d, c.level, rng)?;
        let log_lik = model.log_lik(&theta).max(c.level);
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

/// Gibbs sampler for [`DecentredGaussian`]; runs `Constraint::steps` sweeps.
#[derive(Debug, Clone, Copy, Default)]
pub struct GibbsDecentred;

impl ConstrainedSampler<DecentredGaussian> for GibbsDecentred {
    fn draw(&self, model: &DecentredGaussian, c: &Constraint<'_>, rng: &mut RandomSource) -> Result<Draw> {
        let theta = gibbs_decentred(c.start, c.boundary, &model.y, c.steps, rng)?;
        let log_lik = model.log_lik(&theta);
        let moves = (c.steps * model.y.len()) as u64;
        Ok(Draw {
            theta,
            log_lik,
            evaluations: 1,
            proposed: moves,
            accepted: moves,
        })
    }
}

/// Random-walk Metropolis on the constrained prior; runs `Constraint::steps` moves.
#[derive(Debug, Clone)]
pub struct RandomWalk {
    /// Explicit per-coordinate step sizes; defaults to `scale_fraction` of the prior scales.
    pub scales: Option<Vec<f64>>,
    pub scale_fraction: f64,
    /// Step sizes are multiplied by `gamma^iteration`; 1 disables the shrinkage.
    pub gamma: f64,
}

impl RandomWalk {
    pub fn new() -> Self {
        RandomWalk {
            scales: None,
            scale_fraction: 0.1,
            gamma: 1.0,
        }
    }

    pub fn with_scales(mut self, scales: Vec<f64>) -> Self {
        self.scales = Some(scales);
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn step_sizes<M: Model + ?Sized>(&self, model: &M, iteration: usize) -> Vec<f64> {
        let shrink = self.gamma.powf(iteration as f64);
        match &self.scales {
            Some(s) => s.iter().map(|v| v * shrink).collect(),
            None => model
                .prior_scales()
                .into_iter()
                .map(|v| v * self.scale_fraction * shrink)
                .collect(),
        }
    }
}

impl Default for RandomWalk {
    fn default() -> Self {
        Self::new()
    }
}

impl<M: Model + ?Sized> ConstrainedSampler<M> for RandomWalk {
    fn draw(&self, model: &M, c: &Constraint<'_>, rng: &mut RandomSource) -> Result<Draw> {
        let scales = self.step_sizes(model, c.iteration);
        let start_ll = model.log_lik(c.start);
        let out = rwm_constrained(model, c.start, start_ll, c.level, c.steps, &scales, rng);
        Ok(Draw {
            theta: out.theta,
            log_lik: out.log_lik,
            evaluations: out.evaluations + 1,
            proposed: out.proposed,
            accepted: out.accepted,
        })
    }
}

/// Rejection from the unconstrained prior with a draw budget.
#[derive(Debug, Clone, Copy)]
pub struct Rejection {
    pub budget: u64,
}

impl<M: Model + ?Sized> ConstrainedSampler<M> for Rejection {
    fn draw(&self, model: &M, c: &Constraint<'_>, rng: &mut RandomSource) -> Result<Draw> {
        let (theta, log_lik, tries) = rejection_from_prior(model, c.level, self.budget, rng)?;
        Ok(Draw {
            theta,
            log_lik,
            evaluations: tries,
            proposed: tries,
            accepted: 1,
        })
    }

    fn uses_start(&self) -> bool {
        false
    }
}
