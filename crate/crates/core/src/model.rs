//! The model abstraction consumed by every sampler and estimator.

use crate::diagnostics::SurvivalCurve;
use crate::rng::RandomSource;

/// A Bayesian model: prior, likelihood and a way to draw from the prior.
///
/// Densities are returned as natural logs; `-inf` encodes zero. All
/// evaluators must be pure so replications can share one model across threads.
pub trait Model: Send + Sync {
    fn dim(&self) -> usize;

    fn log_prior(&self, theta: &[f64]) -> f64;

    fn log_lik(&self, theta: &[f64]) -> f64;

    fn sample_prior(&self, rng: &mut RandomSource) -> Vec<f64>;

    /// Analytic survival curve φ, when known.
    fn survival(&self) -> Option<SurvivalCurve> {
        None
    }

    /// Analytic log evidence, when known.
    fn log_evidence(&self) -> Option<f64> {
        None
    }

    /// Per-coordinate prior scale, used to size random-walk steps.
    fn prior_scales(&self) -> Vec<f64> {
        vec![1.0; self.dim()]
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_prior(&self, theta: &[f64]) -> f64 {
        (**self).log_prior(theta)
    }
    fn log_lik(&self, theta: &[f64]) -> f64 {
        (**self).log_lik(theta)
    }
    fn sample_prior(&self, rng: &mut RandomSource) -> Vec<f64> {
        (**self).sample_prior(rng)
    }
    fn survival(&self) -> Option<SurvivalCurve> {
        (**self).survival()
    }
    fn log_evidence(&self) -> Option<f64> {
        (**self).log_evidence()
    }
    fn prior_scales(&self) -> Vec<f64> {
        (**self).prior_scales()
    }
}
