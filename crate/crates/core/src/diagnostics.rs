//! Survival curves, the asymptotic variance integral, truncation bounds and
//! the empirical checks built on them.

use std::f64::consts::LN_2;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::constrained::ConstrainedSampler;
use crate::error::{Error, Result};
use crate::logval::{LogAccumulator, LogValue};
use crate::model::Model;
use crate::models::TwoComponentMixture;
use crate::nested::{evidence_deterministic, run_nested, NSConfig, NSRun, StopRule};
use crate::quadrature::{graded_breakpoints, GaussLegendre};
use crate::rng::replicate;
use crate::special::{chi2_ln_cdf_sf, chi2_ln_pdf, chi2_quantile_tails};
use crate::stats;

type EvalFn = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;
type InverseFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Analytic(String),
    Empirical { n_live: usize, iterations: usize },
}

/// φ on (0, 1] together with its derivative, the supremum φ(0⁺) when finite,
/// and optionally the survival function φ⁻¹.
#[derive(Clone)]
pub struct SurvivalCurve {
    eval: EvalFn,
    inverse: Option<InverseFn>,
    sup: Option<f64>,
    pub provenance: Provenance,
}

impl fmt::Debug for SurvivalCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurvivalCurve")
            .field("sup", &self.sup)
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl SurvivalCurve {
    /// Builds a curve from a closure returning `(φ(x), φ'(x))`.
    pub fn new<F>(eval: F, sup: Option<f64>, provenance: Provenance) -> Self
    where
        F: Fn(f64) -> (f64, f64) + Send + Sync + 'static,
    {
        SurvivalCurve {
            eval: Arc::new(eval),
            inverse: None,
            sup,
            provenance,
        }
    }

    pub fn with_inverse<F>(mut self, inv: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.inverse = Some(Arc::new(inv));
        self
    }

    pub fn constant(c: f64) -> Self {
        SurvivalCurve::new(move |_| (c, 0.0), Some(c), Provenance::Analytic("constant".into()))
            .with_inverse(move |l| if l < c { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn phi(&self, x: f64) -> f64 {
        (self.eval)(x).0
    }

    #[inline]
    pub fn dphi(&self, x: f64) -> f64 {
        (self.eval)(x).1
    }

    #[inline]
    pub fn phi_and_slope(&self, x: f64) -> (f64, f64) {
        (self.eval)(x)
    }

    /// φ(0⁺), when finite.
    pub fn sup(&self) -> Option<f64> {
        self.sup
    }

    /// φ⁻¹(l) = pr{L(θ) > l}, when available.
    pub fn survival(&self, l: f64) -> Option<f64> {
        self.inverse.as_ref().map(|f| f(l))
    }

    /// The curve of the likelihood `c·L`.
    pub fn scaled(&self, c: f64) -> Self {
        let eval = self.eval.clone();
        let inverse = self.inverse.clone();
        SurvivalCurve {
            eval: Arc::new(move |x| {
                let (p, d) = eval(x);
                (c * p, c * d)
            }),
            inverse: inverse.map(|f| Arc::new(move |l: f64| f(l / c)) as InverseFn),
            sup: self.sup.map(|s| c * s),
            provenance: self.provenance.clone(),
        }
    }

    /// Piecewise-linear φ through `(e^{-i/N}, φ_i)` from a nested-sampling run.
    pub fn empirical(run: &NSRun) -> Self {
        let n = run.n_live as f64;
        let mut phis: Vec<f64> = run.log_phis().map(f64::exp).collect();
        phis.sort_by(f64::total_cmp);
        let j = phis.len();
        let sup = phis.last().copied();
        let table = Arc::new(phis);
        let t2 = table.clone();
        SurvivalCurve::new(
            move |x: f64| {
                if j == 0 {
                    return (0.0, 0.0);
                }
                let pos = -n * x.ln();
                if pos <= 1.0 {
                    return (table[0], 0.0);
                }
                if pos >= j as f64 {
                    return (table[j - 1], 0.0);
                }
                let i = pos.ceil() as usize;
                let (xa, xb) = ((-((i - 1) as f64) / n).exp(), (-(i as f64) / n).exp());
                let (pa, pb) = (table[i - 2], table[i - 1]);
                let slope = (pa - pb) / (xa - xb);
                (pb + slope * (x - xb), slope)
            },
            sup,
            Provenance::Empirical {
                n_live: run.n_live,
                iterations: j,
            },
        )
        .with_inverse(move |l| {
            let i = t2.partition_point(|&p| p <= l);
            (-(i as f64) / n).exp()
        })
    }
}

/// φ for the centred Gaussian toy: `2^{d/2} exp(−F_d^{-1}(x)/2)`.
///
/// φ' follows by the chain rule through the quantile derivative `1/f_d`.
pub fn phi_gaussian_toy(d: usize) -> SurvivalCurve {
    let df = d as f64;
    let ln_top = 0.5 * df * LN_2;
    SurvivalCurve::new(
        move |x: f64| {
            if x <= 0.0 {
                return (ln_top.exp(), f64::NEG_INFINITY);
            }
            if x >= 1.0 {
                return (0.0, 0.0);
            }
            let q = chi2_quantile_tails(x, 1.0 - x, df).unwrap_or(f64::NAN);
            let ln_phi = ln_top - 0.5 * q;
            let slope = -(ln_phi - LN_2 - chi2_ln_pdf(q, df)).exp();
            (ln_phi.exp(), slope)
        },
        Some(ln_top.exp()),
        Provenance::Analytic(format!("centred Gaussian toy, d={d}")),
    )
    .with_inverse(move |l: f64| {
        if l <= 0.0 {
            return 1.0;
        }
        let b = df * LN_2 - 2.0 * l.ln();
        if b <= 0.0 {
            0.0
        } else {
            chi2_ln_cdf_sf(b, df).map(|(lp, _)| lp.exp()).unwrap_or(f64::NAN)
        }
    })
}

/// Output of [`asymptotic_variance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceReport {
    pub epsilon: f64,
    /// `V = −∬_{[ε,1]²} sφ'(s) tφ'(t) log(s ∨ t) ds dt`.
    pub v: f64,
    /// `∫₀¹ φ`.
    pub z: f64,
    /// Variance of the log-scale error, `V / Z²`.
    pub v_over_z2: f64,
    /// |V(64-point) − V(32-point)|.
    pub quadrature_error: f64,
}

struct Panels {
    edges: Vec<f64>,
}

impl Panels {
    fn new(eps: f64) -> Self {
        Panels {
            edges: graded_breakpoints(eps, 2, 48),
        }
    }

    fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.edges.windows(2).map(|w| (w[0], w[1]))
    }
}

#[inline]
fn slope_weight(curve: &SurvivalCurve, x: f64) -> f64 {
    let d = curve.dphi(x);
    if d == 0.0 {
        0.0
    } else {
        x * d
    }
}

// −2 Σ_b ∫_{P_b} g(t) log t [∫_ε^t g(s) ds] dt with g(x) = xφ'(x); the inner
// integral is split at t so no rule straddles the kink on the diagonal.
fn variance_triangle(curve: &SurvivalCurve, eps: f64, gl: &GaussLegendre) -> f64 {
    let panels = Panels::new(eps);
    let spans: Vec<(f64, f64)> = panels.iter().collect();
    let per_panel: Vec<(f64, f64, f64)> = spans
        .par_iter()
        .map(|&(lo, hi)| {
            let mut full = 0.0;
            let mut logged = 0.0;
            let mut tri = 0.0;
            for (t, wt) in gl.on(lo, hi) {
                let gt = slope_weight(curve, t);
                if gt == 0.0 {
                    continue;
                }
                full += wt * gt;
                logged += wt * gt * t.ln();
                let partial: f64 = gl.on(lo, t).map(|(s, w)| w * slope_weight(curve, s)).sum();
                tri += wt * gt * t.ln() * partial;
            }
            (full, logged, tri)
        })
        .collect();
    let mut cumulative = 0.0;
    let mut total = 0.0;
    for &(full, logged, tri) in &per_panel {
        total += logged * cumulative + tri;
        cumulative += full;
    }
    -2.0 * total
}

// The same integral over the full square: off-diagonal panel pairs factor,
// diagonal blocks are split at s = t on each outer node.
fn variance_full_square(curve: &SurvivalCurve, eps: f64, gl: &GaussLegendre) -> f64 {
    let panels = Panels::new(eps);
    let spans: Vec<(f64, f64)> = panels.iter().collect();
    let pieces: Vec<(f64, f64, f64)> = spans
        .par_iter()
        .map(|&(lo, hi)| {
            let mut plain = 0.0;
            let mut logged = 0.0;
            let mut diag = 0.0;
            for (t, wt) in gl.on(lo, hi) {
                let gt = slope_weight(curve, t);
                plain += wt * gt;
                logged += wt * gt * t.ln();
                if gt == 0.0 {
                    continue;
                }
                let below: f64 = gl.on(lo, t).map(|(s, w)| w * slope_weight(curve, s)).sum();
                let above: f64 = gl
                    .on(t, hi)
                    .map(|(s, w)| w * slope_weight(curve, s) * s.ln())
                    .sum();
                diag += wt * gt * (t.ln() * below + above);
            }
            (plain, logged, diag)
        })
        .collect();
    let mut total = 0.0;
    for (a, pa) in pieces.iter().enumerate() {
        for (b, pb) in pieces.iter().enumerate() {
            total += match a.cmp(&b) {
                std::cmp::Ordering::Less => pa.0 * pb.1,
                std::cmp::Ordering::Greater => pa.1 * pb.0,
                std::cmp::Ordering::Equal => pa.2,
            };
        }
    }
    -total
}

/// `∫₀¹ φ`, with the sliver below ε integrated on its own geometric panels.
pub fn integrate_phi(curve: &SurvivalCurve, eps: f64) -> f64 {
    let gl = GaussLegendre::new(64);
    let panels = Panels::new(eps);
    let mut z: f64 = panels.iter().map(|(lo, hi)| gl.integrate(lo, hi, |x| curve.phi(x))).sum();
    let mut hi = eps;
    for _ in 0..40 {
        let lo = hi * 0.1;
        z += gl.integrate(lo, hi, |x| curve.phi(x));
        hi = lo;
    }
    z + gl.integrate(0.0, hi, |x| curve.phi(x))
}

/// The limiting variance of `√N (Ẑ − Z)` for truncation point ε.
///
/// Tensor Gauss–Legendre (64 points per axis) on panels graded
/// geometrically toward both ends of [ε, 1]; the 32-point rule provides the
/// error estimate.
pub fn asymptotic_variance(curve: &SurvivalCurve, eps: f64) -> Result<VarianceReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("truncation point must lie in (0,1), got {eps}")));
    }
    let v64 = variance_triangle(curve, eps, &GaussLegendre::new(64));
    let v32 = variance_triangle(curve, eps, &GaussLegendre::new(32));
    let err = (v64 - v32).abs();
    if !v64.is_finite() || err > 1e-6 * v64.abs() + 1e-13 {
        return Err(Error::Quadrature(format!(
            "V estimates disagree: 64-point {v64}, 32-point {v32}"
        )));
    }
    let z = integrate_phi(curve, eps);
    let v = v64.max(0.0);
    Ok(VarianceReport {
        epsilon: eps,
        v,
        z,
        v_over_z2: v / (z * z),
        quadrature_error: err,
    })
}

/// Full-square evaluation of V; used to cross-check the symmetric reduction.
pub fn asymptotic_variance_full_square(curve: &SurvivalCurve, eps: f64) -> f64 {
    variance_full_square(curve, eps, &GaussLegendre::new(64))
}

/// `log(ε φ(0⁺))`, an upper bound on the neglected mass `∫₀^ε φ`.
pub fn truncation_bound(curve: &SurvivalCurve, eps: f64) -> Result<LogValue> {
    if eps == 0.0 {
        return Ok(LogValue::ZERO);
    }
    let sup = curve
        .sup()
        .filter(|s| s.is_finite())
        .ok_or_else(|| Error::domain("φ(0+) is not finite; no truncation bound"))?;
    LogValue::from_linear(eps * sup)
}

/// Empirical check of the √N Gaussian error limit.
#[derive(Debug, Clone)]
pub struct CltReport {
    pub n_live: usize,
    pub replications: usize,
    /// `e_r = √N (log Ẑ_r − log Z)`.
    pub scaled_errors: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub predicted: VarianceReport,
    /// Empirical variance over `V/Z²`.
    pub ratio: f64,
    pub mean_tolerance: f64,
    pub pass: bool,
}

/// Runs `r` seeded replications and compares the spread of
/// `√N (log Ẑ − log Z)` with `V/Z²`.
///
/// Passes when the mean lies within `3 √(V/Z²/R)` of zero and the variance
/// ratio lies in [0.85, 1.15].
pub fn clt_check<M, S>(model: &M, sampler: &S, cfg: &NSConfig, r: usize, seed: u64) -> Result<CltReport>
where
    M: Model + ?Sized,
    S: ConstrainedSampler<M> + ?Sized,
{
    let log_z = model
        .log_evidence()
        .ok_or_else(|| Error::Config("CLT check needs an analytic evidence".into()))?;
    let curve = model
        .survival()
        .ok_or_else(|| Error::Config("CLT check needs an analytic survival curve".into()))?;
    let eps = cfg
        .stop
        .iter()
        .find_map(|s| match *s {
            StopRule::FixedTruncation(e) => Some(e),
            _ => None,
        })
        .unwrap_or(1e-12);
    let predicted = asymptotic_variance(&curve, eps)?;
    let sqrt_n = (cfg.n_live as f64).sqrt();
    let errors: Vec<Result<f64>> = replicate(r, seed, |_, mut rng| {
        let run = run_nested(model, sampler, cfg, &mut rng)?;
        if let Some(f) = run.failure {
            return Err(Error::Sampler(f));
        }
        Ok(sqrt_n * (evidence_deterministic(&run).get() - log_z))
    });
    let scaled_errors = errors.into_iter().collect::<Result<Vec<f64>>>()?;
    let mean = stats::mean(&scaled_errors);
    let variance = stats::variance(&scaled_errors);
    let ratio = if predicted.v_over_z2 > 0.0 {
        variance / predicted.v_over_z2
    } else if variance < 1e-18 {
        1.0
    } else {
        f64::INFINITY
    };
    let mean_tolerance = 3.0 * (predicted.v_over_z2 / r as f64).sqrt();
    let pass = mean.abs() <= mean_tolerance.max(1e-9) && (0.85..=1.15).contains(&ratio);
    Ok(CltReport {
        n_live: cfg.n_live,
        replications: r,
        scaled_errors,
        mean,
        variance,
        predicted,
        ratio,
        mean_tolerance,
        pass,
    })
}

/// One row of the dimension-scaling table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdRow {
    pub d: usize,
    pub epsilon: f64,
    pub v: f64,
    pub v_over_d: f64,
    /// `log(√2 / τ)`.
    pub bound: f64,
}

impl VdRow {
    pub fn within_bound(&self) -> bool {
        self.v_over_d <= self.bound
    }
}

/// V_d for the centred Gaussian toy at `ε_d = τ 2^{-d/2}`, per dimension.
pub fn vd_scaling(dims: &[usize], tau: f64) -> Result<Vec<VdRow>> {
    let bound = (std::f64::consts::SQRT_2 / tau).ln();
    dims.iter()
        .map(|&d| {
            if d == 0 {
                return Err(Error::domain("dimension must be positive"));
            }
            let eps = tau * (-0.5 * d as f64 * LN_2).exp();
            let rep = asymptotic_variance(&phi_gaussian_toy(d), eps)?;
            Ok(VdRow {
                d,
                epsilon: eps,
                v: rep.v,
                v_over_d: rep.v / d as f64,
                bound,
            })
        })
        .collect()
}

/// CSV with columns `d,epsilon,V,V_over_d,bound`.
pub fn write_vd_csv(rows: &[VdRow], w: &mut impl Write) -> Result<()> {
    writeln!(w, "d,epsilon,V,V_over_d,bound")?;
    for r in rows {
        writeln!(w, "{},{:e},{},{},{}", r.d, r.epsilon, r.v, r.v_over_d, r.bound)?;
    }
    Ok(())
}

/// CSV with the same columns for a single variance report.
pub fn write_variance_csv(d: usize, rep: &VarianceReport, bound: f64, w: &mut impl Write) -> Result<()> {
    writeln!(w, "d,epsilon,V,V_over_d,bound,Z,V_over_Z2,quadrature_error")?;
    writeln!(
        w,
        "{},{:e},{},{},{},{},{},{:e}",
        d,
        rep.epsilon,
        rep.v,
        rep.v / d as f64,
        bound,
        rep.z,
        rep.v_over_z2,
        rep.quadrature_error
    )?;
    Ok(())
}

/// Midpoint Riemann sum of `∫ L π` over the mixture's prior rectangle.
pub fn grid_riemann_mixture(model: &TwoComponentMixture, n_mu: usize, n_sigma: usize) -> Result<LogValue> {
    if n_mu < 2 || n_sigma < 2 {
        return Err(Error::domain("grid needs at least 2 cells per axis"));
    }
    let b = model.bounds;
    let dmu = (b.mu.1 - b.mu.0) / n_mu as f64;
    let ds = (b.log_sigma2.1 - b.log_sigma2.0) / n_sigma as f64;
    let rows: Vec<f64> = (0..n_mu)
        .into_par_iter()
        .map(|a| {
            let mu = b.mu.0 + (a as f64 + 0.5) * dmu;
            let mut acc = LogAccumulator::new();
            for c in 0..n_sigma {
                let s = b.log_sigma2.0 + (c as f64 + 0.5) * ds;
                acc.push(model.log_lik(&[mu, s]));
            }
            acc.value()
        })
        .collect();
    let mut acc = LogAccumulator::new();
    for v in rows {
        acc.push(v);
    }
    // prior density 1/area times cell area area/(n_mu n_sigma)
    Ok(LogValue::from_log_unchecked(acc.value() - ((n_mu * n_sigma) as f64).ln()))
}
