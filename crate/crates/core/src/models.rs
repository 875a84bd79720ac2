//! Experiment models: the centred Gaussian toy, the decentred Gaussian, the
//! two-component normal mixture, and probit regression.

use std::f64::consts::{LN_2, PI};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::diagnostics::{phi_gaussian_toy, SurvivalCurve};
use crate::error::{Error, Result};
use crate::logval::log_add_exp;
use crate::model::Model;
use crate::rng::RandomSource;
use crate::special::{norm_inv_mills, norm_ln_cdf};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    -0.5 * (LN_2PI + var.ln()) - 0.5 * z * z / var
}

/// Prior N(0, 1/4π) and likelihood 2^{d/2} e^{-2π‖θ‖²} in every coordinate; Z = 1.
#[derive(Debug, Clone, Copy)]
pub struct CentredGaussianToy {
    pub d: usize,
}

impl CentredGaussianToy {
    /// Shared prior and likelihood variance 1/4π.
    pub const VARIANCE: f64 = 1.0 / (4.0 * PI);

    pub fn new(d: usize) -> Self {
        assert!(d >= 1, "dimension must be positive");
        CentredGaussianToy { d }
    }

    /// Largest attainable log-likelihood, (d/2) log 2.
    pub fn max_log_lik(&self) -> f64 {
        0.5 * self.d as f64 * LN_2
    }

    /// Truncation point ε_d = τ 2^{-d/2} that keeps ε φ(0) = τ.
    pub fn truncation_epsilon(&self, tau: f64) -> f64 {
        tau * (-0.5 * self.d as f64 * LN_2).exp()
    }
}

impl Model for CentredGaussianToy {
    fn dim(&self) -> usize {
        self.d
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        theta.iter().map(|&t| normal_ln_pdf(t, 0.0, Self::VARIANCE)).sum()
    }

    fn log_lik(&self, theta: &[f64]) -> f64 {
        let r2: f64 = theta.iter().map(|t| t * t).sum();
        self.max_log_lik() - 2.0 * PI * r2
    }

    fn sample_prior(&self, rng: &mut RandomSource) -> Vec<f64> {
        let sd = Self::VARIANCE.sqrt();
        (0..self.d).map(|_| sd * rng.normal()).collect()
    }

    fn survival(&self) -> Option<SurvivalCurve> {
        Some(phi_gaussian_toy(self.d))
    }

    fn log_evidence(&self) -> Option<f64> {
        Some(0.0)
    }

    fn prior_scales(&self) -> Vec<f64> {
        vec![Self::VARIANCE.sqrt(); self.d]
    }
}

/// Uniform prior on the unit cube with a constant likelihood `e^{log_c}`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantLikelihood {
    pub d: usize,
    pub log_c: f64,
}

impl ConstantLikelihood {
    pub fn new(d: usize, log_c: f64) -> Self {
        ConstantLikelihood { d, log_c }
    }
}

impl Model for ConstantLikelihood {
    fn dim(&self) -> usize {
        self.d
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        if theta.iter().all(|t| (0.0..=1.0).contains(t)) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn log_lik(&self, _theta: &[f64]) -> f64 {
        self.log_c
    }

    fn sample_prior(&self, rng: &mut RandomSource) -> Vec<f64> {
        (0..self.d).map(|_| rng.uniform()).collect()
    }

    fn survival(&self) -> Option<SurvivalCurve> {
        Some(SurvivalCurve::constant(self.log_c.exp()))
    }

    fn log_evidence(&self) -> Option<f64> {
        Some(self.log_c)
    }
}

/// Prior N(0, 1) and likelihood ∏ N(y_k; θ_k, 1).
#[derive(Debug, Clone)]
pub struct DecentredGaussian {
    pub y: Vec<f64>,
}

impl DecentredGaussian {
    pub fn new(y: Vec<f64>) -> Self {
        assert!(!y.is_empty());
        DecentredGaussian { y }
    }

    /// All observations equal to `value` (3 in the reference experiment).
    pub fn constant(d: usize, value: f64) -> Self {
        Self::new(vec![value; d])
    }

    /// Squared radius Σ (y_k − θ_k)² of the level set `log L = level`.
    pub fn radius2_for_level(&self, level: f64) -> f64 {
        -2.0 * level - self.y.len() as f64 * LN_2PI
    }

    pub fn radius2(&self, theta: &[f64]) -> f64 {
        self.y.iter().zip(theta).map(|(y, t)| (y - t) * (y - t)).sum()
    }

    /// Conjugate posterior: N(y/2, 1/2) per coordinate.
    pub fn posterior_mean(&self) -> Vec<f64> {
        self.y.iter().map(|y| 0.5 * y).collect()
    }

    pub fn sample_posterior(&self, rng: &mut RandomSource) -> Vec<f64> {
        let sd = 0.5f64.sqrt();
        self.y.iter().map(|y| 0.5 * y + sd * rng.normal()).collect()
    }
}

impl Model for DecentredGaussian {
    fn dim(&self) -> usize {
        self.y.len()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        theta.iter().map(|&t| normal_ln_pdf(t, 0.0, 1.0)).sum()
    }

    fn log_lik(&self, theta: &[f64]) -> f64 {
        -0.5 * self.y.len() as f64 * LN_2PI - 0.5 * self.radius2(theta)
    }

    fn sample_prior(&self, rng: &mut RandomSource) -> Vec<f64> {
        rng.normal_vec(self.y.len())
    }

    /// log Z = Σ log N(y_k; 0, 2).
    fn log_evidence(&self) -> Option<f64> {
        Some(self.y.iter().map(|&y| normal_ln_pdf(y, 0.0, 2.0)).sum())
    }
}

/// Bounds of the uniform prior on (μ, log σ²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub mu: (f64, f64),
    pub log_sigma2: (f64, f64),
}

impl Default for Rectangle {
    fn default() -> Self {
        Rectangle {
            mu: (-2.0, 6.0),
            log_sigma2: (0.001, 16.0),
        }
    }
}

impl Rectangle {
    pub fn area(&self) -> f64 {
        (self.mu.1 - self.mu.0) * (self.log_sigma2.1 - self.log_sigma2.0)
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta[0] > self.mu.0
            && theta[0] < self.mu.1
            && theta[1] > self.log_sigma2.0
            && theta[1] < self.log_sigma2.1
    }
}

/// `Σ_i log{ p N(y_i; 0, 1) + (1 − p) N(y_i; μ, σ) }` with σ = exp(log σ² / 2).
pub fn mixture_loglik(mu: f64, log_sigma2: f64, p: f64, data: &[f64]) -> f64 {
    let var = log_sigma2.exp();
    let lp = p.ln();
    let lq = (-p).ln_1p();
    data.iter()
        .map(|&y| {
            log_add_exp(
                lp + normal_ln_pdf(y, 0.0, 1.0),
                lq + normal_ln_pdf(y, mu, var),
            )
        })
        .sum()
}

/// `p N(0,1) + (1−p) N(μ, σ)` with known `p`, parameterized by θ = (μ, log σ²).
#[derive(Debug, Clone)]
pub struct TwoComponentMixture {
    pub p: f64,
    pub data: Vec<f64>,
    pub bounds: Rectangle,
}

impl TwoComponentMixture {
    pub fn new(p: f64, data: Vec<f64>) -> Self {
        assert!((0.0..=1.0).contains(&p));
        TwoComponentMixture {
            p,
            data,
            bounds: Rectangle::default(),
        }
    }

    /// `n` draws from N(2, 1.5²), the data-generating law of the reference experiment.
    pub fn synthetic_data(n: usize, rng: &mut RandomSource) -> Vec<f64> {
        (0..n).map(|_| 2.0 + 1.5 * rng.normal()).collect()
    }
}

impl Model for TwoComponentMixture {
    fn dim(&self) -> usize {
        2
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        if self.bounds.contains(theta) {
            -self.bounds.area().ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn log_lik(&self, theta: &[f64]) -> f64 {
        mixture_loglik(theta[0], theta[1], self.p, &self.data)
    }

    fn sample_prior(&self, rng: &mut RandomSource) -> Vec<f64> {
        vec![
            rng.uniform_range(self.bounds.mu.0, self.bounds.mu.1),
            rng.uniform_range(self.bounds.log_sigma2.0, self.bounds.log_sigma2.1),
        ]
    }

    fn prior_scales(&self) -> Vec<f64> {
        vec![
            self.bounds.mu.1 - self.bounds.mu.0,
            self.bounds.log_sigma2.1 - self.bounds.log_sigma2.0,
        ]
    }
}

/// `Σ_i [y_i log Φ(x_iᵀθ) + (1 − y_i) log Φ(−x_iᵀθ)]`.
pub fn probit_loglik(theta: &[f64], x: &DMatrix<f64>, y: &[bool]) -> f64 {
    assert_eq!(theta.len(), x.ncols());
    assert_eq!(y.len(), x.nrows());
    (0..x.nrows())
        .map(|i| {
            let eta = linear_predictor(x, i, theta);
            norm_ln_cdf(if y[i] { eta } else { -eta })
        })
        .sum()
}

#[inline]
fn linear_predictor(x: &DMatrix<f64>, row: usize, theta: &[f64]) -> f64 {
    theta.iter().enumerate().map(|(k, t)| x[(row, k)] * t).sum()
}

/// Gradient and Hessian of the probit log-likelihood.
pub fn probit_grad_hess(theta: &[f64], x: &DMatrix<f64>, y: &[bool]) -> (DVector<f64>, DMatrix<f64>) {
    let d = x.ncols();
    let mut g = DVector::zeros(d);
    let mut h = DMatrix::zeros(d, d);
    for i in 0..x.nrows() {
        let eta = linear_predictor(x, i, theta);
        let (sign, z) = if y[i] { (1.0, eta) } else { (-1.0, -eta) };
        let m = norm_inv_mills(z);
        let curv = -m * (z + m);
        for a in 0..d {
            let xa = x[(i, a)];
            g[a] += sign * m * xa;
            for b in 0..=a {
                h[(a, b)] += curv * xa * x[(i, b)];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
    }
    (g, h)
}

/// Posterior mode and Laplace covariance of a probit model.
#[derive(Debug, Clone)]
pub struct ProbitFit {
    pub mode: DVector<f64>,
    /// Inverse of minus the log-posterior Hessian at the mode.
    pub cov: DMatrix<f64>,
    pub iterations: usize,
}

/// Newton's method on the log posterior under a N(0, prior_sd² I) prior.
///
/// `prior_sd = inf` gives a flat prior. Stops when the gradient norm falls
/// below 1e-8; fails after 100 iterations or when minus the Hessian is not
/// positive definite.
pub fn probit_mode_hessian(x: &DMatrix<f64>, y: &[bool], prior_sd: f64) -> Result<ProbitFit> {
    let d = x.ncols();
    let prec = if prior_sd.is_finite() { 1.0 / (prior_sd * prior_sd) } else { 0.0 };
    let log_post = |t: &DVector<f64>| probit_loglik(t.as_slice(), x, y) - 0.5 * prec * t.norm_squared();
    let grad_hess = |t: &DVector<f64>| {
        let (mut g, mut h) = probit_grad_hess(t.as_slice(), x, y);
        g -= t * prec;
        for k in 0..d {
            h[(k, k)] -= prec;
        }
        (g, h)
    };

    let mut theta = DVector::zeros(d);
    let mut current = log_post(&theta);
    for it in 0..100 {
        let (g, h) = grad_hess(&theta);
        let neg_h = -h;
        let chol = neg_h.clone().cholesky().ok_or_else(|| {
            Error::LinAlg("minus the log-posterior Hessian is not positive definite".into())
        })?;
        if g.norm() < 1e-8 {
            return Ok(ProbitFit {
                mode: theta,
                cov: chol.inverse(),
                iterations: it,
            });
        }
        let step = chol.solve(&g);
        let mut scale = 1.0;
        loop {
            let cand = &theta + &step * scale;
            let val = log_post(&cand);
            if val >= current - 1e-12 * current.abs() || scale < 1e-10 {
                theta = cand;
                current = val;
                break;
            }
            scale *= 0.5;
        }
    }
    Err(Error::NoConvergence("probit Newton iterations exceeded 100".into()))
}

/// Probit regression with a N(0, prior_sd² I) prior and its cached Laplace fit.
#[derive(Debug, Clone)]
pub struct ProbitModel {
    pub x: DMatrix<f64>,
    pub y: Vec<bool>,
    pub prior_sd: f64,
    pub fit: ProbitFit,
}

impl ProbitModel {
    pub fn new(x: DMatrix<f64>, y: Vec<bool>, prior_sd: f64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Config(format!(
                "design has {} rows but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("design matrix has non-finite entries".into()));
        }
        let fit = probit_mode_hessian(&x, &y, prior_sd)?;
        Ok(ProbitModel { x, y, prior_sd, fit })
    }

    /// The model restricted to a subset of design columns.
    pub fn subset(&self, columns: &[usize]) -> Result<Self> {
        Self::new(self.x.select_columns(columns), self.y.clone(), self.prior_sd)
    }

    /// Σ_m scaled by `multiplier` (1 = inverse negative Hessian, 0.5 = the
    /// "minus twice the Hessian" reading).
    pub fn curvature(&self, multiplier: f64) -> DMatrix<f64> {
        &self.fit.cov * multiplier
    }
}

impl Model for ProbitModel {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// An infinite `prior_sd` is the flat (unnormalised) density 1.
    fn log_prior(&self, theta: &[f64]) -> f64 {
        if !self.prior_sd.is_finite() {
            return 0.0;
        }
        let v = self.prior_sd * self.prior_sd;
        theta.iter().map(|&t| normal_ln_pdf(t, 0.0, v)).sum()
    }

    fn log_lik(&self, theta: &[f64]) -> f64 {
        probit_loglik(theta, &self.x, &self.y)
    }

    fn sample_prior(&self, rng: &mut RandomSource) -> Vec<f64> {
        (0..self.dim()).map(|_| self.prior_sd * rng.normal()).collect()
    }

    fn prior_scales(&self) -> Vec<f64> {
        vec![self.prior_sd; self.dim()]
    }
}

/// Synthetic probit data: intercept column plus standard Gaussian covariates.
pub fn synthetic_probit(n: usize, theta: &[f64], rng: &mut RandomSource) -> (DMatrix<f64>, Vec<bool>) {
    let d = theta.len();
    let mut x = DMatrix::zeros(n, d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for k in 1..d {
            x[(i, k)] = rng.normal();
        }
        let eta = linear_predictor(&x, i, theta);
        y.push(eta + rng.normal() > 0.0);
    }
    (x, y)
}

/// Options for [`load_probit_csv`].
#[derive(Debug, Clone, Default)]
pub struct ProbitCsvOptions {
    pub intercept: bool,
    /// Pairs of column names whose product is appended as a cross effect.
    pub cross_effects: Vec<(String, String)>,
}

/// Probit design read from CSV.
#[derive(Debug, Clone)]
pub struct ProbitData {
    pub columns: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: Vec<bool>,
}

/// Parses `y,x1,x2,...` text: header row, first column binary response.
pub fn parse_probit_csv(text: &str, opts: &ProbitCsvOptions) -> Result<ProbitData> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if names.len() < 2 {
        return Err(Error::parse(1, "need a response column and at least one covariate"));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != names.len() {
            return Err(Error::parse(
                lineno,
                format!("expected {} fields, found {}", names.len(), cells.len()),
            ));
        }
        let mut vals = Vec::with_capacity(cells.len());
        for c in &cells {
            let v: f64 = c
                .parse()
                .map_err(|_| Error::parse(lineno, format!("non-numeric cell {c:?}")))?;
            vals.push(v);
        }
        y.push(match vals[0] {
            v if v == 0.0 => false,
            v if v == 1.0 => true,
            v => return Err(Error::parse(lineno, format!("response must be 0 or 1, found {v}"))),
        });
        rows.push(vals[1..].to_vec());
    }

    let mut columns: Vec<String> = Vec::new();
    if opts.intercept {
        columns.push("(intercept)".into());
    }
    columns.extend(names[1..].iter().cloned());
    let mut cross_idx = Vec::new();
    for (a, b) in &opts.cross_effects {
        let ia = names[1..].iter().position(|n| n == a);
        let ib = names[1..].iter().position(|n| n == b);
        match (ia, ib) {
            (Some(ia), Some(ib)) => {
                cross_idx.push((ia, ib));
                columns.push(format!("{a}:{b}"));
            }
            _ => return Err(Error::Config(format!("unknown cross-effect columns {a}:{b}"))),
        }
    }

    let n = rows.len();
    let d = columns.len();
    let mut x = DMatrix::zeros(n, d);
    for (i, row) in rows.iter().enumerate() {
        let mut k = 0;
        if opts.intercept {
            x[(i, 0)] = 1.0;
            k = 1;
        }
        for &v in row {
            x[(i, k)] = v;
            k += 1;
        }
        for &(a, b) in &cross_idx {
            x[(i, k)] = row[a] * row[b];
            k += 1;
        }
    }
    Ok(ProbitData { columns, x, y })
}

pub fn load_probit_csv(path: impl AsRef<Path>, opts: &ProbitCsvOptions) -> Result<ProbitData> {
    parse_probit_csv(&std::fs::read_to_string(path)?, opts)
}

/// Writes `y` followed by the design columns, 17 significant digits.
pub fn save_probit_csv(path: impl AsRef<Path>, names: &[String], x: &DMatrix<f64>, y: &[bool]) -> Result<()> {
    let mut out = String::from("y");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for i in 0..x.nrows() {
        out.push(if y[i] { '1' } else { '0' });
        for k in 0..x.ncols() {
            let _ = write!(out, ",{:.16e}", x[(i, k)]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One-column CSV of mixture observations; an optional non-numeric header is skipped.
pub fn parse_mixture_csv(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let cell = line.trim();
        if cell.is_empty() {
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if idx == 0 => continue,
            Err(_) => return Err(Error::parse(idx + 1, format!("non-numeric cell {cell:?}"))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decentred_evidence_closed_form() {
        let m = DecentredGaussian::constant(1, 3.0);
        // mpmath: -log(4π)/2 - 9/4
        assert!((m.log_evidence().unwrap() - -3.515_512_123_484_645).abs() < 1e-12);
        let m10 = DecentredGaussian::constant(10, 3.0);
        let want = -5.0 * (4.0 * PI).ln() - 90.0 / 4.0;
        assert!((m10.log_evidence().unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn decentred_level_radius_round_trip() {
        let m = DecentredGaussian::constant(4, 3.0);
        let t = [0.3, -1.0, 2.0, 5.5];
        let r2 = m.radius2_for_level(m.log_lik(&t));
        assert!((r2 - m.radius2(&t)).abs() < 1e-12);
    }

    #[test]
    fn toy_likelihood_is_gaussian_density() {
        let m = CentredGaussianToy::new(3);
        let t = [0.1, -0.2, 0.05];
        assert!((m.log_lik(&t) - m.log_prior(&t)).abs() < 1e-12);
        assert!((m.log_lik(&[0.0; 3]) - 1.5 * LN_2).abs() < 1e-15);
    }

    #[test]
    fn toy_prior_mc_brackets_one() {
        for d in [1usize, 2, 5] {
            let m = CentredGaussianToy::new(d);
            let mut rng = RandomSource::new(11, d as u64);
            let n = 1_000_000;
            let vals: Vec<f64> = (0..n).map(|_| m.log_lik(&m.sample_prior(&mut rng)).exp()).collect();
            let mean = crate::stats::mean(&vals);
            let se = crate::stats::std_err(&vals);
            assert!((mean - 1.0).abs() < 3.0 * se, "d={d} mean={mean} se={se}");
        }
    }

    #[test]
    fn mixture_loglik_examples() {
        let v = mixture_loglik(0.0, 0.0, 0.5, &[0.0]);
        assert!((v - -0.918_938_533_204_672_7).abs() < 1e-12);
        let data = [0.3, -1.2, 2.5];
        let a = mixture_loglik(1.0, 2.0, 1.0, &data);
        let b = mixture_loglik(-1.5, 9.0, 1.0, &data);
        assert_eq!(a, b);
        let expect: f64 = data.iter().map(|&y| normal_ln_pdf(y, 0.0, 1.0)).sum();
        assert!((a - expect).abs() < 1e-12);
        let mut prev = f64::NEG_INFINITY;
        for ls2 in [-2.0, -6.0, -12.0, -24.0] {
            let v = mixture_loglik(data[0], ls2, 0.5, &data);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn mixture_prior_is_flat_inside() {
        let m = TwoComponentMixture::new(0.5, vec![1.0]);
        let a = m.log_prior(&[0.0, 1.0]);
        let b = m.log_prior(&[5.9, 15.0]);
        assert_eq!(a, b);
        assert_eq!(m.log_prior(&[7.0, 1.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn probit_loglik_examples() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, -1.0, 1.0, 2.0]);
        let y = vec![true, false, true];
        assert!((probit_loglik(&[0.0, 0.0], &x, &y) - 3.0 * 0.5f64.ln()).abs() < 1e-14);
        let x1 = DMatrix::from_row_slice(1, 1, &[1.0]);
        let v = probit_loglik(&[12.0], &x1, &[true]);
        assert!(v < 0.0 && v > -1e-30);
    }

    #[test]
    fn probit_gradient_matches_finite_differences() {
        let mut rng = RandomSource::new(5, 0);
        let (x, y) = synthetic_probit(50, &[0.2, -0.7, 1.1], &mut rng);
        for _ in 0..5 {
            let t: Vec<f64> = rng.normal_vec(3);
            let (g, h) = probit_grad_hess(&t, &x, &y);
            for k in 0..3 {
                let step = 1e-6;
                let mut up = t.clone();
                let mut dn = t.clone();
                up[k] += step;
                dn[k] -= step;
                let fd = (probit_loglik(&up, &x, &y) - probit_loglik(&dn, &x, &y)) / (2.0 * step);
                assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0), "k={k} fd={fd} g={}", g[k]);
                let (gu, _) = probit_grad_hess(&up, &x, &y);
                let (gd, _) = probit_grad_hess(&dn, &x, &y);
                for a in 0..3 {
                    let fdh = (gu[a] - gd[a]) / (2.0 * step);
                    assert!((fdh - h[(a, k)]).abs() <= 1e-5 * h[(a, k)].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn probit_symmetric_design_mode_is_zero() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0]);
        let y = vec![true, true, false, false];
        let fit = probit_mode_hessian(&x, &y, 10.0).unwrap();
        assert!(fit.mode.norm() < 1e-8);
        assert!(fit.cov.clone().cholesky().is_some());
    }

    #[test]
    fn probit_flat_prior_density_is_one() {
        let (x, y) = synthetic_probit(50, &[0.1, 0.4], &mut RandomSource::new(6, 0));
        let m = ProbitModel::new(x, y, f64::INFINITY).unwrap();
        assert_eq!(m.log_prior(&[3.0, -2.0]), 0.0);
    }

    #[test]
    fn probit_flat_prior_duplicate_column_fails() {
        let mut rng = RandomSource::new(9, 0);
        let (x, y) = synthetic_probit(40, &[0.1, 0.5], &mut rng);
        let dup = DMatrix::from_fn(40, 3, |i, k| x[(i, k.min(1))]);
        assert!(matches!(probit_mode_hessian(&dup, &y, f64::INFINITY), Err(Error::LinAlg(_))));
    }

    #[test]
    fn csv_examples() {
        let opts = ProbitCsvOptions {
            intercept: true,
            ..Default::default()
        };
        let d = parse_probit_csv("y,x1\n1,0.5\n", &opts).unwrap();
        assert_eq!(d.x, DMatrix::from_row_slice(1, 2, &[1.0, 0.5]));
        assert_eq!(d.y, vec![true]);
        match parse_probit_csv("y,x1\n2,0.5\n", &opts) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_probit_csv("y,x1\n1,0.5,3\n", &opts), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_probit_csv("y,x1\n1,abc\n", &opts), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn csv_cross_effects() {
        let opts = ProbitCsvOptions {
            intercept: true,
            cross_effects: vec![("a".into(), "b".into())],
        };
        let d = parse_probit_csv("y,a,b\n0,2,3\n1,-1,4\n", &opts).unwrap();
        assert_eq!(d.columns, vec!["(intercept)", "a", "b", "a:b"]);
        assert_eq!(d.x[(0, 3)], 6.0);
        assert_eq!(d.x[(1, 3)], -4.0);
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = RandomSource::new(3, 1);
        let (x, y) = synthetic_probit(20, &[0.5, -0.3, 0.8], &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let names: Vec<String> = vec!["c0".into(), "c1".into(), "c2".into()];
        save_probit_csv(&path, &names, &x, &y).unwrap();
        let back = load_probit_csv(&path, &ProbitCsvOptions::default()).unwrap();
        assert_eq!(back.x, x);
        assert_eq!(back.y, y);
    }
}
