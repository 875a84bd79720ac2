//! The nested sampling engine.
//!
//! A run keeps `N` live points, repeatedly records the one with the lowest
//! likelihood and replaces it by a draw from the prior constrained to lie at
//! or above that likelihood. Evidence is then a Riemann sum over the recorded
//! thresholds against prior-mass abscissas, either the deterministic
//! `x_i = e^{-i/N}` or random streams of products of beta(N, 1) variates.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::path::Path;

use crate::constrained::{ConstrainedSampler, Constraint};
use crate::error::{Error, Result};
use crate::logval::{log1mexp, LogAccumulator, LogValue};
use crate::model::Model;
use crate::rng::RandomSource;

/// How prior-mass abscissas are assigned to the recorded thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// `x_i = exp(-i/N)`.
    Deterministic,
    /// `K` independent streams `x_{i,k} = x_{i-1,k} t_{i,k}`, `t ~ beta(N, 1)`.
    Random(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Stop at `j = ⌈-N log ε⌉`, so that `x_j ≤ ε < x_{j-1}`.
    FixedTruncation(f64),
    /// Stop once `(x_{i-1} - x_i) φ_i < ratio · Ẑ_i`.
    RelativeContribution(f64),
    MaxIterations(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Truncation,
    RelativeContribution,
    MaxIterations,
    SamplerFailure,
}

#[derive(Debug, Clone)]
pub struct NSConfig {
    pub n_live: usize,
    pub scheme: Scheme,
    pub stop: Vec<StopRule>,
    /// MCMC steps per replacement, passed to the constrained sampler.
    pub mcmc_steps: usize,
}

impl NSConfig {
    pub fn new(n_live: usize, stop: StopRule) -> Self {
        NSConfig {
            n_live,
            scheme: Scheme::Deterministic,
            stop: vec![stop],
            mcmc_steps: 1,
        }
    }

    pub fn with_steps(mut self, m: usize) -> Self {
        self.mcmc_steps = m;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_stop(mut self, rule: StopRule) -> Self {
        self.stop.push(rule);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_live == 0 {
            return Err(Error::Config("live-point count N must be at least 1".into()));
        }
        if self.mcmc_steps == 0 {
            return Err(Error::Config("MCMC steps M must be at least 1".into()));
        }
        if let Scheme::Random(0) = self.scheme {
            return Err(Error::Config("random scheme needs K >= 1 streams".into()));
        }
        if self.stop.is_empty() {
            return Err(Error::Config("at least one stop rule is required".into()));
        }
        for rule in &self.stop {
            match *rule {
                StopRule::FixedTruncation(e) if !(e > 0.0 && e < 1.0) => {
                    return Err(Error::Config(format!("truncation ε must lie in (0,1), got {e}")))
                }
                StopRule::RelativeContribution(r) if !(r > 0.0 && r < 1.0) => {
                    return Err(Error::Config(format!("relative ratio must lie in (0,1), got {r}")))
                }
                StopRule::MaxIterations(0) => {
                    return Err(Error::Config("max iterations must be positive".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Iteration count prescribed by the fixed rules, if any.
    pub fn fixed_iterations(&self) -> Option<usize> {
        self.stop
            .iter()
            .filter_map(|r| match *r {
                StopRule::FixedTruncation(eps) => Some(truncation_iterations(self.n_live, eps)),
                StopRule::MaxIterations(j) => Some(j),
                StopRule::RelativeContribution(_) => None,
            })
            .min()
    }
}

/// `⌈-N log ε⌉`; products that are integers up to rounding are not bumped up.
pub fn truncation_iterations(n_live: usize, eps: f64) -> usize {
    let t = -(n_live as f64) * eps.ln();
    let rounded = t.round();
    if (t - rounded).abs() <= 1e-9 * t.abs().max(1.0) {
        rounded.max(1.0) as usize
    } else {
        t.ceil().max(1.0) as usize
    }
}

/// One discarded point.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub i: usize,
    pub theta: Vec<f64>,
    /// log φ_i = log L(θ_i).
    pub log_phi: LogValue,
}

#[derive(Debug, Clone)]
pub struct NSRun {
    pub n_live: usize,
    pub records: Vec<Record>,
    /// Surviving live points and their log-likelihoods at termination.
    pub live_final: Vec<(Vec<f64>, f64)>,
    pub seed: u64,
    pub stream: u64,
    pub stop_reason: StopReason,
    /// Set when the constrained sampler failed; records are then partial.
    pub failure: Option<String>,
    pub likelihood_evaluations: u64,
    pub proposed: u64,
    pub accepted: u64,
}

impl NSRun {
    pub fn j(&self) -> usize {
        self.records.len()
    }

    pub fn is_valid(&self) -> bool {
        self.failure.is_none()
    }

    pub fn log_phis(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.log_phi.get())
    }

    /// Fraction of MCMC proposals that were rejected.
    pub fn stall_fraction(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            1.0 - self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn estimate(&self, scheme: Scheme, rng: &mut RandomSource) -> LogValue {
        match scheme {
            Scheme::Deterministic => evidence_deterministic(self),
            Scheme::Random(k) => evidence_random(self, k, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// log(x_{i-1} − x_i) for the deterministic abscissas.
#[inline]
pub fn log_deterministic_width(i: usize, n_live: usize) -> f64 {
    let n = n_live as f64;
    -((i - 1) as f64) / n + log1mexp(1.0 / n)
}

/// Runs nested sampling until one of the configured stop rules fires.
///
/// The lowest-likelihood live point (lowest index on ties) is recorded and
/// replaced by `sampler`, started from a survivor chosen uniformly among the
/// other `N − 1` points. A sampler failure ends the run early with
/// [`NSRun::failure`] set.
pub fn run_nested<M, S>(model: &M, sampler: &S, cfg: &NSConfig, rng: &mut RandomSource) -> Result<NSRun>
where
    M: Model + ?Sized,
    S: ConstrainedSampler<M> + ?Sized,
{
    cfg.validate()?;
    let n = cfg.n_live;
    let mut live: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut live_ll: Vec<f64> = Vec::with_capacity(n);
    for _ in 0..n {
        let t = model.sample_prior(rng);
        live_ll.push(model.log_lik(&t));
        live.push(t);
    }
    let mut heap: BinaryHeap<Reverse<Key>> = live_ll
        .iter()
        .enumerate()
        .map(|(k, &ll)| Reverse(Key(ll, k)))
        .collect();

    let fixed = cfg.fixed_iterations();
    let relative: Option<f64> = cfg.stop.iter().find_map(|r| match *r {
        StopRule::RelativeContribution(v) => Some(v),
        _ => None,
    });

    let mut run = NSRun {
        n_live: n,
        records: Vec::with_capacity(fixed.unwrap_or(1024).min(1 << 24)),
        live_final: Vec::new(),
        seed: rng.seed(),
        stream: rng.stream(),
        stop_reason: StopReason::MaxIterations,
        failure: None,
        likelihood_evaluations: n as u64,
        proposed: 0,
        accepted: 0,
    };
    let mut z = LogAccumulator::new();
    let mut i = 0usize;
    loop {
        i += 1;
        let Reverse(Key(level, worst)) = heap.pop().expect("live set is never empty");
        let log_phi = LogValue::new(level)?;
        run.records.push(Record {
            i,
            theta: live[worst].clone(),
            log_phi,
        });
        let term = log_deterministic_width(i, n) + level;
        z.push(term);

        let mut stop = None;
        if let Some(j) = fixed {
            if i >= j {
                stop = Some(if cfg.stop.contains(&StopRule::MaxIterations(j)) {
                    StopReason::MaxIterations
                } else {
                    StopReason::Truncation
                });
            }
        }
        if stop.is_none() {
            if let Some(ratio) = relative {
                let zv = z.value();
                if zv > f64::NEG_INFINITY && term < ratio.ln() + zv {
                    stop = Some(StopReason::RelativeContribution);
                }
            }
        }
        if let Some(reason) = stop {
            run.stop_reason = reason;
            heap.push(Reverse(Key(level, worst)));
            break;
        }

        let start_idx = if n > 1 && sampler.uses_start() {
            let k = rng.index(n - 1);
            if k >= worst {
                k + 1
            } else {
                k
            }
        } else {
            worst
        };
        let c = Constraint {
            level,
            boundary: &live[worst],
            start: &live[start_idx],
            iteration: i,
            steps: cfg.mcmc_steps,
        };
        match sampler.draw(model, &c, rng) {
            Ok(d) => {
                debug_assert!(d.log_lik >= level, "sampler returned a point below the level");
                run.likelihood_evaluations += d.evaluations;
                run.proposed += d.proposed;
                run.accepted += d.accepted;
                live[worst] = d.theta;
                live_ll[worst] = d.log_lik;
                heap.push(Reverse(Key(d.log_lik, worst)));
            }
            Err(e) => {
                run.failure = Some(e.to_string());
                run.stop_reason = StopReason::SamplerFailure;
                heap.push(Reverse(Key(level, worst)));
                break;
            }
        }
    }
    run.live_final = live.into_iter().zip(live_ll).collect();
    Ok(run)
}

/// `log Σ_{i=1}^{j} (x_{i-1} − x_i) φ_i` with `x_i = e^{-i/N}`.
///
/// The surviving live points are not folded in.
pub fn evidence_deterministic(run: &NSRun) -> LogValue {
    let mut acc = LogAccumulator::new();
    for r in &run.records {
        acc.push(log_deterministic_width(r.i, run.n_live) + r.log_phi.get());
    }
    acc.log_value()
}

/// Average over `k` random abscissa streams of the log Riemann sum.
///
/// `t = u^{1/N}` is a beta(N, 1) draw; the recorded φ sequence is reused and
/// the stopping index is the one the run used.
pub fn evidence_random(run: &NSRun, k: usize, rng: &mut RandomSource) -> LogValue {
    assert!(k >= 1, "K must be at least 1");
    let n = run.n_live as f64;
    let mut total = 0.0;
    for _ in 0..k {
        let mut log_x = 0.0;
        let mut acc = LogAccumulator::new();
        for r in &run.records {
            let log_t = rng.uniform().ln() / n;
            acc.push(log_x + log1mexp(-log_t) + r.log_phi.get());
            log_x += log_t;
        }
        total += acc.value();
    }
    LogValue::from_log_unchecked(total / k as f64)
}

/// Normalized importance weights `∝ (x_{i-1} − x_i) φ_i` of the recorded points.
pub fn posterior_weights(run: &NSRun) -> Result<Vec<(&[f64], f64)>> {
    let log_z = evidence_deterministic(run).get();
    if log_z == f64::NEG_INFINITY {
        return Err(Error::domain("all nested-sampling weights are zero"));
    }
    Ok(run
        .records
        .iter()
        .map(|r| {
            let lw = log_deterministic_width(r.i, run.n_live) + r.log_phi.get() - log_z;
            (r.theta.as_slice(), lw.exp())
        })
        .collect())
}

/// Weighted average `Σ w_i f(θ_i)` with the normalized posterior weights.
pub fn posterior_expectation<F>(run: &NSRun, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let weights = posterior_weights(run)?;
    let mut out: Vec<f64> = Vec::new();
    for (theta, w) in weights {
        let v = f(theta);
        if out.is_empty() {
            out = vec![0.0; v.len()];
        }
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// Writes the line-oriented record file.
///
/// A `#`-prefixed header carries `N`, `j`, the scheme and the seed; each
/// following line is `i,logphi,theta_1,...,theta_d` with 17 significant digits.
pub fn write_run(run: &NSRun, scheme: Scheme, w: &mut impl std::io::Write) -> Result<()> {
    let scheme = match scheme {
        Scheme::Deterministic => "deterministic".to_string(),
        Scheme::Random(k) => format!("random:{k}"),
    };
    let mut out = String::new();
    let _ = writeln!(out, "# N = {}", run.n_live);
    let _ = writeln!(out, "# j = {}", run.j());
    let _ = writeln!(out, "# scheme = {scheme}");
    let _ = writeln!(out, "# seed = {}", run.seed);
    let _ = writeln!(out, "# stream = {}", run.stream);
    let _ = writeln!(out, "# valid = {}", run.is_valid());
    for r in &run.records {
        let _ = write!(out, "{},{}", r.i, fmt17(r.log_phi.get()));
        for v in &r.theta {
            let _ = write!(out, ",{}", fmt17(*v));
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn save_run(run: &NSRun, scheme: Scheme, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_run(run, scheme, &mut f)
}

fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Parses a record file written by [`write_run`]. The live set is not stored,
/// so `live_final` comes back empty.
pub fn parse_run(text: &str) -> Result<(NSRun, Scheme)> {
    let mut n_live = None;
    let mut seed = 0;
    let mut stream = 0;
    let mut scheme = Scheme::Deterministic;
    let mut valid = true;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            let Some((k, v)) = h.split_once('=') else { continue };
            let v = v.trim();
            let bad = |what: &str| Error::parse(lineno, format!("bad {what} {v:?}"));
            match k.trim() {
                "N" => n_live = Some(v.parse::<usize>().map_err(|_| bad("N"))?),
                "seed" => seed = v.parse().map_err(|_| bad("seed"))?,
                "stream" => stream = v.parse().map_err(|_| bad("stream"))?,
                "valid" => valid = v.parse().map_err(|_| bad("valid flag"))?,
                "scheme" => {
                    scheme = if v == "deterministic" {
                        Scheme::Deterministic
                    } else if let Some(k) = v.strip_prefix("random:") {
                        Scheme::Random(k.parse().map_err(|_| bad("scheme"))?)
                    } else {
                        return Err(bad("scheme"));
                    }
                }
                _ => {}
            }
            continue;
        }
        let mut cells = line.split(',').map(str::trim);
        let i: usize = cells
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::parse(lineno, "bad iteration index"))?;
        let lp: f64 = cells
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::parse(lineno, "bad logphi"))?;
        let theta = cells
            .map(|c| c.parse::<f64>().map_err(|_| Error::parse(lineno, format!("bad coordinate {c:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        records.push(Record {
            i,
            theta,
            log_phi: LogValue::new(lp).map_err(|_| Error::parse(lineno, "logphi is NaN or +inf"))?,
        });
    }
    let n_live = n_live.ok_or_else(|| Error::parse(1, "missing N header"))?;
    Ok((
        NSRun {
            n_live,
            records,
            live_final: Vec::new(),
            seed,
            stream,
            stop_reason: StopReason::MaxIterations,
            failure: if valid { None } else { Some("marked invalid in record file".into()) },
            likelihood_evaluations: 0,
            proposed: 0,
            accepted: 0,
        },
        scheme,
    ))
}

pub fn load_run(path: impl AsRef<Path>) -> Result<(NSRun, Scheme)> {
    parse_run(&std::fs::read_to_string(path)?)
}
