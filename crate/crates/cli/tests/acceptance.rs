//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). It exits non-zero when a
//! criterion fails unless the criterion is listed in `KNOWN_FAILURES`, whose
//! failure is explained in the README.

use std::time::Instant;

use nested_evidence::alt::{
    mixture_gibbs, rao_blackwell_xi, z3_bridge_ratio, z3_from_xi, ExactPosterior, MixtureChainState, ProposalDensity,
};
use nested_evidence::constrained::{ExactRadial, GibbsDecentred};
use nested_evidence::diagnostics::{clt_check, vd_scaling};
use nested_evidence::models::{CentredGaussianToy, DecentredGaussian};
use nested_evidence::nested::posterior_expectation;
use nested_evidence::rng::replicate;
use nested_evidence::stats;
use nested_evidence::{evidence_deterministic, run_nested, NSConfig, RandomSource, StopRule};
use nested_evidence_cli::{preset, run_experiment, ExperimentConfig, ResultRow};

const KNOWN_FAILURES: &[&str] = &["decentred bias pattern", "nested-ellipsoid vs IS"];

struct Report {
    failed: Vec<&'static str>,
}

impl Report {
    fn line(&mut self, name: &'static str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name);
        }
    }
}

fn toy_errors(n: usize, r: usize, seed: u64) -> Vec<f64> {
    let model = CentredGaussianToy::new(2);
    let cfg = NSConfig::new(n, StopRule::FixedTruncation(model.truncation_epsilon(1e-6)));
    replicate(r, seed, |_, mut rng| {
        evidence_deterministic(&run_nested(&model, &ExactRadial, &cfg, &mut rng).unwrap()).get()
    })
}

fn preset_rows(name: &str, overrides: &[(&str, &str)]) -> Vec<ResultRow> {
    let mut cfg = ExperimentConfig::parse(preset(name).unwrap()).unwrap();
    for (k, v) in overrides {
        cfg.params.insert(k.to_string(), v.to_string());
    }
    let out = run_experiment(&cfg, &mut Vec::new()).unwrap();
    assert_eq!(out.failures(), 0, "{name} preset had failing replications");
    out.rows
}

fn column<'a>(rows: &'a [ResultRow], estimator: &str, point: &str) -> Vec<&'a ResultRow> {
    rows.iter().filter(|r| r.estimator == estimator && r.point == point).collect()
}

fn errors(rows: &[&ResultRow]) -> Vec<f64> {
    rows.iter().map(|r| r.error).collect()
}

fn analytic_recovery(rep: &mut Report) {
    let t0 = Instant::now();
    let e = toy_errors(1000, 100, 101);
    let secs = t0.elapsed().as_secs_f64();
    let (med, iqr) = (stats::median(&e), stats::iqr(&e));
    rep.line(
        "analytic-Z recovery",
        med.abs() < 0.02 && iqr < 0.1 && secs < 60.0,
        format!("median {med:+.4} (<0.02), IQR {iqr:.4} (<0.1), {secs:.1}s (<60s)"),
    );
}

fn clt_match(rep: &mut Report) {
    let t0 = Instant::now();
    let model = CentredGaussianToy::new(2);
    let cfg = NSConfig::new(100, StopRule::FixedTruncation(model.truncation_epsilon(1e-6)));
    let c = clt_check(&model, &ExactRadial, &cfg, 500, 42).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    rep.line(
        "CLT variance match",
        (c.ratio - 1.0).abs() <= 0.15 && secs < 180.0,
        format!(
            "empirical {:.4} vs V/Z² {:.4}, ratio {:.3} (within 15%), {secs:.1}s",
            c.variance, c.predicted.v_over_z2, c.ratio
        ),
    );
}

fn rate(rep: &mut Report) {
    let v25 = stats::variance(&toy_errors(25, 500, 251));
    let v400 = stats::variance(&toy_errors(400, 500, 4001));
    let ratio = v25 / v400;
    rep.line(
        "rate check",
        (12.0..=20.0).contains(&ratio),
        format!("var(N=25) {v25:.6} / var(N=400) {v400:.6} = {ratio:.2} (in [12, 20])"),
    );
}

fn dimension_scaling(rep: &mut Report) {
    let rows = vd_scaling(&[1, 2, 5, 10, 20, 40], 1e-6).unwrap();
    let bounded = rows.iter().all(|r| r.within_bound());
    let changes: Vec<f64> = rows
        .windows(2)
        .filter(|w| w[0].d >= 10)
        .map(|w| (w[1].v_over_d - w[0].v_over_d).abs() / w[0].v_over_d)
        .collect();
    let stable = !changes.is_empty() && changes.iter().all(|c| *c < 0.5);
    let vals: Vec<String> = rows.iter().map(|r| format!("{}:{:.4}", r.d, r.v_over_d)).collect();
    rep.line(
        "dimension scaling",
        bounded && stable,
        format!(
            "V_d/d {} (bound {:.3}); doubling changes {:?}",
            vals.join(" "),
            rows[0].bound,
            changes.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>()
        ),
    );
}

fn decentred_pattern(rep: &mut Report) {
    let rows = preset_rows("decentred", &[]);
    let dims = [5usize, 10, 20];
    let med = |d: usize, m: usize| stats::median(&errors(&column(&rows, "ns", &format!("d={d};N=100;M={m}"))));
    let m1: Vec<f64> = dims.iter().map(|&d| med(d, 1)).collect();
    let decreasing = m1.windows(2).all(|w| w[1] < w[0]);
    let others: Vec<f64> = dims.iter().flat_map(|&d| [med(d, 3), med(d, 5)]).collect();
    let centred = others.iter().all(|m| m.abs() <= 0.5);
    let mut r2s = Vec::new();
    for m in [1, 3, 5] {
        let its: Vec<f64> = dims
            .iter()
            .map(|&d| {
                let c = column(&rows, "ns", &format!("d={d};N=100;M={m}"));
                stats::mean(&c.iter().map(|r| r.iterations as f64).collect::<Vec<_>>())
            })
            .collect();
        let x: Vec<f64> = dims.iter().map(|&d| d as f64).collect();
        r2s.push(stats::linear_fit(&x, &its).2);
    }
    let linear = r2s.iter().all(|r| *r > 0.99);
    rep.line(
        "decentred bias pattern",
        decreasing && centred && linear,
        format!(
            "M=1 medians {:?} (strictly decreasing); M=3,5 medians {:?} (|.|<=0.5); iteration R² {:?} (>0.99)",
            m1.iter().map(|v| format!("{v:+.3}")).collect::<Vec<_>>(),
            others.iter().map(|v| format!("{v:+.3}")).collect::<Vec<_>>(),
            r2s.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
        ),
    );
}

fn mixture_agreement(rep: &mut Report) {
    let rows = preset_rows("mixture", &[]);
    let point = rows[0].point.clone();
    let names = ["ns", "reverse_is", "is", "mixture"];
    let stat: Vec<(f64, f64)> = names
        .iter()
        .map(|n| {
            let e = errors(&column(&rows, n, &point));
            (stats::median(&e), stats::iqr(&e))
        })
        .collect();
    let close = stat.iter().all(|(m, _)| m.abs() < 0.2);
    let (ns, rev, is, mix) = (stat[0].1, stat[1].1, stat[2].1, stat[3].1);
    let ordered = is <= mix && mix <= rev && rev <= ns;
    let detail: Vec<String> = names
        .iter()
        .zip(&stat)
        .map(|(n, (m, q))| format!("{n} median {m:+.4} IQR {q:.4}"))
        .collect();
    rep.line(
        "mixture estimator agreement",
        close && ordered,
        format!("reference {:.5}; {}", rows[0].reference_log_z, detail.join(", ")),
    );
}

fn probit_sds(rows: &[ResultRow], n: usize) -> [f64; 4] {
    let p = format!("N={n}");
    let sd = |e: &str| stats::std_dev(&column(rows, e, &p).iter().map(|r| r.log_z).collect::<Vec<_>>());
    [sd("scenario1"), sd("scenario2"), sd("is_scenario1"), sd("is_scenario2")]
}

/// `(scenario 1 beats IS, scenario 2 within 3x, details)`.
fn probit_verdict(rows: &[ResultRow]) -> (bool, bool, String) {
    let (mut beats, mut close) = (true, true);
    let mut parts = Vec::new();
    for n in [8usize, 32, 128] {
        let [s1, s2, i1, _] = probit_sds(rows, n);
        let budget_gap = column(rows, "scenario1", &format!("N={n}"))
            .iter()
            .zip(column(rows, "is_scenario1", &format!("N={n}")))
            .map(|(a, b)| (a.likelihood_evaluations as f64 / b.likelihood_evaluations as f64 - 1.0).abs())
            .fold(0.0, f64::max);
        beats &= s1 <= i1 && budget_gap < 0.01;
        close &= s2 <= 3.0 * s1;
        parts.push(format!("N={n}: sd s1 {s1:.4} IS {i1:.4} s2 {s2:.4} (s2/s1 {:.2})", s2 / s1));
    }
    (beats, close, parts.join("; "))
}

fn nested_ellipsoid_vs_is(rep: &mut Report) {
    let rows = preset_rows("probit", &[]);
    let (beats, close, detail) = probit_verdict(&rows);
    rep.line(
        "nested-ellipsoid vs IS",
        beats && close,
        format!("inverse negative Hessian: s1 <= IS {beats}, s2 <= 3 s1 {close}; {detail}"),
    );
    // Informational: the same comparison with the covariance halved, i.e.
    // reading the curvature as the inverse of minus twice the Hessian.
    let rows = preset_rows("probit", &[("curvature", "0.5")]);
    let (beats, close, detail) = probit_verdict(&rows);
    println!("INFO nested-ellipsoid vs IS, halved curvature: s1 <= IS {beats}, s2 <= 3 s1 {close}; {detail}");
    println!("INFO external 7-covariate data set not supplied; its model-probability check is not run");
}

fn recycling(rep: &mut Report) {
    let model = DecentredGaussian::constant(1, 3.0);
    let cfg = NSConfig::new(100, StopRule::RelativeContribution(1e-8));
    let means = replicate(50, 808, |_, mut rng| {
        let run = run_nested(&model, &GibbsDecentred, &cfg, &mut rng).unwrap();
        posterior_expectation(&run, |t| vec![t[0]]).unwrap()[0]
    });
    let (m, se) = (stats::mean(&means), stats::std_err(&means));
    rep.line(
        "posterior recycling",
        (m - 1.5).abs() <= 3.0 * se,
        format!("posterior mean {m:.5} vs 1.5, |diff| {:.5} <= 3 se {:.5}", (m - 1.5).abs(), 3.0 * se),
    );
}

fn bridge_identity(rep: &mut Report) {
    let model = DecentredGaussian::constant(1, 3.0);
    let g = ProposalDensity::analytic("N(1, 4)", |t: &[f64]| {
        -0.5 * (8.0 * std::f64::consts::PI).ln() - (t[0] - 1.0).powi(2) / 8.0
    })
    .with_sampler(|rng: &mut RandomSource| vec![1.0 + 2.0 * rng.normal()]);
    let mut rng = RandomSource::new(5, 0);
    let mut worst: f64 = 0.0;
    for omega in [0.01, 1.0, 30.0, 1e3] {
        let gibbs = mixture_gibbs(&model, &g, omega, 2000, &ExactPosterior, &[1.5], &mut rng).unwrap();
        let arbitrary: Vec<MixtureChainState> = (0..2000)
            .map(|_| MixtureChainState {
                theta: vec![4.0 * rng.normal()],
                delta: u8::from(rng.uniform() < 0.5),
            })
            .collect();
        for chain in [gibbs, arbitrary] {
            let a = z3_from_xi(rao_blackwell_xi(&chain, &model, &g, omega), omega).unwrap().get();
            let b = z3_bridge_ratio(&chain, &model, &g, omega).unwrap().get();
            worst = worst.max((a - b).abs());
        }
    }
    rep.line("bridge identity", worst <= 1e-10, format!("max |log gap| {worst:.2e} (<=1e-10)"));
}

fn main() {
    let t0 = Instant::now();
    let mut rep = Report { failed: Vec::new() };
    analytic_recovery(&mut rep);
    clt_match(&mut rep);
    rate(&mut rep);
    dimension_scaling(&mut rep);
    decentred_pattern(&mut rep);
    mixture_agreement(&mut rep);
    nested_ellipsoid_vs_is(&mut rep);
    recycling(&mut rep);
    bridge_identity(&mut rep);
    println!(
        "acceptance: {} of 9 passed in {:.0}s",
        9 - rep.failed.len(),
        t0.elapsed().as_secs_f64()
    );
    let unexpected: Vec<&&str> = rep.failed.iter().filter(|f| !KNOWN_FAILURES.contains(f)).collect();
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
