use nalgebra::DMatrix;
use nested_evidence::alt::{importance_sampling, ProposalDensity};
use nested_evidence::constrained::RandomWalk;
use nested_evidence::models::{probit_loglik, synthetic_probit, DecentredGaussian, ProbitModel};
use nested_evidence::nested_is::{
    check_pair, nested_ellipsoid_evidence, run_nested_is, EllipsoidSpec, ReweightedPair, ShellSchedule,
};
use nested_evidence::rng::replicate;
use nested_evidence::stats;
use nested_evidence::{evidence_deterministic, run_nested, Model, NSConfig, RandomSource, StopRule};

fn ln_normal(x: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * x * x / var
}

/// Prior N(0, s² I), likelihood ∏ N(y_k; θ_k, 1).
#[derive(Debug, Clone)]
struct WidePrior {
    s: f64,
    y: Vec<f64>,
}

impl Model for WidePrior {
    fn dim(&self) -> usize {
        self.y.len()
    }
    fn log_prior(&self, theta: &[f64]) -> f64 {
        theta.iter().map(|&t| ln_normal(t, self.s * self.s)).sum()
    }
    fn log_lik(&self, theta: &[f64]) -> f64 {
        self.y.iter().zip(theta).map(|(y, t)| ln_normal(y - t, 1.0)).sum()
    }
    fn sample_prior(&self, rng: &mut RandomSource) -> Vec<f64> {
        (0..self.dim()).map(|_| self.s * rng.normal()).collect()
    }
    fn log_evidence(&self) -> Option<f64> {
        Some(self.y.iter().map(|&y| ln_normal(y, 1.0 + self.s * self.s)).sum())
    }
    fn prior_scales(&self) -> Vec<f64> {
        vec![self.s; self.dim()]
    }
}

#[test]
fn second_prior_from_one_run_matches_direct_run() {
    let y = vec![1.0, -0.5];
    let wide = WidePrior { s: 2.0, y: y.clone() };
    let pair = ReweightedPair::new(wide.clone(), DecentredGaussian::new(y)).unwrap();
    assert!(check_pair(&wide, &pair, 500, &mut RandomSource::new(1, 0)).unwrap() < 1e-10);

    let cfg = NSConfig::new(100, StopRule::RelativeContribution(1e-8)).with_steps(20);
    let sampler = RandomWalk::new();
    let reweighted = replicate(12, 31, |_, mut rng| run_nested_is(&pair, &sampler, &cfg, &mut rng).unwrap().log_z.get());
    let direct = replicate(12, 32, |_, mut rng| {
        evidence_deterministic(&run_nested(&wide, &sampler, &cfg, &mut rng).unwrap()).get()
    });
    let se = (stats::std_err(&reweighted).powi(2) + stats::std_err(&direct).powi(2)).sqrt();
    let gap = (stats::mean(&reweighted) - stats::mean(&direct)).abs();
    assert!(gap < 3.0 * se, "gap {gap} se {se}");
    let exact = wide.log_evidence().unwrap();
    assert!((stats::mean(&reweighted) - exact).abs() < 0.1);
}

#[test]
fn ellipsoid_spread_shrinks_at_root_n() {
    let model = DecentredGaussian::constant(2, 3.0);
    let spec = EllipsoidSpec::new(vec![1.2, 1.8], DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.6]))).unwrap();
    let ns = [2usize, 8, 32, 128];
    let sds: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let z = replicate(50, 40 + n as u64, |_, rng| {
                nested_ellipsoid_evidence(&model, &spec, n, ShellSchedule::default(), &rng)
                    .unwrap()
                    .log_z
                    .get()
            });
            stats::std_dev(&z)
        })
        .collect();
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = sds.iter().map(|s| s.ln()).collect();
    let (_, slope, _) = stats::linear_fit(&lx, &ly);
    assert!((slope + 0.5).abs() < 0.1, "slope {slope}, sds {sds:?}");
}

#[test]
fn ellipsoid_and_is_agree_on_probit_evidence() {
    let (x, y) = synthetic_probit(150, &[0.3, 0.8], &mut RandomSource::new(4, 0));
    let model = ProbitModel::new(x, y, 10.0).unwrap();
    let spec = EllipsoidSpec::mode_and_curvature(&model, 1.0).unwrap();
    let nis = nested_ellipsoid_evidence(&model, &spec, 64, ShellSchedule::default(), &RandomSource::new(5, 0)).unwrap();
    let g = ProposalDensity::gaussian(&EllipsoidSpec::new(spec.center.as_slice().to_vec(), model.curvature(1.0)).unwrap());
    let is = importance_sampling(&model, &g, 20_000, &mut RandomSource::new(6, 0)).unwrap();
    assert!((nis.log_z.get() - is.log_z.get()).abs() < 0.02);
}

fn log_post(theta: &[f64], m: &ProbitModel) -> f64 {
    probit_loglik(theta, &m.x, &m.y) + m.log_prior(theta)
}

/// Golden-section coordinate ascent.
fn coordinate_mode(m: &ProbitModel) -> Vec<f64> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut theta = vec![0.0; m.dim()];
    for _ in 0..60 {
        for k in 0..theta.len() {
            let (mut a, mut b) = (theta[k] - 3.0, theta[k] + 3.0);
            let f = |t: f64, th: &mut Vec<f64>| {
                th[k] = t;
                log_post(th, m)
            };
            let mut th = theta.clone();
            while b - a > 1e-9 {
                let c = b - g * (b - a);
                let d = a + g * (b - a);
                if f(c, &mut th) > f(d, &mut th) {
                    b = d;
                } else {
                    a = c;
                }
            }
            theta[k] = 0.5 * (a + b);
        }
    }
    theta
}

#[test]
fn probit_newton_mode_matches_coordinate_search() {
    let (x, y) = synthetic_probit(200, &[0.5, -0.3, 0.8], &mut RandomSource::new(77, 0));
    let model = ProbitModel::new(x, y, 10.0).unwrap();
    let oracle = coordinate_mode(&model);
    for (a, b) in model.fit.mode.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }
}

#[test]
fn duplicated_column_breaks_flat_prior_fit() {
    let (x, y) = synthetic_probit(100, &[0.2, 0.5], &mut RandomSource::new(8, 0));
    let dup = DMatrix::from_fn(100, 3, |r, c| x[(r, c.min(1))]);
    assert!(ProbitModel::new(dup, y, f64::INFINITY).is_err());
}
