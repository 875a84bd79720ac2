use std::process::Command;

use nested_evidence::models::synthetic_probit;
use nested_evidence::nested_is::ShellSchedule;
use nested_evidence::RandomSource;
use nested_evidence_cli::probit::{all_subsets, probit_model_enumeration, NisSettings, ProbitDesign};
use nested_evidence_cli::{run_experiment, ExperimentConfig, ResultRow};

fn run(text: &str) -> Vec<ResultRow> {
    let cfg = ExperimentConfig::parse(text).unwrap();
    run_experiment(&cfg, &mut Vec::new()).unwrap().rows
}

fn strip_time(rows: Vec<ResultRow>) -> Vec<String> {
    rows.into_iter()
        .map(|mut r| {
            r.wall_seconds = 0.0;
            format!("{r:?}")
        })
        .collect()
}

#[test]
fn identical_config_gives_identical_log() {
    let text = "experiment = decentred\nseed = 9\nreplications = 4\ndims = 2, 3\ngrid = 20:1, 20:2\nrelative = 1e-6\n";
    let a = strip_time(run(text));
    assert_eq!(a.len(), 16);
    assert_eq!(a, strip_time(run(text)));
    let other = strip_time(run(&text.replace("seed = 9", "seed = 10")));
    assert_ne!(a, other);
}

#[test]
fn rows_carry_config_hash_and_reference() {
    let text = "experiment = decentred\nreplications = 3\ndims = 2\ngrid = 30:2\n";
    let cfg = ExperimentConfig::parse(text).unwrap();
    let rows = run(text);
    assert!(rows.iter().all(|r| r.config_hash == cfg.hash() && r.ok()));
    assert!(rows.iter().all(|r| (r.error - (r.log_z - r.reference_log_z)).abs() < 1e-12));
    assert!(rows.iter().all(|r| r.error.abs() < 1.0));
}

#[test]
fn probit_is_rows_match_nested_ellipsoid_budget() {
    let rows = run("experiment = probit\nreplications = 3\nn_obs = 80\nn_values = 4, 16\nreference_draws = 20000\n");
    for point in ["N=4", "N=16"] {
        for (nis, is) in [("scenario1", "is_scenario1"), ("scenario2", "is_scenario2")] {
            let a: Vec<&ResultRow> = rows.iter().filter(|r| r.point == point && r.estimator == nis).collect();
            let b: Vec<&ResultRow> = rows.iter().filter(|r| r.point == point && r.estimator == is).collect();
            assert_eq!(a.len(), 3);
            for (x, y) in a.iter().zip(&b) {
                let gap = (x.likelihood_evaluations as f64 / y.likelihood_evaluations as f64 - 1.0).abs();
                assert!(gap < 0.01);
            }
        }
    }
    assert!(rows.iter().all(|r| r.error.abs() < 0.5));
}

#[test]
fn mixture_sweep_runs_every_estimator() {
    let rows = run(
        "experiment = mixture\nreplications = 2\ngrid = 100:5\ngrid_cells = 200, 120\ndraws = 2000\nburn = 500\nfit_points = 300\nfit_thin = 2\n",
    );
    for e in ["ns", "reverse_is", "is", "mixture"] {
        let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.estimator == e).collect();
        assert_eq!(mine.len(), 2, "{e}");
        assert!(mine.iter().all(|r| r.ok() && r.error.abs() < 1.0), "{e}: {mine:?}");
    }
}

#[test]
fn generating_subset_usually_wins() {
    let settings = NisSettings {
        n_live: 32,
        curvature: 1.0,
        schedule: ShellSchedule::default(),
        prior_sd: 10.0,
    };
    let mut wins = 0;
    for rep in 0..50u64 {
        let (x, y) = synthetic_probit(200, &[0.5, 0.0, 0.8], &mut RandomSource::new(1000 + rep, 0));
        let design = ProbitDesign {
            columns: vec!["c".into(), "x1".into(), "x2".into()],
            x,
            y,
        };
        let out = probit_model_enumeration(&design, &all_subsets(3), &settings, &RandomSource::new(rep, 1)).unwrap();
        let best = out
            .iter()
            .max_by(|a, b| a.probability.unwrap_or(0.0).total_cmp(&b.probability.unwrap_or(0.0)))
            .unwrap();
        if best.columns == vec![0, 2] {
            wins += 1;
        }
    }
    assert!(wins >= 45, "generating subset won {wins} of 50");
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nested-evidence"))
}

#[test]
fn exit_codes_follow_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "experiment = clt\nmystery = 1\n").unwrap();
    let s = binary().args(["run", bad.to_str().unwrap(), "--out", out]).status().unwrap();
    assert_eq!(s.code(), Some(1));

    let good = dir.path().join("good.cfg");
    std::fs::write(&good, "experiment = decentred\nreplications = 2\ndims = 2\ngrid = 20:1\n").unwrap();
    let s = binary().args(["run", good.to_str().unwrap(), "--out", out, "--threads", "1"]).status().unwrap();
    assert_eq!(s.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("decentred.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("decentred_summary.csv").exists());
    assert!(dir.path().join("decentred.meta").exists());

    // A duplicated covariate under a flat prior cannot be fitted: partial failure.
    let (x, y) = synthetic_probit(60, &[0.2, 0.6], &mut RandomSource::new(3, 0));
    let mut data = String::from("y,a,a_copy\n");
    for i in 0..60 {
        data.push_str(&format!("{},{},{}\n", u8::from(y[i]), x[(i, 1)], x[(i, 1)]));
    }
    let csv_path = dir.path().join("dup.csv");
    std::fs::write(&csv_path, data).unwrap();
    let enum_cfg = dir.path().join("enum.cfg");
    std::fs::write(
        &enum_cfg,
        format!("experiment = enumerate\ndata = {}\nprior_sd = inf\nn_live = 8\n", csv_path.display()),
    )
    .unwrap();
    let s = binary().args(["enumerate-probit", enum_cfg.to_str().unwrap(), "--out", out]).status().unwrap();
    assert_eq!(s.code(), Some(2));
    let table = std::fs::read_to_string(dir.path().join("enumeration.csv")).unwrap();
    assert!(table.contains("failed"));

    let v = binary().args(["variance", "gaussian", "2", "5e-7"]).output().unwrap();
    assert_eq!(v.status.code(), Some(0));
    let text = String::from_utf8(v.stdout).unwrap();
    let fields: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!((fields[2].parse::<f64>().unwrap() - 0.25).abs() < 1e-9);
    let s = binary().args(["variance", "gaussian", "0", "0.1"]).status().unwrap();
    assert_eq!(s.code(), Some(1));
}
