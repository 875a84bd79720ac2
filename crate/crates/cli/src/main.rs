use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nested_evidence::diagnostics::{asymptotic_variance, phi_gaussian_toy, write_variance_csv};
use nested_evidence_cli::config::ExperimentKind;
use nested_evidence_cli::log::{summarise, write_metadata, write_summary};
use nested_evidence_cli::probit::write_enumeration;
use nested_evidence_cli::{run_experiment, CliError, ExperimentConfig, Outcome, ResultLog, Result};

#[derive(Parser)]
#[command(name = "nested-evidence", version, about = "Nested sampling evidence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replication sweep from a config file or preset name.
    Run { config: String },
    /// Evidence and posterior probability of each probit covariate subset.
    EnumerateProbit { config: String },
    /// Asymptotic variance of the centred Gaussian toy.
    Variance { model: String, d: usize, eps: f64 },
    /// CLT check of the centred Gaussian toy.
    Clt { config: String },
}

fn load(arg: &str, cli: &Cli, expect: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load_or_preset(arg)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(kind) = expect {
        if cfg.experiment != kind {
            return Err(CliError::Config(format!(
                "this command needs experiment = {}, got {}",
                kind.name(),
                cfg.experiment.name()
            )));
        }
    }
    Ok(cfg)
}

fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dir = cfg.out_dir.clone();
    let name = cfg.experiment.name();
    let tabular = !matches!(cfg.experiment, ExperimentKind::VdScale | ExperimentKind::Enumerate);
    let outcome = if tabular {
        let mut log = ResultLog::create(&dir, cfg)?;
        let outcome = run_experiment(cfg, &mut log)?;
        println!("wrote {}", log.path().display());
        outcome
    } else {
        std::fs::create_dir_all(&dir)?;
        write_metadata(&dir.join(format!("{name}.meta")), cfg)?;
        run_experiment(cfg, &mut Vec::new())?
    };
    let mut summary = summarise(&outcome.rows);
    if let Some(rep) = &outcome.clt {
        for s in &mut summary {
            s.statistic = rep.ratio;
        }
        println!(
            "clt: N={} R={} mean={:.4} variance={:.4} predicted={:.4} ratio={:.3} {}",
            rep.n_live,
            rep.replications,
            rep.mean,
            rep.variance,
            rep.predicted.v_over_z2,
            rep.ratio,
            if rep.pass { "PASS" } else { "FAIL" }
        );
    }
    if tabular {
        write_summary(&dir.join(format!("{name}_summary.csv")), &summary)?;
    }
    for s in &summary {
        println!(
            "{:<14} {:<22} ok={:<4} failed={:<3} median={:+.4} iqr={:.4} sd={:.4} its={:.0}",
            s.estimator, s.point, s.count, s.failures, s.median_error, s.iqr_error, s.sd_log_z, s.mean_iterations
        );
    }
    if !outcome.vd.is_empty() {
        let mut f = std::fs::File::create(dir.join("vdscale.csv"))?;
        nested_evidence::diagnostics::write_vd_csv(&outcome.vd, &mut f)?;
        for r in &outcome.vd {
            println!("d={:<3} V={:.6} V/d={:.6} bound={:.6}", r.d, r.v, r.v_over_d, r.bound);
        }
        println!("wrote {}", dir.join("vdscale.csv").display());
    }
    if !outcome.enumeration.is_empty() {
        report_enumeration(&dir, &outcome)?;
    }
    Ok(outcome)
}

fn report_enumeration(dir: &Path, outcome: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("enumeration.csv");
    write_enumeration(&path, &outcome.enumeration)?;
    let mut sorted: Vec<_> = outcome.enumeration.iter().collect();
    sorted.sort_by(|a, b| b.probability.unwrap_or(-1.0).total_cmp(&a.probability.unwrap_or(-1.0)));
    for s in sorted {
        match (&s.log_z, &s.error) {
            (Some(lz), _) => println!("{:<40} logZ={:.4} p={:.4}", s.label(), lz, s.probability.unwrap_or(0.0)),
            (None, Some(e)) => println!("{:<40} failed: {e}", s.label()),
            _ => {}
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<usize> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot set thread count: {e}")))?;
    }
    match &cli.command {
        Command::Run { config } => Ok(run(&load(config, cli, None)?)?.failures()),
        Command::EnumerateProbit { config } => {
            let cfg = load(config, cli, Some(ExperimentKind::Enumerate))?;
            Ok(run(&cfg)?.failures())
        }
        Command::Clt { config } => {
            let cfg = load(config, cli, Some(ExperimentKind::Clt))?;
            let out = run(&cfg)?;
            Ok(out.failures() + usize::from(!out.clt.map(|c| c.pass).unwrap_or(false)))
        }
        Command::Variance { model, d, eps } => {
            if model != "gaussian" {
                return Err(CliError::Config(format!("variance supports model `gaussian`, got {model:?}")));
            }
            if *d == 0 || !(*eps > 0.0 && *eps < 1.0) {
                return Err(CliError::Config("need d >= 1 and 0 < eps < 1".into()));
            }
            let rep = asymptotic_variance(&phi_gaussian_toy(*d), *eps)?;
            let bound = (std::f64::consts::SQRT_2 / (eps * 2f64.powf(*d as f64 / 2.0))).ln();
            write_variance_csv(*d, &rep, bound, &mut std::io::stdout())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} sub-run(s) failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
