use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use exitlab::estimator::with_workers;
use exitlab::harness::{
    emit_outputs, load_config, run_diagnose, run_estimate, run_flow, run_predict, write_json, ExperimentConfig,
    RunRecord,
};
use exitlab::{ExitlabError, Result};

#[derive(Parser, Debug)]
#[command(name = "exitlab", version, about = "Exit-time asymptotics near a repelling equilibrium, with Monte Carlo checks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate the config, reporting warnings.
    Validate,
    /// Theory only: beta, mu, psi and phi bounds per initial point.
    Predict {
        /// Comma-separated alphas (default: the config's).
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
    },
    /// Run the configured estimator over the epsilon grid.
    Estimate,
    /// Estimate over a grid of alphas as well as epsilons.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
    },
    /// Deterministic exit times and travel-time bounds.
    Flow {
        /// A start point, comma-separated; repeat for several.
        #[arg(long = "x0", value_delimiter = ',', num_args = 1.., allow_negative_numbers = true, action = clap::ArgAction::Append)]
        x0: Vec<String>,
        /// Also report the flow at this time.
        #[arg(long)]
        t: Option<f64>,
    },
    /// Density and KS diagnostics of the rescaled fluctuation U_T.
    Diagnose {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        /// Comma-separated start in conjugated units.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        y0: Vec<f64>,
        #[arg(long)]
        bins: Option<usize>,
    },
}

fn load(global: &Global) -> Result<ExperimentConfig> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| ExitlabError::Validation("--config is required".into()))?;
    let cfg = load_config(path)?;
    let cfg = match global.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    for w in &cfg.warnings {
        log::warn!("{w}");
    }
    Ok(cfg)
}

fn alphas_or_default(cfg: &ExperimentConfig, alphas: &[f64]) -> Vec<f64> {
    if alphas.is_empty() {
        vec![cfg.alpha()]
    } else {
        alphas.to_vec()
    }
}

fn finish(record: RunRecord, cfg: &ExperimentConfig, out: &std::path::Path) -> Result<()> {
    let paths = emit_outputs(&record, cfg, out)?;
    println!("wrote {}, {}, {}", paths.results.display(), paths.summary.display(), paths.plot.display());
    for row in &record.rows {
        match row.rescaled {
            Some(r) => println!(
                "alpha={} eps={} x={:?}: p_hat={} rescaled={} psi={}",
                row.alpha, row.epsilon, row.x, row.p_hat.unwrap_or(f64::NAN), r, row.psi
            ),
            None => println!(
                "alpha={} eps={} x={:?}: beta={} mu={} psi={} phi=[{}, {}]",
                row.alpha, row.epsilon, row.x, row.beta, row.mu, row.psi, row.phi_minus, row.phi_plus
            ),
        }
    }
    for f in &record.slope_fits {
        if let Some(fit) = &f.fit {
            println!("alpha={} x={:?}: slope={} ± {} (beta {})", f.alpha, f.x, fit.slope, fit.slope_stderr, f.beta);
        }
    }
    match record.failure {
        Some(msg) => Err(ExitlabError::PartialRun(msg)),
        None => Ok(()),
    }
}

fn parse_point(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| ExitlabError::Validation(format!("bad coordinate `{t}`: {e}"))))
        .collect()
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = load(&cli.global)?;
    let out = cli.global.out.clone();
    match cli.command {
        Command::Validate => {
            println!("config ok (hash {})", cfg.hash());
            for w in &cfg.warnings {
                println!("warning: {w}");
            }
            Ok(())
        }
        Command::Predict { alpha } => finish(run_predict(&cfg, &alphas_or_default(&cfg, &alpha))?, &cfg, &out),
        Command::Estimate => finish(run_estimate(&cfg, &[cfg.alpha()])?, &cfg, &out),
        Command::Sweep { alpha } => finish(run_estimate(&cfg, &alphas_or_default(&cfg, &alpha))?, &cfg, &out),
        Command::Flow { x0, t } => {
            let points = if x0.is_empty() {
                return Err(ExitlabError::Validation("flow needs at least one --x0".into()));
            } else {
                // each --x0 occurrence arrives split on commas; regroup by dimension
                let flat: Vec<f64> = x0.iter().map(|s| parse_point(s)).collect::<Result<Vec<_>>>()?.concat();
                let d = cfg.dim();
                if !flat.len().is_multiple_of(d) {
                    return Err(ExitlabError::Validation(format!("--x0 values do not form {d}-dimensional points")));
                }
                flat.chunks(d).map(<[f64]>::to_vec).collect::<Vec<_>>()
            };
            let report = run_flow(&cfg, &points, t)?;
            std::fs::create_dir_all(&out).map_err(|e| ExitlabError::io(&out, e))?;
            write_json(&report, &out.join("flow.json"))?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| ExitlabError::Serialization(e.to_string()))?);
            Ok(())
        }
        Command::Diagnose { t, samples, y0, bins } => {
            let section = cfg.raw.diagnose.clone();
            let t = t
                .or(section.as_ref().map(|s| s.t))
                .ok_or_else(|| ExitlabError::Validation("diagnose needs --t or a [diagnose] section".into()))?;
            let n = samples.or(section.as_ref().map(|s| s.n_samples)).unwrap_or(100_000);
            let bins = bins.or(section.as_ref().map(|s| s.bins)).unwrap_or(40);
            let y0 = if y0.is_empty() { section.and_then(|s| s.y0) } else { Some(y0) };
            let report = run_diagnose(&cfg, t, n, y0, bins)?;
            std::fs::create_dir_all(&out).map_err(|e| ExitlabError::io(&out, e))?;
            write_json(&report, &out.join("diagnose.json"))?;
            for r in &report.rows {
                println!(
                    "eps={} T={}: L1={} sup={} cov_rel_err={} ks={:?}",
                    r.epsilon, r.t, r.l1_diff, r.sup_diff, r.covariance_rel_error, r.ks
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let user = e.use_stderr();
            let _ = e.print();
            return if user { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let workers = cli.global.workers;
    let result = with_workers(workers, || dispatch(cli)).and_then(|r| r);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
