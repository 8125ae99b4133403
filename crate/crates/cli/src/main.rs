//! `tangos-lab`: runs training, benchmarks, diagnostics and reports from
//! JSON configs.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure
//! (including a benchmark in which any cell failed).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tangos_core::data::synth;
use tangos_core::experiment::{
    run_benchmark, run_diagnose, run_report, run_train, DiagnoseMode, ExperimentConfig,
};
use tangos_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "tangos-lab",
    version,
    about = "Attribution-regularized MLP experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (JSON) or a manifest written by an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `master_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent cells, folds and grid points.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one fold of one dataset; writes history, checkpoint and metrics.
    Train(Common),
    /// Cross-validate every dataset × method × seed cell.
    Benchmark(Common),
    /// Attribution or decomposition curves on the test rows.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Overrides `diagnose.mode`.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<DiagnoseMode>,
        /// Overrides `diagnose.checkpoint`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Rank table and Wilcoxon comparisons from results CSVs.
    Report {
        #[command(flatten)]
        common: Common,
        /// Results CSVs; replace `results` from the config.
        #[arg(long, num_args = 1..)]
        results: Vec<PathBuf>,
        /// Overrides `reference_method`.
        #[arg(long)]
        reference: Option<String>,
    },
    /// Write the synthetic dataset tables and their registry.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_mode(s: &str) -> Result<DiagnoseMode, String> {
    match s {
        "attr" => Ok(DiagnoseMode::Attr),
        "decomp" => Ok(DiagnoseMode::Decomp),
        other => Err(format!("unknown mode '{other}' (expected attr or decomp)")),
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::UnsupportedTask(_) => 1,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn setup(common: &Common) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let mut cfg =
        ExperimentConfig::load(&common.config).map_err(|e| Failure::usage(e.to_string()))?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("tangos-out"));
    cfg.out_dir = Some(out.clone());
    if let Some(jobs) = common.jobs {
        set_jobs(jobs)?;
    }
    Ok((cfg, out))
}

#[cfg(feature = "parallel")]
fn set_jobs(jobs: usize) -> Result<(), Failure> {
    if jobs == 0 {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| Failure::usage(format!("--jobs: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn set_jobs(jobs: usize) -> Result<(), Failure> {
    if jobs == 0 {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    if jobs > 1 {
        eprintln!("warning: built without the parallel feature; --jobs {jobs} runs sequentially");
    }
    Ok(())
}

fn registry(cfg: &ExperimentConfig) -> Result<tangos_core::data::Registry, Failure> {
    cfg.load_registry()
        .map_err(|e| Failure::usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(common) => {
            let (cfg, out) = setup(&common)?;
            let outcome = run_train(&cfg, &registry(&cfg)?, &out)?;
            println!(
                "best epoch {} (val loss {:.6}), test metric {:.6}; outputs in {}",
                outcome.result.best_epoch,
                outcome.result.best_val_loss,
                outcome.test_metric,
                out.display()
            );
        }
        Command::Benchmark(common) => {
            let (cfg, out) = setup(&common)?;
            let outcome = run_benchmark(&cfg, &registry(&cfg)?, &out)?;
            for r in outcome.rows.iter().filter(|r| r.metric.is_none()) {
                eprintln!(
                    "cell {}/{}/{} failed: {}",
                    r.dataset,
                    r.method,
                    r.seed,
                    r.error.as_deref().unwrap_or("unknown error")
                );
            }
            println!(
                "{} cells, {} failed; results in {}",
                outcome.rows.len(),
                outcome.failed,
                out.join("results.csv").display()
            );
            if outcome.failed > 0 {
                return Err(Failure {
                    code: 2,
                    message: format!("{} benchmark cells failed", outcome.failed),
                });
            }
        }
        Command::Diagnose {
            common,
            mode,
            checkpoint,
        } => {
            let (mut cfg, out) = setup(&common)?;
            if let Some(m) = mode {
                cfg.diagnose.mode = m;
            }
            if checkpoint.is_some() {
                cfg.diagnose.checkpoint = checkpoint;
            }
            let path = run_diagnose(&cfg, &registry(&cfg)?, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Report {
            common,
            results,
            reference,
        } => {
            let (mut cfg, out) = setup(&common)?;
            if !results.is_empty() {
                cfg.results = results;
            }
            if let Some(r) = reference {
                cfg.reference_method = r;
            }
            let report = run_report(&cfg.results, &cfg.reference_method, &out)?;
            for (m, r) in report.ranks.methods.iter().zip(&report.ranks.avg_rank) {
                println!("{m:>12}  avg rank {r:.2}");
            }
            for w in &report.wilcoxon {
                match w.p_value {
                    Some(p) => println!("{} < {}: p = {p:.4}", w.reference, w.method),
                    None => println!("{} < {}: {}", w.reference, w.method, w.note),
                }
            }
            write_report_manifest(&cfg, &out)?;
        }
        Command::Synth { out, seed } => {
            let reg = synth::write_suite(&out, seed)?;
            println!(
                "wrote {} tables and {}",
                reg.entries().len(),
                out.join("registry.json").display()
            );
        }
    }
    Ok(())
}

fn write_report_manifest(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    tangos_core::experiment::write_manifest(out, &cfg.manifest("report")?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
