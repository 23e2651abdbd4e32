//! `cowlab`: bifurcation labeling experiments on synthetic Circle-of-Willis phantoms.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cowlab::experiment::{self, ExperimentConfig};
use cowlab::{Error, ErrorCategory};

#[derive(Parser)]
#[command(
    name = "cowlab",
    version,
    about = "Bifurcation labeling on synthetic Circle-of-Willis phantoms"
)]
struct Cli {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key by dotted path, e.g. `--set phantoms.count=10`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the phantom corpus.
    Phantom,
    /// Segment, skeletonize and label bifurcations; write features and patches.
    Extract,
    /// Train the convolutional autoencoder on extracted patches.
    TrainCae,
    /// Cross-validate every configured pipeline and write the report.
    Run,
    /// Re-emit report files from a previous run.
    Report,
    /// Print the resolved config as JSON.
    Config,
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numeric => 4,
    }
}

fn execute(cli: &Cli) -> cowlab::Result<()> {
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?.with_env_seed()?;
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    log::info!("config {} (seed {})", cfg.fingerprint(), cfg.seed);
    match cli.command {
        Command::Phantom => {
            let files = experiment::cmd_phantom(&cfg)?;
            println!("wrote {} files under {}", files.len(), cfg.output_dir.display());
        }
        Command::Extract => {
            let s = experiment::cmd_extract(&cfg)?;
            println!(
                "{} phantoms: {} BoIs, {} BNs, {} skipped, balanced set of {}",
                s.phantoms, s.boi, s.bn, s.skipped, s.balanced
            );
        }
        Command::TrainCae => {
            let m = experiment::cmd_train_cae(&cfg)?;
            if let Some(last) = m.loss_log.last() {
                println!("final reconstruction MSE {last:.6}");
            }
        }
        Command::Run => {
            for r in experiment::cmd_run(&cfg)? {
                println!(
                    "{:<4} {:<7} {:>3}  accuracy {:.4} ± {:.4}  macro-F1 {:.4} ± {:.4}",
                    r.config.algorithm.to_string(),
                    r.config.dr_method,
                    r.config.n_components,
                    r.mean_accuracy,
                    r.std_accuracy,
                    r.mean_macro_f1,
                    r.std_macro_f1
                );
            }
        }
        Command::Report => {
            let files = experiment::cmd_report(&cfg)?;
            println!("wrote {} report files", files.len());
        }
        Command::Config => {
            println!("{}", cfg.to_json_pretty()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
