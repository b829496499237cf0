use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dsac_cli::checks::{run_checks, CheckOptions};
use dsac_cli::plot::{read_columns, render, DEFAULT_WINDOW};
use dsac_cli::run::{execute, RunOverrides};
use dsac_cli::{threads_from_env, CliError, RunConfig};

/// Decentralized shadow-reward actor-critic experiments.
#[derive(Parser, Debug)]
#[command(name = "dsac", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train from a config file and write metrics and checkpoints.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `run.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the exact identities on the configured problem.
    OracleCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, hide = true)]
        corrupt_shadow_sign: bool,
    },
    /// Plot running averages of metrics columns as SVG.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        /// Comma-separated column names.
        #[arg(long, value_delimiter = ',', required = true)]
        columns: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
    },
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, seed, out } => {
            let cfg = RunConfig::load(&config)?;
            let threads = threads_from_env()?;
            let summary = execute(cfg, &RunOverrides { seed, out }, threads)?;
            match summary.final_global_utility {
                Some(u) => println!(
                    "{} iterations, {} metrics rows, final global utility {u:.6}; output in {}",
                    summary.iterations,
                    summary.rows,
                    summary.output_dir.display()
                ),
                None => println!("0 iterations; output in {}", summary.output_dir.display()),
            }
            Ok(())
        }
        Command::OracleCheck {
            config,
            corrupt_shadow_sign,
        } => {
            let cfg = RunConfig::load(&config)?;
            let results = run_checks(&cfg, CheckOptions { corrupt_shadow_sign })?;
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(CliError::Runtime(format!("{failed} of {} checks failed", results.len())));
            }
            Ok(())
        }
        Command::Plot {
            metrics,
            columns,
            out,
            window,
        } => {
            if window == 0 {
                return Err(CliError::Usage("window must be >= 1".into()));
            }
            let series = read_columns(&metrics, &columns)?;
            let title = metrics.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            std::fs::write(&out, render(&series, window, &title)).map_err(|e| CliError::Runtime(format!("writing {}: {e}", out.display())))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
