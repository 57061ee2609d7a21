use std::path::PathBuf;
use std::process::ExitCode;

use carenet_cli::{run, Command, Options};
use clap::Parser;

/// Synthetic micro-FTIR study: synthesize, preprocess, train, predict,
/// explain and evaluate.
#[derive(Parser)]
#[command(name = "carenet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Threads for per-spectrum and per-sample work.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    task: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let opts = Options {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        workers: cli.workers,
        task: cli.task,
    };
    match run(cli.command, &opts) {
        Ok(summary) => {
            if let Some(acc) = summary.voted_accuracy {
                println!("voted accuracy {acc:.4}");
            }
            if let Some((hi, lo)) = summary.top_band {
                println!("top band {hi:.1}-{lo:.1} cm-1");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
