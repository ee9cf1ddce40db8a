//! `stoqtraj`: config-driven trajectory simulation of stochastic-Hamiltonian
//! open-system dynamics.
//!
//! Exit codes: 0 pass, 1 numerical failure or tolerance breach, 2 config
//! error. Failures additionally print one machine-readable line to stderr:
//! `ERROR <code> <message>`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use stoqtraj_cli::{config, run};

#[derive(Parser)]
#[command(name = "stoqtraj", version, about = "Stochastic quantum trajectory engines")]
struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Directory for output artifacts (created if missing).
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,

    /// Worker threads for trajectory ensembles. Affects speed only; results
    /// are bit-identical for any value.
    #[arg(long)]
    threads: Option<usize>,

    /// Suppress progress lines on stdout.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let text = match std::fs::read_to_string(&cli.config) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("ERROR IoError cannot read {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };

    let parsed = match config::parse_config(&text) {
        Ok(parsed) => parsed,
        Err(e) => {
            eprintln!("ERROR {e}");
            return ExitCode::from(2);
        }
    };

    let outcome = match cli.threads {
        Some(threads) => {
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => pool,
                Err(e) => {
                    eprintln!("ERROR ThreadPool {e}");
                    return ExitCode::from(2);
                }
            };
            pool.install(|| run::execute(&parsed, &cli.out_dir, cli.quiet))
        }
        None => run::execute(&parsed, &cli.out_dir, cli.quiet),
    };

    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("ERROR {} {}", e.code, e.message);
            ExitCode::from(e.exit as u8)
        }
    }
}
