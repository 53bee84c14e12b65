//! `nasx run|sweep|report`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nasx::harness::{read_report, run_experiment, run_sweep, ExperimentConfig};
use nasx::Error;

/// Overrides the root that relative `output_dir` values resolve against.
const OUTPUT_ROOT_ENV: &str = "NASX_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "nasx", version, about = "Twisted SMC and reweighted wake-sleep experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train as configured, then evaluate bounds.
    Run { config: PathBuf },
    /// Evaluate bounds only, from the checkpoint if the config names one.
    Sweep { config: PathBuf },
    /// Summarise an output directory.
    Report { dir: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) => 2,
        Error::Diverged { .. } => 3,
        _ => 1,
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Error> {
    ExperimentConfig::load(path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
    let result = match &cli.command {
        Command::Run { config } => load(config).and_then(|c| run_experiment(&c, root.as_deref())).map(|s| {
            println!("wrote {} files to {}", s.files.len(), s.output_dir.display());
        }),
        Command::Sweep { config } => load(config).and_then(|c| run_sweep(&c, root.as_deref())).map(|s| {
            println!("wrote {} files to {}", s.files.len(), s.output_dir.display());
        }),
        Command::Report { dir } => read_report(dir).map(|r| {
            let get = |k: &str| r.manifest.get(k).and_then(|v| v.as_str()).unwrap_or("?").to_string();
            println!("{} / {}  config {}", get("model"), get("method"), get("config_sha256"));
            println!("status: {}", get("status"));
            println!("{:>8} {:>6} {:>14} {:>10} {:>12}", "sequence", "N", "mean log Z", "se", "per step");
            for b in &r.bounds {
                println!(
                    "{:>8} {:>6} {:>14.4} {:>10.4} {:>12.5}",
                    b.sequence, b.n_particles, b.mean_log_z, b.se_log_z, b.mean_log_z_per_step
                );
            }
            if !r.final_metrics.is_empty() {
                println!("final metrics:");
                for (name, step, v) in &r.final_metrics {
                    println!("  {name} @ {step}: {v}");
                }
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
