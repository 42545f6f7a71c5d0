use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stiefel_consensus::scenario::{run_scenario, run_sweep, ExitStatus, ScenarioConfig};
use stiefel_consensus::Error;

#[derive(Parser)]
#[command(name = "stiefel-sync", version, about = "Consensus dynamics on Stiefel manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its CSV series and verdict.json.
    Run { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Expand list-valued fields and run every member.
    Sweep { config: PathBuf },
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let config = ScenarioConfig::from_json(&text)?;
    config.validate()?;
    Ok(config)
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(_) => {
                println!("{}: ok", config.display());
                exit(0)
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit(ExitStatus::of_error(&e).code())
            }
        },
        Command::Run { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit(ExitStatus::of_error(&e).code());
                }
            };
            match run_scenario(&cfg) {
                Ok((status, verdict)) => {
                    for a in &verdict.assertions {
                        let mark = if a.passed { "PASS" } else { "FAIL" };
                        println!("{mark} {}: {:e} (threshold {:e})", a.name, a.measured, a.threshold);
                    }
                    if let Some(err) = &verdict.error {
                        eprintln!("error: {err}");
                    }
                    exit(status.code())
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit(ExitStatus::Aborted.code())
                }
            }
        }
        Command::Sweep { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return exit(ExitStatus::InvalidConfig.code());
                }
            };
            match run_sweep(&text) {
                Ok(v) => {
                    for m in &v.members {
                        let mark = if m.passed { "PASS" } else { "FAIL" };
                        println!("{mark} member {} -> {}", m.index, m.output_dir.display());
                    }
                    exit(v.exit_code)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit(ExitStatus::of_error(&e).code())
                }
            }
        }
    }
}
