use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tfmm_guard::{run_pair_attack, AttackScenario};
use tfmm_sweep::{default_dw_grid, default_w_grid, emit_safe_region, run_sweep, ConfigError, SweepConfig};

#[derive(Parser)]
#[command(version, about = "Guardrail sweeps for weight-updating geometric-mean pools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a guardrail sweep described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the two-token safe region on the default (w, dw) grid.
    SafeRegion {
        #[arg(long)]
        gamma: f64,
        /// Trade fraction used for both legs.
        #[arg(long)]
        cap: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one pair attack and print its stages as JSON.
    Attack {
        /// Scenario JSON, inline or as a file path.
        #[arg(long)]
        scenario: String,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config } => {
            let cfg = match SweepConfig::from_path(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(match e {
                        ConfigError::Io { .. } => 1,
                        _ => 2,
                    });
                }
            };
            match run_sweep(&cfg) {
                Ok(out) => {
                    let m = &out.metadata;
                    let found = out.rows.iter().filter(|r| r.found).count();
                    println!(
                        "{} cells, {} with attacks, {} restarts, {:.1}s -> {}",
                        m.total_cells,
                        found,
                        m.total_restarts,
                        m.wall_time_s,
                        cfg.output_path.display()
                    );
                    for v in &m.frontier_violations {
                        eprintln!(
                            "frontier: cell {} found z_norm {:e} though looser cell {} did not (varying {})",
                            v.strict_cell, v.z_norm, v.loose_cell, v.varying
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("sweep failed: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::SafeRegion { gamma, cap, out } => {
            if !(gamma > 0.0 && gamma <= 1.0) || !(0.0..1.0).contains(&cap) {
                eprintln!("gamma must be in (0, 1] and cap in [0, 1)");
                return ExitCode::from(2);
            }
            match emit_safe_region(&default_w_grid(), &default_dw_grid(), gamma, cap, &out) {
                Ok(rows) => {
                    let safe = rows.iter().filter(|r| r.safe).count();
                    println!("{} cells, {} safe -> {}", rows.len(), safe, out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Attack { scenario } => {
            let text = if std::path::Path::new(&scenario).is_file() {
                match std::fs::read_to_string(&scenario) {
                    Ok(t) => t,
                    Err(e) => {
                        eprintln!("{scenario}: {e}");
                        return ExitCode::FAILURE;
                    }
                }
            } else {
                scenario
            };
            let parsed: AttackScenario = match serde_json::from_str(&text) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("bad scenario: {e}");
                    return ExitCode::from(2);
                }
            };
            match run_pair_attack(&parsed) {
                Ok(outcome) => {
                    let doc = serde_json::json!({ "scenario": parsed, "outcome": outcome });
                    println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("attack failed: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
