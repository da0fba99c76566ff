//! `cfleo` - batch experiments for the cell-free LEO cluster simulator.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cfleo_core::config::{Mode, SimConfig};
use cfleo_core::sim;
use cfleo_core::verify;

#[derive(Parser)]
#[command(name = "cfleo", version, about = "Cell-free LEO satellite cluster simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Configuration file (flat key = value text); defaults apply to
    /// missing keys
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write rates/events/summary CSVs
    Run {
        #[command(flatten)]
        config: ConfigArg,
        /// Override the configured mode (cf_jpahm, best_channel, max_serv_time)
        #[arg(long)]
        mode: Option<String>,
        /// Override the configured base seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every mode over a list of cluster sizes with paired seeds
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated SAP counts, e.g. 4,8,16,24,32
        #[arg(long, value_delimiter = ',', required = true)]
        saps: Vec<usize>,
        /// Override the configured output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo moment checks and the GA-vs-grid oracle; exits nonzero
    /// on tolerance breach
    Verify {
        #[command(flatten)]
        config: ConfigArg,
        /// Trials per moment check
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
}

fn load_config(arg: &ConfigArg) -> Result<SimConfig> {
    match &arg.config {
        Some(path) => SimConfig::load(path)
            .with_context(|| format!("loading configuration {}", path.display())),
        None => Ok(SimConfig::default()),
    }
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, mode, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(mode) = mode {
                cfg.mode = Mode::parse(&mode)
                    .with_context(|| format!("unknown mode `{mode}`"))?;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.output_dir = out.display().to_string();
            }
            let log = sim::run(&cfg)?;
            let dir = PathBuf::from(&cfg.output_dir);
            sim::write_run_outputs(&log, &cfg, &dir)?;
            let cell = sim::summarize(&log, cfg.mode, cfg.num_saps);
            println!(
                "{} M={} runs={}: avg_se={:.4} bps/Hz, avg_service_time={:.2} s, handover_rate={:.6} /UT/s",
                cfg.mode.as_str(),
                cfg.num_saps,
                cfg.num_runs,
                cell.avg_se,
                cell.avg_service_time_s,
                cell.handover_rate
            );
            println!("outputs written to {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, saps, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out.display().to_string();
            }
            let outcome = sim::sweep(&cfg, &saps)?;
            let dir = PathBuf::from(&cfg.output_dir);
            sim::write_sweep_outputs(&outcome, &cfg, &dir)?;
            println!("mode,M,avg_se,avg_service_time,handover_rate");
            for (cell, _) in &outcome.cells {
                println!(
                    "{},{},{:.4},{:.2},{:.6}",
                    cell.mode.as_str(),
                    cell.num_saps,
                    cell.avg_se,
                    cell.avg_service_time_s,
                    cell.handover_rate
                );
            }
            println!("outputs written to {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { config, trials } => {
            let cfg = load_config(&config)?;
            let report = verify::run_verify(trials, cfg.seed);

            println!("== estimator moments ({} trials) ==", report.training.trials);
            print_worst(&report.training.checks, 5);
            println!(
                "max relative error: {:.4} (tolerance 0.03)",
                report.training.max_rel_err()
            );

            println!("== rate terms ({} trials) ==", report.rate_terms.trials);
            print_worst(&report.rate_terms.checks, 5);
            println!(
                "max relative error: {:.4} (tolerance 0.03)",
                report.rate_terms.max_rel_err()
            );

            println!(
                "== denominator positivity: {} violations in 10000 random inputs ==",
                report.denominator_violations
            );

            println!("== GA vs 8-level grid oracle ==");
            for t in &report.ga_trials {
                println!(
                    "seed {}: ga {:.6} vs grid {:.6} (ratio {:.4})",
                    t.seed,
                    t.ga_objective,
                    t.oracle_objective,
                    t.ratio()
                );
            }

            if report.passed() {
                println!("verify: PASS");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("verify: FAIL");
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

fn print_worst(checks: &[cfleo_core::downlink::MomentCheck], n: usize) {
    let mut sorted: Vec<_> = checks.iter().collect();
    sorted.sort_by(|a, b| b.rel_err.total_cmp(&a.rel_err));
    for check in sorted.iter().take(n) {
        println!(
            "  {}: closed {:.6e} vs mc {:.6e} (rel {:.4})",
            check.name, check.closed, check.monte_carlo, check.rel_err
        );
    }
}
