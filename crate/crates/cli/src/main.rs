mod config;
mod output;
mod runner;

use clap::{Parser, Subcommand};
use config::{config_err, CliError, RunConfig};
use output::{print_comparison, print_summary, write_csv, write_json};
use runner::{execute, RunRecord};
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

/// Evaluate phi-functions of large sparse matrices on vectors with
/// restarted Krylov methods, and compare method configurations.
#[derive(Parser)]
#[command(name = "phikry", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one solve and report residuals, errors and costs.
    Run {
        #[command(flatten)]
        cfg: Box<RunConfig>,
        /// Write the full record as JSON.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write per-order rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Dump the parsed configuration (usable with `compare`).
        #[arg(long)]
        emit_config: Option<PathBuf>,
    },
    /// Run several JSON configs sharing a problem and t; print one table.
    Compare {
        /// Config files produced by `run --emit-config` or written by hand.
        configs: Vec<PathBuf>,
        /// Write all per-order rows as CSV.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.cmd {
        Cmd::Run {
            cfg,
            output,
            csv,
            emit_config,
        } => {
            if let Some(path) = &emit_config {
                let f = File::create(path).map_err(|e| config_err(e.to_string()))?;
                serde_json::to_writer_pretty(BufWriter::new(f), cfg.as_ref())
                    .map_err(|e| config_err(e.to_string()))?;
            }
            let record = execute(&cfg)?;
            print_summary(&record);
            if let Some(path) = &output {
                let f = File::create(path).map_err(|e| config_err(e.to_string()))?;
                write_json(BufWriter::new(f), &record)?;
            }
            if let Some(path) = &csv {
                let f = File::create(path).map_err(|e| config_err(e.to_string()))?;
                write_csv(BufWriter::new(f), &[&record])?;
            }
            if record.all_converged() {
                Ok(0)
            } else {
                eprintln!("error: solver did not meet the residual tolerance");
                Ok(2)
            }
        }
        Cmd::Compare { configs, output } => {
            if configs.len() < 2 {
                return Err(config_err("compare needs at least two config files"));
            }
            let mut parsed: Vec<RunConfig> = Vec::with_capacity(configs.len());
            for path in &configs {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                let cfg: RunConfig = serde_json::from_str(&text)
                    .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                parsed.push(cfg);
            }
            let key0 = parsed[0].problem_key();
            let t0 = parsed[0].t;
            for cfg in &parsed[1..] {
                if cfg.problem_key() != key0 {
                    return Err(config_err(format!(
                        "configs must share the problem: {:?} vs {:?}",
                        cfg.problem_key(),
                        key0
                    )));
                }
                if cfg.t != t0 {
                    return Err(config_err(format!(
                        "configs must share t: {} vs {t0}",
                        cfg.t
                    )));
                }
            }
            use rayon::prelude::*;
            let results: Vec<Result<RunRecord, CliError>> =
                parsed.par_iter().map(execute).collect();
            let mut records = Vec::with_capacity(results.len());
            for r in results {
                records.push(r?);
            }
            print_comparison(&records);
            if let Some(path) = &output {
                let f = File::create(path).map_err(|e| config_err(e.to_string()))?;
                let refs: Vec<&RunRecord> = records.iter().collect();
                write_csv(BufWriter::new(f), &refs)?;
            }
            if records.iter().all(RunRecord::all_converged) {
                Ok(0)
            } else {
                eprintln!("error: at least one run did not converge");
                Ok(2)
            }
        }
    }
}
