//! CSV, JSON and console rendering of run records.

use crate::config::CliError;
use crate::runner::{RunRecord, CSV_SCHEMA};
use std::io::Write;

pub const CSV_HEADER: &str =
    "method,problem,n,t,ell,residual,error,cycles,mv,wall_ms,bound_closed,bound_integral";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

pub fn write_csv<W: Write>(mut w: W, records: &[&RunRecord]) -> Result<(), CliError> {
    writeln!(w, "# {CSV_SCHEMA}").map_err(io_err)?;
    writeln!(w, "{CSV_HEADER}").map_err(io_err)?;
    for rec in records {
        for row in &rec.results {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                rec.config.method,
                rec.config.problem,
                rec.n,
                rec.config.t,
                row.ell,
                row.residual,
                fmt_opt(row.error),
                rec.cycles,
                rec.matvecs,
                rec.wall_ms,
                fmt_opt(row.bound_closed),
                fmt_opt(row.bound_integral),
            )
            .map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn write_json<W: Write>(w: W, rec: &RunRecord) -> Result<(), CliError> {
    serde_json::to_writer_pretty(w, rec)
        .map_err(|e| CliError::Config(format!("serialization failed: {e}")))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Config(format!("write failed: {e}"))
}

pub fn print_summary(rec: &RunRecord) {
    println!(
        "{} on {} (n = {}), t = {}: {} cycle(s), {} matvec(s){}, {:.1} ms",
        rec.config.method,
        rec.config.problem,
        rec.n,
        rec.config.t,
        rec.cycles,
        rec.matvecs,
        if rec.solves > 0 {
            format!(", {} solve(s)", rec.solves)
        } else {
            String::new()
        },
        rec.wall_ms,
    );
    for row in &rec.results {
        let status = if row.converged { "ok " } else { "FAIL" };
        let error = row
            .error
            .map_or(String::new(), |e| format!("  error {e:.3e}"));
        let bounds = match (row.bound_closed, row.bound_integral) {
            (Some(c), Some(i)) => format!("  bounds [closed {c:.3e}, integral {i:.3e}]"),
            _ => String::new(),
        };
        println!(
            "  phi_{:<2} residual {:.3e} {status}{error}{bounds}",
            row.ell, row.residual
        );
    }
}

/// Comparison table plus the matvec-savings line when one simultaneous run
/// is set against single-order runs covering the same orders.
pub fn print_comparison(records: &[RunRecord]) {
    println!("# phikry-compare/1");
    println!(
        "{:<10} {:<14} {:>8} {:>6} {:>12} {:>7} {:>8} {:>10}  max_residual",
        "method", "problem", "n", "t", "ells", "cycles", "mv", "wall_ms"
    );
    for rec in records {
        let ells: Vec<String> = rec.results.iter().map(|r| r.ell.to_string()).collect();
        let max_res = rec
            .results
            .iter()
            .map(|r| r.residual)
            .fold(0.0f64, f64::max);
        println!(
            "{:<10} {:<14} {:>8} {:>6} {:>12} {:>7} {:>8} {:>10.1}  {:.3e}",
            rec.config.method,
            rec.config.problem,
            rec.n,
            rec.config.t,
            ells.join(","),
            rec.cycles,
            rec.matvecs,
            rec.wall_ms,
            max_res
        );
    }

    // Savings detection: one multi-order run vs single-order runs whose
    // orders partition it.
    let multi: Vec<&RunRecord> = records.iter().filter(|r| r.results.len() > 1).collect();
    let singles: Vec<&RunRecord> = records.iter().filter(|r| r.results.len() == 1).collect();
    if multi.len() == 1 && !singles.is_empty() {
        let mut multi_ells: Vec<usize> = multi[0].results.iter().map(|r| r.ell).collect();
        multi_ells.sort_unstable();
        let mut single_ells: Vec<usize> = singles.iter().map(|r| r.results[0].ell).collect();
        single_ells.sort_unstable();
        if multi_ells == single_ells {
            let sum: usize = singles.iter().map(|r| r.matvecs).sum();
            let simultaneous = multi[0].matvecs;
            println!(
                "matvec savings: simultaneous {} <= sequential total {} ({} saved)",
                simultaneous,
                sum,
                sum.saturating_sub(simultaneous)
            );
        }
    }
}
