//! Structured artifacts: the run summary (TOML with the defaults-filled
//! config echo, all certificates, and the convergence history), the
//! refinement table, and the stability table.

use crate::config::RunConfig;
use crate::fields_io::fmt;
use crate::CliError;
use mfplan_core::solver::{HistoryRow, SolveStatus};
use mfplan_core::{DiagnosticsReport, RefinementRow, StabilityRow};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

#[derive(Serialize)]
struct RunMeta {
    status: String,
    iterations: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    run: RunMeta,
    config: &'a RunConfig,
    report: &'a DiagnosticsReport,
    history: &'a [HistoryRow],
}

pub fn status_name(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max_iter",
    }
}

/// Render the full run summary as TOML.
pub fn render_summary(
    config: &RunConfig,
    status: SolveStatus,
    iterations: usize,
    report: &DiagnosticsReport,
    history: &[HistoryRow],
) -> Result<String, CliError> {
    let summary = Summary {
        run: RunMeta {
            status: status_name(status).to_string(),
            iterations,
        },
        config,
        report,
        history,
    };
    toml::to_string_pretty(&summary)
        .map_err(|e| CliError::validation(format!("cannot serialize summary: {e}")))
}

/// Render a bare certificate report as TOML (used by `diagnose`).
pub fn render_report(report: &DiagnosticsReport) -> Result<String, CliError> {
    #[derive(Serialize)]
    struct Doc<'a> {
        report: &'a DiagnosticsReport,
    }
    toml::to_string_pretty(&Doc { report })
        .map_err(|e| CliError::validation(format!("cannot serialize report: {e}")))
}

/// Render the refinement table as TOML (`[[levels]]`).
pub fn render_refinement(config: &RunConfig, rows: &[RefinementRow]) -> Result<String, CliError> {
    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a RunConfig,
        levels: &'a [RefinementRow],
    }
    toml::to_string_pretty(&Doc { config, levels: rows })
        .map_err(|e| CliError::validation(format!("cannot serialize refinement table: {e}")))
}

/// Render the stability table as plot-ready CSV with one pairing column per
/// monitored test field.
pub fn render_stability(rows: &[StabilityRow]) -> String {
    let n_pairings = rows.first().map_or(0, |r| r.pairings.len());
    let mut out = String::from("eps,B,lq_norm,gap,feas,converged");
    for j in 1..=n_pairings {
        out.push_str(&format!(",pairing_{j}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            fmt(row.eps),
            fmt(row.b),
            fmt(row.lq_norm),
            fmt(row.gap),
            fmt(row.feas),
            row.converged
        ));
        for p in &row.pairings {
            out.push_str(&format!(",{}", fmt(*p)));
        }
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}
