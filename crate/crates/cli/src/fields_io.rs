//! Long-format CSV serialization of the staggered fields.
//!
//! Every file has a header and one row per lattice point, values printed
//! with 17 significant digits so doubles round-trip exactly:
//!
//! * `m.csv` — `t,x[,y],value`; node times, cell centers.
//! * `u.csv`, `alpha.csv` — `t,x[,y],value`; midpoint times, cell centers.
//! * `w.csv` in 1D — `t,x,value`; midpoint times, face coordinates.
//! * `w.csv` in 2D — `t,x,y,value,value_y`; midpoint times, cell centers;
//!   the two values are the momentum components on the cell's +x and +y
//!   faces.
//!
//! Rows are written cell-major within each time slab, slabs in time order;
//! readers recover indices from the row position and use the coordinate
//! columns only as annotation.

use crate::CliError;
use mfplan_core::solver::{HistoryRow, SolutionBundle, SolveStatus};
use mfplan_core::{DualField, GridSpec, StaggeredField};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// 17 significant digits: enough for bit-exact `f64` round-trips.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::validation(format!("{}: {e}", path.display()))
}

fn header(d: usize, vector_valued: bool) -> &'static str {
    match (d, vector_valued) {
        (1, _) => "t,x,value",
        (2, false) => "t,x,y,value",
        (2, true) => "t,x,y,value,value_y",
        _ => unreachable!("dimension is validated to 1 or 2"),
    }
}

/// Write one scalar lattice field: `times.len()` slabs of `grid.cells()`
/// cell-centered values.
fn write_cell_field(
    path: &Path,
    grid: &GridSpec,
    times: &[f64],
    values: &[f64],
) -> Result<(), CliError> {
    let nc = grid.cells();
    assert_eq!(values.len(), times.len() * nc);
    let mut out = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "{}", header(grid.d, false))?;
        for (k, t) in times.iter().enumerate() {
            for i in 0..nc {
                let x = grid.cell_center(i);
                match grid.d {
                    1 => writeln!(out, "{},{},{}", fmt(*t), fmt(x[0]), fmt(values[k * nc + i]))?,
                    _ => writeln!(
                        out,
                        "{},{},{},{}",
                        fmt(*t),
                        fmt(x[0]),
                        fmt(x[1]),
                        fmt(values[k * nc + i])
                    )?,
                }
            }
        }
        out.flush()
    };
    write(&mut out).map_err(|e| io_err(path, e))
}

fn write_w(path: &Path, grid: &GridSpec, w: &[f64]) -> Result<(), CliError> {
    let nc = grid.cells();
    assert_eq!(w.len(), grid.w_len());
    let h = grid.h();
    let mut out = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "{}", header(grid.d, true))?;
        for k in 0..grid.nt {
            let t = grid.midpoint_time(k);
            for i in 0..nc {
                match grid.d {
                    1 => {
                        // The +x face of cell i sits at (i+1)·h.
                        let x = (i as f64 + 1.0) * h;
                        writeln!(out, "{},{},{}", fmt(t), fmt(x), fmt(w[k * nc + i]))?;
                    }
                    _ => {
                        let x = grid.cell_center(i);
                        writeln!(
                            out,
                            "{},{},{},{},{}",
                            fmt(t),
                            fmt(x[0]),
                            fmt(x[1]),
                            fmt(w[(k * 2) * nc + i]),
                            fmt(w[(k * 2 + 1) * nc + i])
                        )?;
                    }
                }
            }
        }
        out.flush()
    };
    write(&mut out).map_err(|e| io_err(path, e))
}

/// Write `m.csv`, `w.csv`, `u.csv`, and `alpha.csv` into `dir`.
pub fn write_fields(dir: &Path, bundle: &SolutionBundle) -> Result<(), CliError> {
    let g = &bundle.primal.grid;
    let node_times: Vec<f64> = (0..=g.nt).map(|k| g.node_time(k)).collect();
    let mid_times: Vec<f64> = (0..g.nt).map(|k| g.midpoint_time(k)).collect();
    write_cell_field(&dir.join("m.csv"), g, &node_times, &bundle.primal.m)?;
    write_cell_field(&dir.join("u.csv"), g, &mid_times, &bundle.dual.u)?;
    write_cell_field(&dir.join("alpha.csv"), g, &mid_times, &bundle.alpha)?;
    write_w(&dir.join("w.csv"), g, &bundle.primal.w)
}

/// Write `history.csv` with columns `iteration,B,A,gap,feas`.
pub fn write_history(dir: &Path, history: &[HistoryRow]) -> Result<(), CliError> {
    let path = dir.join("history.csv");
    let mut out = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "iteration,B,A,gap,feas")?;
        for row in history {
            writeln!(
                out,
                "{},{},{},{},{}",
                row.iteration,
                fmt(row.b),
                fmt(row.a),
                fmt(row.gap),
                fmt(row.feas)
            )?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| io_err(&path, e))
}

/// Read the trailing `per_row` numeric columns of a headered CSV file,
/// returning them column-major. Row count must match `rows`.
fn read_columns(path: &Path, rows: usize, per_row: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut cols = vec![Vec::with_capacity(rows); per_row];
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.starts_with("t,") => {}
        _ => {
            return Err(CliError::validation(format!(
                "{}: missing field header",
                path.display()
            )))
        }
    }
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < per_row {
            return Err(CliError::validation(format!(
                "{}:{}: expected at least {per_row} columns",
                path.display(),
                idx + 1
            )));
        }
        for (c, raw) in fields[fields.len() - per_row..].iter().enumerate() {
            let v: f64 = raw.trim().parse().map_err(|e| {
                CliError::validation(format!(
                    "{}:{}: bad number {raw:?} ({e})",
                    path.display(),
                    idx + 1
                ))
            })?;
            cols[c].push(v);
        }
    }
    if cols[0].len() != rows {
        return Err(CliError::validation(format!(
            "{}: expected {rows} data rows, found {}",
            path.display(),
            cols[0].len()
        )));
    }
    Ok(cols)
}

/// Reconstruct a solution bundle from the four field files written by
/// [`write_fields`]. History and iteration count are not stored on disk, so
/// the bundle carries an empty history.
pub fn read_bundle(dir: &Path, grid: &GridSpec) -> Result<SolutionBundle, CliError> {
    let nc = grid.cells();
    let m = read_columns(&dir.join("m.csv"), (grid.nt + 1) * nc, 1)?.remove(0);
    let u = read_columns(&dir.join("u.csv"), grid.mid_len(), 1)?.remove(0);
    let alpha = read_columns(&dir.join("alpha.csv"), grid.mid_len(), 1)?.remove(0);
    let w = match grid.d {
        1 => read_columns(&dir.join("w.csv"), grid.nt * nc, 1)?.remove(0),
        _ => {
            let cols = read_columns(&dir.join("w.csv"), grid.nt * nc, 2)?;
            let mut w = vec![0.0; grid.w_len()];
            for k in 0..grid.nt {
                for i in 0..nc {
                    w[(k * 2) * nc + i] = cols[0][k * nc + i];
                    w[(k * 2 + 1) * nc + i] = cols[1][k * nc + i];
                }
            }
            w
        }
    };
    Ok(SolutionBundle {
        primal: StaggeredField { grid: *grid, m, w },
        dual: DualField { grid: *grid, u },
        alpha,
        history: Vec::new(),
        iterations: 0,
        status: SolveStatus::Converged,
    })
}
