//! `mfplan` — command-line driver for the mean-field planning solver.
//!
//! Subcommands: `solve`, `diagnose`, `refine`, `stability`, `exponents`.
//! Exit codes: 0 on success, 2 on configuration/usage errors, 3 when a
//! solve fails to converge within its budget.

mod config;
mod fields_io;
mod report;

use clap::{Parser, Subcommand};
use config::{load_config, Loaded};
use mfplan_core::solver::{self, SolveStatus};
use mfplan_core::{diagnostics, CoeffTable, Exponents, Lattice};
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Error carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, bad arguments, or an I/O failure. Exit 2.
    Validation(String),
    /// A solve exhausted its iteration budget. Exit 3.
    NonConvergence(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn from_core(e: mfplan_core::Error) -> Self {
        CliError::Validation(e.to_string())
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::NonConvergence(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::NonConvergence(m) => f.write_str(m),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mfplan",
    version,
    about = "Grid solver for congestion-penalized optimal transport of densities"
)]
struct Cli {
    /// Cap the worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the planning problem and write fields, history, and summary.
    Solve {
        /// TOML run configuration.
        config: PathBuf,
    },
    /// Recompute every certificate from stored field files.
    Diagnose {
        /// TOML run configuration describing the stored run.
        config: PathBuf,
        /// Directory holding m.csv, w.csv, u.csv, alpha.csv.
        fields_dir: PathBuf,
    },
    /// Solve on a ladder of grids, warm-starting each level from the last.
    Refine {
        /// TOML run configuration.
        config: PathBuf,
        /// Cells per axis for each level, e.g. --n 32,64,128.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        /// Time steps for each level; defaults to the --n values.
        #[arg(long, value_delimiter = ',')]
        nt: Vec<usize>,
    },
    /// Re-solve with endpoint densities mixed toward uniform and report
    /// how the objective and weak pairings walk back.
    Stability {
        /// TOML run configuration.
        config: PathBuf,
        /// Mixing weights in (0, 1); defaults to diagnostics.eps_list.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
    },
    /// Print the conjugate and compatibility exponents of the model.
    Exponents {
        /// TOML run configuration.
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .ok();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve { config } => cmd_solve(&config),
        Command::Diagnose { config, fields_dir } => cmd_diagnose(&config, &fields_dir),
        Command::Refine { config, n, nt } => cmd_refine(&config, &n, &nt),
        Command::Stability { config, eps } => cmd_stability(&config, &eps),
        Command::Exponents { config } => cmd_exponents(&config),
    }
}

fn ensure_out_dir(loaded: &Loaded) -> Result<PathBuf, CliError> {
    let dir = loaded.config.output.resolve_dir();
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::validation(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn cmd_solve(config_path: &Path) -> Result<(), CliError> {
    let loaded = load_config(config_path)?;
    let dir = ensure_out_dir(&loaded)?;
    let bundle = solver::solve(&loaded.problem, &loaded.grid, &loaded.config.solver)
        .map_err(CliError::from_core)?;

    let ct = CoeffTable::new(&loaded.problem, &loaded.grid).map_err(CliError::from_core)?;
    let lat = Lattice::new(&loaded.grid);
    let report = diagnostics::diagnose(&ct, &lat, &bundle, &loaded.config.diagnostics)
        .map_err(CliError::from_core)?;

    let out = &loaded.config.output;
    if out.wants("fields") {
        fields_io::write_fields(&dir, &bundle)?;
    }
    if out.wants("history") {
        fields_io::write_history(&dir, &bundle.history)?;
    }
    if out.wants("summary") {
        let text = report::render_summary(
            &loaded.config,
            bundle.status,
            bundle.iterations,
            &report,
            &bundle.history,
        )?;
        report::write_text(&dir.join("summary.toml"), &text)?;
    }
    println!(
        "status={} iterations={} B={:.6e} gap={:.3e} feas={:.3e} out={}",
        report::status_name(bundle.status),
        bundle.iterations,
        report.b,
        report.gap,
        report.feas,
        dir.display()
    );
    if bundle.status != SolveStatus::Converged {
        return Err(CliError::NonConvergence(format!(
            "no convergence within {} iterations (gap {:.3e}, feas {:.3e})",
            bundle.iterations, report.gap, report.feas
        )));
    }
    Ok(())
}

fn cmd_diagnose(config_path: &Path, fields_dir: &Path) -> Result<(), CliError> {
    let loaded = load_config(config_path)?;
    let bundle = fields_io::read_bundle(fields_dir, &loaded.grid)?;
    let ct = CoeffTable::new(&loaded.problem, &loaded.grid).map_err(CliError::from_core)?;
    let lat = Lattice::new(&loaded.grid);
    let report = diagnostics::diagnose(&ct, &lat, &bundle, &loaded.config.diagnostics)
        .map_err(CliError::from_core)?;
    print!("{}", report::render_report(&report)?);
    Ok(())
}

fn cmd_refine(config_path: &Path, n: &[usize], nt: &[usize]) -> Result<(), CliError> {
    let loaded = load_config(config_path)?;
    let n: Vec<usize> = if n.is_empty() {
        vec![loaded.grid.n]
    } else {
        n.to_vec()
    };
    let nt: Vec<usize> = if nt.is_empty() {
        if n.len() == 1 && loaded.grid.nt != loaded.grid.n {
            vec![loaded.grid.nt]
        } else {
            n.clone()
        }
    } else {
        nt.to_vec()
    };
    if n.len() != nt.len() {
        return Err(CliError::validation(format!(
            "--n lists {} levels but --nt lists {}",
            n.len(),
            nt.len()
        )));
    }
    let levels: Vec<(usize, usize)> = n.into_iter().zip(nt).collect();
    let dir = ensure_out_dir(&loaded)?;
    let rows = diagnostics::refinement_study(
        &loaded.problem,
        &loaded.config.solver,
        &loaded.config.diagnostics,
        &levels,
    )
    .map_err(CliError::from_core)?;
    let text = report::render_refinement(&loaded.config, &rows)?;
    report::write_text(&dir.join("refinement.toml"), &text)?;
    for row in &rows {
        println!(
            "n={} nt={} iterations={} converged={} B={:.6e} gap={:.3e}",
            row.n, row.nt, row.iterations, row.converged, row.report.b, row.report.gap
        );
    }
    println!("out={}", dir.join("refinement.toml").display());
    if rows.iter().any(|r| !r.converged) {
        return Err(CliError::NonConvergence(
            "a refinement level exhausted its iteration budget".into(),
        ));
    }
    Ok(())
}

fn cmd_stability(config_path: &Path, eps: &[f64]) -> Result<(), CliError> {
    let mut loaded = load_config(config_path)?;
    if !eps.is_empty() {
        loaded.config.diagnostics.eps_list = eps.to_vec();
    }
    let dir = ensure_out_dir(&loaded)?;
    let rows = diagnostics::stability_experiment(
        &loaded.problem,
        &loaded.grid,
        &loaded.config.solver,
        &loaded.config.diagnostics,
    )
    .map_err(CliError::from_core)?;
    report::write_text(&dir.join("stability.csv"), &report::render_stability(&rows))?;
    for row in &rows {
        println!(
            "eps={:.3} B={:.6e} lq_norm={:.6e} gap={:.3e} converged={}",
            row.eps, row.b, row.lq_norm, row.gap, row.converged
        );
    }
    println!("out={}", dir.join("stability.csv").display());
    if rows.iter().any(|r| !r.converged) {
        return Err(CliError::NonConvergence(
            "a perturbed solve exhausted its iteration budget".into(),
        ));
    }
    Ok(())
}

fn cmd_exponents(config_path: &Path) -> Result<(), CliError> {
    let loaded = load_config(config_path)?;
    let p = &loaded.problem;
    let ex =
        Exponents::derive(p.hamiltonian.r, p.coupling.q, p.d).map_err(CliError::from_core)?;
    println!("r = {}", p.hamiltonian.r);
    println!("q = {}", p.coupling.q);
    println!("d = {}", p.d);
    println!("r_conj = {}", ex.r_conj);
    println!("q_conj = {}", ex.q_conj);
    println!("ell = {}", ex.ell);
    println!("nu = {}", ex.nu);
    Ok(())
}
