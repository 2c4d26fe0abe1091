//! Run configuration: a strict TOML schema with five blocks (`problem`,
//! `grid`, `solver`, `diagnostics`, `output`). Unknown keys are fatal, parse
//! errors carry the offending key path and line, and semantic validation
//! reports which model hypothesis failed.

use crate::CliError;
use mfplan_core::{
    make_density, CoeffTable, CouplingSpec, DensityPreset, DiagnosticsConfig, GridSpec,
    HamiltonianSpec, ProblemSpec, SolverConfig, SpatialCoeff,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Supported entries of `output.formats`.
pub const KNOWN_FORMATS: [&str; 3] = ["fields", "history", "summary"];

/// Whole configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemBlock,
    pub grid: GridBlock,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Model data: dimension, horizon, exponents, coefficient fields, and the
/// two endpoint densities.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    /// Spatial dimension (1 or 2).
    pub d: usize,
    /// Time horizon `T > 0`.
    pub t_final: f64,
    /// Kinetic growth exponent (`r > 1`).
    pub r: f64,
    /// Congestion exponent (`q > 1`).
    pub q: f64,
    /// Mobility weight; defaults to the constant 1.
    #[serde(default = "one_coeff")]
    pub b: SpatialCoeff,
    /// Potential offset; defaults to the constant 0.
    #[serde(default = "zero_coeff")]
    pub c: SpatialCoeff,
    /// Congestion weight; defaults to the constant 1.
    #[serde(default = "one_coeff")]
    pub a: SpatialCoeff,
    /// Initial density.
    pub m0: DensityInput,
    /// Terminal density.
    pub m_t: DensityInput,
}

fn one_coeff() -> SpatialCoeff {
    SpatialCoeff::Constant { value: 1.0 }
}

fn zero_coeff() -> SpatialCoeff {
    SpatialCoeff::Constant { value: 0.0 }
}

/// Endpoint density: the built-in presets plus `from_csv`, which reads one
/// value per cell (row-major) from the last column of a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityInput {
    Uniform,
    Gaussian {
        center: Vec<f64>,
        width: f64,
    },
    DoubleBump {
        center_a: Vec<f64>,
        center_b: Vec<f64>,
        width: f64,
    },
    Values {
        values: Vec<f64>,
    },
    /// Path is resolved relative to the configuration file.
    FromCsv {
        path: PathBuf,
    },
}

impl DensityInput {
    fn resolve(&self, base: &Path) -> Result<DensityPreset, CliError> {
        Ok(match self {
            DensityInput::Uniform => DensityPreset::Uniform,
            DensityInput::Gaussian { center, width } => DensityPreset::Gaussian {
                center: center.clone(),
                width: *width,
            },
            DensityInput::DoubleBump {
                center_a,
                center_b,
                width,
            } => DensityPreset::DoubleBump {
                center_a: center_a.clone(),
                center_b: center_b.clone(),
                width: *width,
            },
            DensityInput::Values { values } => DensityPreset::Values {
                values: values.clone(),
            },
            DensityInput::FromCsv { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                DensityPreset::Values {
                    values: read_density_csv(&full)?,
                }
            }
        })
    }
}

/// Read one value per cell from the last column of a CSV file. A first line
/// whose last field is not a number is treated as a header.
pub fn read_density_csv(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let last = line.rsplit(',').next().unwrap().trim();
        match last.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if idx == 0 => continue, // header
            Err(e) => {
                return Err(CliError::validation(format!(
                    "{}:{}: expected a number in the last column, got {last:?} ({e})",
                    path.display(),
                    idx + 1
                )))
            }
        }
    }
    if values.is_empty() {
        return Err(CliError::validation(format!(
            "{}: no density values found",
            path.display()
        )));
    }
    Ok(values)
}

/// Space-time resolution.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    /// Cells per axis.
    pub n: usize,
    /// Time steps.
    pub nt: usize,
}

/// Artifact destination and selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    /// Output directory. Falls back to `$MFPLAN_OUT_DIR`, then `mfplan-out`.
    pub directory: Option<PathBuf>,
    /// Any subset of `fields`, `history`, `summary`.
    pub formats: Vec<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: None,
            formats: KNOWN_FORMATS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl OutputBlock {
    pub fn resolve_dir(&self) -> PathBuf {
        if let Some(dir) = &self.directory {
            return dir.clone();
        }
        if let Ok(dir) = std::env::var("MFPLAN_OUT_DIR") {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        PathBuf::from("mfplan-out")
    }

    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

/// A parsed configuration together with the validated core descriptions
/// built from it.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub problem: ProblemSpec,
    pub grid: GridSpec,
}

/// Parse `path` strictly and build the core problem/grid descriptions,
/// running full hypothesis validation (exponent growth, coefficient signs,
/// density admissibility).
pub fn load_config(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let config: RunConfig = toml::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let (problem, grid) = build_core(&config, base)?;
    for f in &config.output.formats {
        if !KNOWN_FORMATS.contains(&f.as_str()) {
            return Err(CliError::validation(format!(
                "output.formats: unknown format {f:?} (expected any of {KNOWN_FORMATS:?})"
            )));
        }
    }
    Ok(Loaded {
        config,
        problem,
        grid,
    })
}

fn build_core(config: &RunConfig, base: &Path) -> Result<(ProblemSpec, GridSpec), CliError> {
    let p = &config.problem;
    let problem = ProblemSpec {
        d: p.d,
        t_final: p.t_final,
        hamiltonian: HamiltonianSpec {
            r: p.r,
            b: p.b.clone(),
            c: p.c.clone(),
        },
        coupling: CouplingSpec {
            q: p.q,
            a: p.a.clone(),
        },
        m0: p.m0.resolve(base)?,
        m_t: p.m_t.resolve(base)?,
    };
    let grid = GridSpec::new(p.d, config.grid.n, config.grid.nt, p.t_final)
        .map_err(CliError::from_core)?;
    // Full semantic validation: exponent growth condition, coefficient
    // signs, and density admissibility all surface here.
    CoeffTable::new(&problem, &grid).map_err(CliError::from_core)?;
    make_density(&problem.m0, &grid).map_err(CliError::from_core)?;
    make_density(&problem.m_t, &grid).map_err(CliError::from_core)?;
    Ok((problem, grid))
}

