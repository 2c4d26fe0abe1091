//! Model data: Hamiltonian and congestion-coupling presets, their convex
//! conjugates, derived exponents, and standing-hypothesis checks.
//!
//! The separable power family is used throughout:
//!
//! ```text
//!   H(x, ξ)  = b(x)·|ξ|^r / r - c(x)            (r > 1, b > 0, c ≥ 0)
//!   H*(x, ζ) = b(x)^{1-r'}·|ζ|^{r'} / r' + c(x)  (r' = r/(r-1))
//!   f(x, m)  = a(x)·m^{q-1}                      (q > 1, a > 0)
//!   F(x, m)  = a(x)·m^q / q   for m ≥ 0, +∞ for m < 0
//!   F*(x, α) = a(x)^{1-q'}·(α₊)^{q'} / q'        (q' = q/(q-1))
//! ```
//!
//! All spatial coefficients live on the unit torus, so coordinates are taken
//! modulo 1 along each axis.

use crate::error::Error;
use crate::grid::GridSpec;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Spatial coefficient field on the torus.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialCoeff {
    /// Constant value.
    Constant { value: f64 },
    /// Plane wave `mean + amplitude · cos(2π k·x)` with integer frequency
    /// vector `k` (one entry per axis).
    Cosine {
        mean: f64,
        amplitude: f64,
        frequency: Vec<i32>,
    },
}

impl SpatialCoeff {
    /// Evaluate at a point of the torus.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            SpatialCoeff::Constant { value } => *value,
            SpatialCoeff::Cosine {
                mean,
                amplitude,
                frequency,
            } => {
                let phase: f64 = frequency
                    .iter()
                    .zip(x)
                    .map(|(k, xi)| f64::from(*k) * xi)
                    .sum();
                mean + amplitude * (2.0 * std::f64::consts::PI * phase).cos()
            }
        }
    }

    /// Tight lower bound over the torus.
    pub fn min_value(&self) -> f64 {
        match self {
            SpatialCoeff::Constant { value } => *value,
            SpatialCoeff::Cosine {
                mean, amplitude, ..
            } => mean - amplitude.abs(),
        }
    }

    /// Tight upper bound over the torus.
    pub fn max_value(&self) -> f64 {
        match self {
            SpatialCoeff::Constant { value } => *value,
            SpatialCoeff::Cosine {
                mean, amplitude, ..
            } => mean + amplitude.abs(),
        }
    }

    fn check_dim(&self, d: usize, what: &str) -> Result<()> {
        if let SpatialCoeff::Cosine { frequency, .. } = self {
            if frequency.len() != d {
                return Err(Error::hypothesis(
                    "coefficient dimensionality",
                    format!(
                        "{what}: frequency vector has {} entries, problem has d = {d}",
                        frequency.len()
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Endpoint density preset, discretized by [`make_density`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityPreset {
    /// Constant density 1 (the normalized uniform measure).
    Uniform,
    /// Wrapped Gaussian bump.
    Gaussian { center: Vec<f64>, width: f64 },
    /// Even mixture of two wrapped Gaussian bumps with a common width.
    DoubleBump {
        center_a: Vec<f64>,
        center_b: Vec<f64>,
        width: f64,
    },
    /// Explicit cell values (row-major over the cell lattice), e.g. loaded
    /// from a file. Renormalized like every other preset.
    Values { values: Vec<f64> },
}

/// Hamiltonian side of the model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    /// Kinetic growth exponent, `r > 1`.
    pub r: f64,
    /// Mobility weight `b`, strictly positive.
    pub b: SpatialCoeff,
    /// Potential offset `c`, nonnegative.
    pub c: SpatialCoeff,
}

/// Congestion-coupling side of the model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    /// Congestion exponent, `q > 1`.
    pub q: f64,
    /// Congestion weight `a`, strictly positive.
    pub a: SpatialCoeff,
}

/// Complete problem description (model data plus endpoint densities).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    /// Spatial dimension, 1 or 2.
    pub d: usize,
    /// Time horizon `T > 0`.
    pub t_final: f64,
    pub hamiltonian: HamiltonianSpec,
    pub coupling: CouplingSpec,
    /// Initial density.
    pub m0: DensityPreset,
    /// Terminal density.
    pub m_t: DensityPreset,
}

/// Conjugate and compatibility exponents derived from `(r, q, d)`.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Exponents {
    /// `r' = r/(r-1)`.
    pub r_conj: f64,
    /// `q' = q/(q-1)`.
    pub q_conj: f64,
    /// Momentum integrability exponent `ℓ = r'·q/(r' + q - 1)`.
    pub ell: f64,
    /// Interior time-Hölder exponent `ν = (r - d(q-1)) / (d(q-1)(r-1) + rq)`.
    pub nu: f64,
}

/// Outcome of one standing-hypothesis check.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Per-cell coefficient bundle with the conjugate weights precomputed.
#[derive(Debug, Clone, Copy)]
pub struct CellCoeffs {
    pub b: f64,
    /// `b^{1-r'}`, the weight of `|ζ|^{r'}/r'` in `H*`.
    pub b_conj: f64,
    pub c: f64,
    pub a: f64,
    /// `a^{1-q'}`, the weight of `(α₊)^{q'}/q'` in `F*`.
    pub a_conj: f64,
}

// ---------------------------------------------------------------------------
// Scalar kernels. These are the single source of truth for the power-family
// formulas; the vector-argument methods below and the solver hot loops all
// call into them.
// ---------------------------------------------------------------------------

/// `H(x, ξ)` for `|ξ| = xi_norm`.
#[inline]
pub fn h_scalar(b: f64, c: f64, r: f64, xi_norm: f64) -> f64 {
    b * xi_norm.powf(r) / r - c
}

/// `H*(x, ζ)` for `|ζ| = zeta_norm`.
#[inline]
pub fn h_star_scalar(b_conj: f64, c: f64, r_conj: f64, zeta_norm: f64) -> f64 {
    b_conj * zeta_norm.powf(r_conj) / r_conj + c
}

/// Radial factor `g(|ξ|)` with `D_ξH(x, ξ) = g(|ξ|)·ξ`; zero at the origin
/// (the continuous extension for every `r > 1`).
#[inline]
pub fn grad_xi_h_factor(b: f64, r: f64, xi_norm: f64) -> f64 {
    if xi_norm == 0.0 {
        0.0
    } else {
        b * xi_norm.powf(r - 2.0)
    }
}

/// Perspective (kinetic) term `m·H*(x, -w/m)` for `|w| = w_norm`, with the
/// extended-real convention at `m = 0`.
#[inline]
pub fn kinetic_scalar(b_conj: f64, c: f64, r_conj: f64, m: f64, w_norm: f64) -> f64 {
    if m < 0.0 {
        return f64::INFINITY;
    }
    if m == 0.0 {
        return if w_norm == 0.0 { 0.0 } else { f64::INFINITY };
    }
    // m·(b_conj |w/m|^{r'}/r' + c) = b_conj |w|^{r'} m^{1-r'}/r' + c·m
    b_conj * w_norm.powf(r_conj) * m.powf(1.0 - r_conj) / r_conj + c * m
}

/// `f(x, m) = a·m^{q-1}` for `m ≥ 0`.
#[inline]
pub fn f_scalar(a: f64, q: f64, m: f64) -> f64 {
    if m <= 0.0 {
        0.0
    } else {
        a * m.powf(q - 1.0)
    }
}

/// `F(x, m) = a·m^q/q` for `m ≥ 0`, `+∞` for `m < 0`.
#[inline]
pub fn f_primitive_scalar(a: f64, q: f64, m: f64) -> f64 {
    if m < 0.0 {
        f64::INFINITY
    } else {
        a * m.powf(q) / q
    }
}

/// `F*(x, α) = a^{1-q'}·(α₊)^{q'}/q'`; identically zero on `α ≤ 0`.
#[inline]
pub fn f_star_scalar(a_conj: f64, q_conj: f64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        0.0
    } else {
        a_conj * alpha.powf(q_conj) / q_conj
    }
}

/// Power map `j(v) = |v|^{p/2-1}·v` (zero at the origin).
#[inline]
fn half_power_map(v: &[f64], p: f64) -> Vec<f64> {
    let norm = v.iter().map(|vi| vi * vi).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; v.len()];
    }
    let factor = norm.powf(p / 2.0 - 1.0);
    v.iter().map(|vi| factor * vi).collect()
}

/// `j₁(ξ) = |ξ|^{r/2-1}·ξ`, the primal half-power map of the coercivity bound.
pub fn j1(xi: &[f64], r: f64) -> Vec<f64> {
    half_power_map(xi, r)
}

/// `j₂(ζ) = |ζ|^{r'/2-1}·ζ`, the dual half-power map.
pub fn j2(zeta: &[f64], r_conj: f64) -> Vec<f64> {
    half_power_map(zeta, r_conj)
}

#[inline]
fn norm(v: &[f64]) -> f64 {
    v.iter().map(|vi| vi * vi).sum::<f64>().sqrt()
}

impl Exponents {
    /// Derive the exponent bundle from `(r, q, d)`. Fails when the joint
    /// growth restriction `r > max{d(q-1), 1}` is violated.
    pub fn derive(r: f64, q: f64, d: usize) -> Result<Self> {
        if !(r > 1.0) {
            return Err(Error::hypothesis(
                "kinetic growth",
                format!("requires r > 1, got r = {r}"),
            ));
        }
        if !(q > 1.0) {
            return Err(Error::hypothesis(
                "congestion growth",
                format!("requires q > 1, got q = {q}"),
            ));
        }
        let dq = d as f64 * (q - 1.0);
        if !(r > dq.max(1.0)) {
            return Err(Error::hypothesis(
                "exponent compatibility",
                format!("requires r > max(d(q-1), 1) = {}, got r = {r}", dq.max(1.0)),
            ));
        }
        let r_conj = r / (r - 1.0);
        let q_conj = q / (q - 1.0);
        let ell = r_conj * q / (r_conj + q - 1.0);
        let nu = (r - dq) / (dq * (r - 1.0) + r * q);
        Ok(Exponents {
            r_conj,
            q_conj,
            ell,
            nu,
        })
    }
}

impl ProblemSpec {
    /// Derived exponents for this problem.
    pub fn exponents(&self) -> Result<Exponents> {
        Exponents::derive(self.hamiltonian.r, self.coupling.q, self.d)
    }

    /// Coefficient bundle at a spatial point.
    pub fn coeffs_at(&self, x: &[f64]) -> CellCoeffs {
        let r_conj = self.hamiltonian.r / (self.hamiltonian.r - 1.0);
        let q_conj = self.coupling.q / (self.coupling.q - 1.0);
        let b = self.hamiltonian.b.eval(x);
        let a = self.coupling.a.eval(x);
        CellCoeffs {
            b,
            b_conj: b.powf(1.0 - r_conj),
            c: self.hamiltonian.c.eval(x),
            a,
            a_conj: a.powf(1.0 - q_conj),
        }
    }

    /// `H(x, ξ)`.
    pub fn eval_h(&self, x: &[f64], xi: &[f64]) -> f64 {
        h_scalar(
            self.hamiltonian.b.eval(x),
            self.hamiltonian.c.eval(x),
            self.hamiltonian.r,
            norm(xi),
        )
    }

    /// `H*(x, ζ)`.
    pub fn eval_h_star(&self, x: &[f64], zeta: &[f64]) -> f64 {
        let co = self.coeffs_at(x);
        let ex = self
            .exponents()
            .expect("exponents validated at construction");
        h_star_scalar(co.b_conj, co.c, ex.r_conj, norm(zeta))
    }

    /// `D_ξH(x, ξ) = b(x)·|ξ|^{r-2}·ξ`, continuously extended by 0 at `ξ = 0`.
    pub fn grad_xi_h(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let factor = grad_xi_h_factor(self.hamiltonian.b.eval(x), self.hamiltonian.r, norm(xi));
        xi.iter().map(|v| factor * v).collect()
    }

    /// Kinetic (perspective) term `m·H*(x, -w/m)`, extended-real.
    pub fn kinetic(&self, x: &[f64], m: f64, w: &[f64]) -> f64 {
        let co = self.coeffs_at(x);
        let ex = self
            .exponents()
            .expect("exponents validated at construction");
        kinetic_scalar(co.b_conj, co.c, ex.r_conj, m, norm(w))
    }

    /// Congestion marginal cost `f(x, m)`.
    pub fn eval_f(&self, x: &[f64], m: f64) -> f64 {
        f_scalar(self.coupling.a.eval(x), self.coupling.q, m)
    }

    /// Congestion primitive `F(x, m)` (extended-real).
    pub fn eval_f_primitive(&self, x: &[f64], m: f64) -> f64 {
        f_primitive_scalar(self.coupling.a.eval(x), self.coupling.q, m)
    }

    /// Conjugate `F*(x, α)`.
    pub fn eval_f_star(&self, x: &[f64], alpha: f64) -> f64 {
        let co = self.coeffs_at(x);
        let ex = self
            .exponents()
            .expect("exponents validated at construction");
        f_star_scalar(co.a_conj, ex.q_conj, alpha)
    }

    /// Fail on the first violated hypothesis. Cheap arithmetic subset of
    /// [`ProblemSpec::check_assumptions`]; run before any solve.
    pub fn validate(&self) -> Result<()> {
        if self.d != 1 && self.d != 2 {
            return Err(Error::hypothesis(
                "spatial dimension",
                format!("d must be 1 or 2, got {}", self.d),
            ));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::hypothesis(
                "time horizon",
                format!("T must be positive and finite, got {}", self.t_final),
            ));
        }
        self.hamiltonian.b.check_dim(self.d, "b")?;
        self.hamiltonian.c.check_dim(self.d, "c")?;
        self.coupling.a.check_dim(self.d, "a")?;
        if !(self.hamiltonian.b.min_value() > 0.0) {
            return Err(Error::hypothesis(
                "mobility positivity",
                format!("b must be strictly positive, min b = {}", self.hamiltonian.b.min_value()),
            ));
        }
        if self.hamiltonian.c.min_value() < 0.0 {
            return Err(Error::hypothesis(
                "potential sign",
                format!("c must be nonnegative, min c = {}", self.hamiltonian.c.min_value()),
            ));
        }
        if !(self.coupling.a.min_value() > 0.0) {
            return Err(Error::hypothesis(
                "congestion positivity",
                format!("a must be strictly positive, min a = {}", self.coupling.a.min_value()),
            ));
        }
        self.exponents().map(|_| ())
    }

    /// Full standing-hypothesis report: growth envelope, radial sublinearity,
    /// exponent compatibility, and endpoint admissibility on the given grid.
    /// Sampled conditions are verified on a deterministic grid of test points.
    pub fn check_assumptions(&self, grid: &GridSpec) -> Vec<HypothesisCheck> {
        let mut out = Vec::new();
        let mut push = |name: &str, passed: bool, detail: String| {
            out.push(HypothesisCheck {
                name: name.to_string(),
                passed,
                detail,
            });
        };

        let basic = self.validate();
        if let Err(e) = &basic {
            push("basic admissibility", false, e.to_string());
        } else {
            push("basic admissibility", true, "model data admissible".into());
        }

        let r = self.hamiltonian.r;
        let b_min = self.hamiltonian.b.min_value();
        let b_max = self.hamiltonian.b.max_value();
        let c_max = self.hamiltonian.c.max_value();

        // Growth envelope: (1/(rC))|ξ|^r - C ≤ H ≤ (C/r)|ξ|^r + C with
        // C = max(b_max, 1/b_min, c_max, 1), verified on sampled (x, ξ).
        if basic.is_ok() {
            let cc = b_max.max(1.0 / b_min).max(c_max).max(1.0);
            let mut worst: f64 = 0.0;
            let samples = self.sample_points(grid);
            for x in &samples {
                for k in 0..40 {
                    let xi_norm = 0.25 * k as f64;
                    let h = h_scalar(self.hamiltonian.b.eval(x), self.hamiltonian.c.eval(x), r, xi_norm);
                    let lo = xi_norm.powf(r) / (r * cc) - cc;
                    let hi = cc * xi_norm.powf(r) / r + cc;
                    worst = worst.max(lo - h).max(h - hi);
                }
            }
            push(
                "growth envelope",
                worst <= 1e-12,
                format!("C = {cc:.6}, worst envelope violation {worst:.3e}"),
            );

            // Radial sublinearity: H(x, s·ξ) ≤ s·H(x, ξ) for s ∈ [0, 1].
            // Holds for the power family exactly when c ≥ 0.
            let mut worst_sub: f64 = 0.0;
            for x in &samples {
                let b = self.hamiltonian.b.eval(x);
                let c = self.hamiltonian.c.eval(x);
                for k in 1..=20 {
                    let xi_norm = 0.5 * k as f64;
                    for j in 0..=10 {
                        let s = j as f64 / 10.0;
                        let lhs = h_scalar(b, c, r, s * xi_norm);
                        let rhs = s * h_scalar(b, c, r, xi_norm);
                        worst_sub = worst_sub.max(lhs - rhs);
                    }
                }
            }
            push(
                "radial sublinearity",
                worst_sub <= 1e-12,
                format!("worst violation {worst_sub:.3e}"),
            );

            match self.exponents() {
                Ok(ex) => push(
                    "exponent compatibility",
                    true,
                    format!(
                        "r' = {:.6}, q' = {:.6}, ell = {:.6}, nu = {:.6}",
                        ex.r_conj, ex.q_conj, ex.ell, ex.nu
                    ),
                ),
                Err(e) => push("exponent compatibility", false, e.to_string()),
            }

            // Endpoint admissibility: nonnegative with unit discrete mass.
            for (label, preset) in [("initial density", &self.m0), ("terminal density", &self.m_t)]
            {
                match make_density(preset, grid) {
                    Ok(vals) => {
                        let mass: f64 = vals.iter().sum::<f64>() * grid.cell_volume();
                        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                        push(
                            label,
                            min >= 0.0 && (mass - 1.0).abs() <= 1e-12,
                            format!("min = {min:.3e}, discrete mass = {mass:.15}"),
                        );
                    }
                    Err(e) => push(label, false, e.to_string()),
                }
            }
        }
        out
    }

    fn sample_points(&self, grid: &GridSpec) -> Vec<Vec<f64>> {
        // A coarse deterministic subset of cell centers.
        let step = (grid.n / 4).max(1);
        let mut pts = Vec::new();
        match self.d {
            1 => {
                let mut i = 0;
                while i < grid.n {
                    pts.push(vec![(i as f64 + 0.5) * grid.h()]);
                    i += step;
                }
            }
            _ => {
                let mut iy = 0;
                while iy < grid.n {
                    let mut ix = 0;
                    while ix < grid.n {
                        pts.push(vec![
                            (ix as f64 + 0.5) * grid.h(),
                            (iy as f64 + 0.5) * grid.h(),
                        ]);
                        ix += step;
                    }
                    iy += step;
                }
            }
        }
        pts
    }
}

/// Per-cell coefficient tables over a grid, with conjugate weights and
/// exponents precomputed once. The solver and diagnostics hot loops read
/// these instead of re-evaluating coefficient fields.
#[derive(Debug, Clone)]
pub struct CoeffTable {
    pub grid: GridSpec,
    pub r: f64,
    pub r_conj: f64,
    pub q: f64,
    pub q_conj: f64,
    /// Mobility `b(x_i)` per cell.
    pub b: Vec<f64>,
    /// `b^{1-r'}` per cell.
    pub b_conj: Vec<f64>,
    /// Potential `c(x_i)` per cell.
    pub c: Vec<f64>,
    /// Congestion weight `a(x_i)` per cell.
    pub a: Vec<f64>,
    /// `a^{1-q'}` per cell.
    pub a_conj: Vec<f64>,
}

impl CoeffTable {
    /// Validate the problem, check that grid and problem agree on dimension
    /// and horizon, and tabulate all coefficients at the cell centers.
    pub fn new(problem: &ProblemSpec, grid: &GridSpec) -> Result<Self> {
        problem.validate()?;
        if grid.d != problem.d {
            return Err(Error::Grid(format!(
                "grid dimension {} does not match problem dimension {}",
                grid.d, problem.d
            )));
        }
        if (grid.t_final - problem.t_final).abs() > 1e-12 * problem.t_final {
            return Err(Error::Grid(format!(
                "grid horizon {} does not match problem horizon {}",
                grid.t_final, problem.t_final
            )));
        }
        let ex = problem.exponents()?;
        let nc = grid.cells();
        let mut table = CoeffTable {
            grid: *grid,
            r: problem.hamiltonian.r,
            r_conj: ex.r_conj,
            q: problem.coupling.q,
            q_conj: ex.q_conj,
            b: Vec::with_capacity(nc),
            b_conj: Vec::with_capacity(nc),
            c: Vec::with_capacity(nc),
            a: Vec::with_capacity(nc),
            a_conj: Vec::with_capacity(nc),
        };
        for i in 0..nc {
            let co = problem.coeffs_at(&grid.cell_center(i));
            table.b.push(co.b);
            table.b_conj.push(co.b_conj);
            table.c.push(co.c);
            table.a.push(co.a);
            table.a_conj.push(co.a_conj);
        }
        Ok(table)
    }
}

/// Distance on the unit torus between scalars.
#[inline]
pub fn torus_dist_1d(a: f64, b: f64) -> f64 {
    let diff = (a - b).rem_euclid(1.0);
    diff.min(1.0 - diff)
}

/// Squared torus distance between points.
pub fn torus_dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(ai, bi)| {
            let di = torus_dist_1d(*ai, *bi);
            di * di
        })
        .sum()
}

fn wrapped_gaussian(x: &[f64], center: &[f64], width: f64) -> f64 {
    // Sum over the nearest periodic images; width ≤ 1 makes |k| ≤ 4 ample.
    let mut val = 1.0;
    for (xi, ci) in x.iter().zip(center) {
        let mut axis = 0.0;
        for k in -4..=4 {
            let s = xi - ci + f64::from(k);
            axis += (-0.5 * (s / width) * (s / width)).exp();
        }
        val *= axis;
    }
    val
}

/// Discretize a density preset on the cell centers of `grid`: evaluates the
/// preset, rejects negative data and zero total mass, and rescales so the
/// discrete mass `h^d·Σ m_i` is exactly 1.
pub fn make_density(preset: &DensityPreset, grid: &GridSpec) -> Result<Vec<f64>> {
    let nc = grid.cells();
    let mut vals = match preset {
        DensityPreset::Uniform => vec![1.0; nc],
        DensityPreset::Gaussian { center, width } => {
            if center.len() != grid.d {
                return Err(Error::Density(format!(
                    "gaussian center has {} coordinates, grid has d = {}",
                    center.len(),
                    grid.d
                )));
            }
            if !(*width > 0.0) {
                return Err(Error::Density(format!("gaussian width must be positive, got {width}")));
            }
            (0..nc)
                .map(|i| wrapped_gaussian(&grid.cell_center(i), center, *width))
                .collect()
        }
        DensityPreset::DoubleBump {
            center_a,
            center_b,
            width,
        } => {
            if center_a.len() != grid.d || center_b.len() != grid.d {
                return Err(Error::Density(format!(
                    "double_bump centers must have d = {} coordinates",
                    grid.d
                )));
            }
            if !(*width > 0.0) {
                return Err(Error::Density(format!(
                    "double_bump width must be positive, got {width}"
                )));
            }
            (0..nc)
                .map(|i| {
                    let x = grid.cell_center(i);
                    0.5 * wrapped_gaussian(&x, center_a, *width)
                        + 0.5 * wrapped_gaussian(&x, center_b, *width)
                })
                .collect()
        }
        DensityPreset::Values { values } => {
            if values.len() != nc {
                return Err(Error::Density(format!(
                    "expected {} cell values, got {}",
                    nc,
                    values.len()
                )));
            }
            values.clone()
        }
    };

    if let Some(bad) = vals.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Density(format!(
            "density preset produced a negative or non-finite value: {bad}"
        )));
    }
    let mass: f64 = vals.iter().sum::<f64>() * grid.cell_volume();
    if !(mass > 0.0) {
        return Err(Error::Density("density preset has zero total mass".into()));
    }
    for v in &mut vals {
        *v /= mass;
    }
    Ok(vals)
}
