//! Convex solver for first-order mean-field planning on the flat torus.
//!
//! The primal problem minimizes the congestion-penalized kinetic energy
//!
//! ```text
//!   B(m, w) = ∫∫ [ m·H*(x, -w/m) + F(x, m) ] dx dt
//! ```
//!
//! over density/momentum pairs that satisfy the continuity equation
//! `∂_t m + div w = 0` with both endpoint densities `m(0) = m0`, `m(T) = mT`
//! prescribed. The dual problem maximizes, over potentials `u` and
//! nonnegative `α` with `-∂_t u + H(x, ∇u) ≤ α`, the pairing
//! `∫ u(0) m0 - ∫ u(T) mT - ∫∫ F*(x, α)`; at the saddle point the two
//! optimal values cancel, `w = -m·D_ξH(x, ∇u)`, and `α = f(x, m)` where
//! `m > 0`.
//!
//! Crate layout:
//! - [`model`]: Hamiltonian/coupling presets, conjugates, exponent bookkeeping,
//!   hypothesis checks.
//! - [`grid`]: staggered space-time lattices on the periodic cube, the discrete
//!   continuity operator and its exact adjoint, quadrature.
//! - [`prox`]: the joint per-cell proximal map of the kinetic-plus-congestion
//!   integrand, and the safeguarded scalar root solver it is built on.
//! - [`solver`]: the primal-dual (Chambolle-Pock) iteration, functional
//!   evaluation, and the recovered dual certificate.
//! - [`diagnostics`]: duality-gap / energy-identity / optimality residuals,
//!   Sobolev-seminorm and Hölder-quotient monitors, stability and refinement
//!   studies.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod model;
pub mod prox;
pub mod solver;

pub use diagnostics::{DiagnosticsConfig, DiagnosticsReport, RefinementRow, StabilityRow};
pub use error::Error;
pub use grid::{DualField, GridSpec, Lattice, StaggeredField};
pub use model::{
    make_density, CoeffTable, CouplingSpec, DensityPreset, Exponents, HamiltonianSpec,
    HypothesisCheck, ProblemSpec, SpatialCoeff,
};
pub use prox::{ProxPoint, ProxQuery};
pub use solver::{
    HistoryRow, Normalization, SolutionBundle, SolveStatus, SolverConfig, WarmStart,
};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
