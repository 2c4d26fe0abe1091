//! Primal-dual solver for the discrete planning problem.
//!
//! Minimizes the discrete transport functional
//!
//! ```text
//!   ℬ_h(m, w) = h^d·dt · Σ_{k,i} Φ_i(μ[k,i], v[k,i])
//! ```
//!
//! over fields satisfying the staggered continuity equation `R(m, w) = 0`
//! with `m[0] = m₀`, `m[Nt] = m_T` held fixed, where `μ = ` node-to-midpoint
//! average of `m` and `v = ` face-to-center average of `w`. The saddle-point
//! iteration is of Chambolle-Pock type on the stacked linear map
//! `K = (T; −R)` with `T` the averaging pair: a dual momentum `p` carries the
//! cost conjugate (its proximal step reduces to [`crate::prox::prox_cost`]
//! per cell via the Moreau identity), and the continuity multiplier `u` is
//! driven by the residual of the extrapolated primal. At the fixed point `u`
//! is exactly the discrete dual potential: `Rᵀu = Tᵀ∇Φ` on the free
//! variables, the discrete image of the optimality system.
//!
//! The dual value is reported through `α = recover_alpha(u)` (the smallest
//! feasible congestion multiplier for `u`) and endpoint traces of `u`
//! extrapolated by half a step using the discrete Hamilton-Jacobi flux
//! `H(x, ∇_h u) − α`; on the analytic uniform saddle this pairing makes
//! `𝒜 + ℬ` vanish identically, and in general it is second-order consistent.

use crate::error::Error;
use crate::grid::{GridSpec, Lattice, StaggeredField};
use crate::grid::DualField;
use crate::model::{self, make_density, CoeffTable, ProblemSpec};
use crate::prox::{prox_cost, ProxQuery};
use crate::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Normalization applied to the reported dual potential. Every certificate
/// is invariant under `u → u + const`, so this is presentation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Subtract the space-time mean of `u`.
    MeanZero,
    /// Shift so the terminal trace has minimum zero.
    MinTerminalZero,
}

/// Iteration parameters. `tau`/`sigma` default to `0.95/√(1+‖R‖²)`, which
/// satisfies the step rule `τσ(1+‖R‖²) ≤ 1` for the stacked operator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Primal step; `None` picks the default.
    pub tau: Option<f64>,
    /// Dual step; `None` picks the default.
    pub sigma: Option<f64>,
    /// Extrapolation weight in `[0, 1]`.
    pub theta: f64,
    /// Iteration budget.
    pub max_iter: usize,
    /// Relative duality-gap target.
    pub tol_gap: f64,
    /// Continuity-residual target (space-time L² norm).
    pub tol_feas: f64,
    /// Certificate cadence in iterations.
    pub check_every: usize,
    /// Dual-potential normalization for reporting.
    pub normalization: Normalization,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tau: None,
            sigma: None,
            theta: 1.0,
            max_iter: 200_000,
            tol_gap: 1e-4,
            tol_feas: 1e-5,
            check_every: 50,
            normalization: Normalization::MeanZero,
        }
    }
}

/// Termination state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Both certificate targets met at a checkpoint.
    Converged,
    /// Iteration budget exhausted.
    MaxIter,
}

/// One certificate checkpoint.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HistoryRow {
    pub iteration: usize,
    /// Primal value ℬ (may be `+∞` early on, before the iterate enters the
    /// cost domain).
    pub b: f64,
    /// Dual value 𝒜 at `(u, recover_alpha(u))`.
    pub a: f64,
    /// Clamped relative gap `max(𝒜+ℬ, 0)/(1+|ℬ|)`.
    pub gap: f64,
    /// Continuity residual `‖R(m,w)‖_{L²}`.
    pub feas: f64,
}

/// Converged (or best-effort) primal-dual state.
#[derive(Debug, Clone)]
pub struct SolutionBundle {
    pub primal: StaggeredField,
    pub dual: DualField,
    /// Recovered congestion multiplier on the midpoint lattice.
    pub alpha: Vec<f64>,
    pub history: Vec<HistoryRow>,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Optional initial state for warm starts (e.g. prolongation from a coarser
/// grid). Shapes must match the target grid; endpoint density slabs are
/// overwritten with the prescribed data regardless.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub m: Vec<f64>,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
}

/// Solve from the default deterministic initialization (`m` linear in time
/// between the endpoint data, `w = 0`, `u = 0`).
pub fn solve(problem: &ProblemSpec, grid: &GridSpec, cfg: &SolverConfig) -> Result<SolutionBundle> {
    solve_from(problem, grid, cfg, None)
}

/// Solve with an optional warm start. Deterministic: identical inputs give
/// bit-identical histories regardless of thread count.
pub fn solve_from(
    problem: &ProblemSpec,
    grid: &GridSpec,
    cfg: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<SolutionBundle> {
    let ct = CoeffTable::new(problem, grid)?;
    let lat = Lattice::new(grid);
    let m0 = make_density(&problem.m0, grid)?;
    let m_t = make_density(&problem.m_t, grid)?;

    if !(cfg.theta >= 0.0 && cfg.theta <= 1.0) {
        return Err(Error::Config(format!("theta must lie in [0, 1], got {}", cfg.theta)));
    }
    if cfg.check_every == 0 {
        return Err(Error::Config("check_every must be at least 1".into()));
    }
    if !(cfg.tol_gap > 0.0) || !(cfg.tol_feas > 0.0) {
        return Err(Error::Config("tolerances must be positive".into()));
    }

    let a_norm = crate::grid::op_norm(&lat)?;
    let k_norm_sq = 1.0 + a_norm * a_norm;
    let default_step = 0.95 / k_norm_sq.sqrt();
    let tau = cfg.tau.unwrap_or(default_step);
    let sigma = cfg.sigma.unwrap_or(default_step);
    if !(tau > 0.0) || !(sigma > 0.0) {
        return Err(Error::Config(format!("steps must be positive, got tau = {tau}, sigma = {sigma}")));
    }
    if tau * sigma * k_norm_sq > 1.0 + 1e-9 {
        return Err(Error::Config(format!(
            "step rule violated: tau*sigma*(1+|A|^2) = {} > 1",
            tau * sigma * k_norm_sq
        )));
    }

    let g = grid;
    let nc = lat.nc;
    let d = g.d;
    let nt = g.nt;
    let quad = g.quad_weight();
    // The iteration minimizes the unweighted cell sum Σ Φ (the quadrature
    // factor is a positive constant, so the minimizer is the same as ℬ_h's);
    // this normalization makes the converged multiplier u the dual potential
    // itself rather than a mesh-scaled copy.
    let gamma = 1.0 / sigma;

    // State.
    let mut m = vec![0.0; g.m_len()];
    let mut w = vec![0.0; g.w_len()];
    let mut u = vec![0.0; g.mid_len()];
    match warm {
        Some(ws) => {
            if ws.m.len() != g.m_len() || ws.w.len() != g.w_len() || ws.u.len() != g.mid_len() {
                return Err(Error::Config("warm start shapes do not match the grid".into()));
            }
            m.copy_from_slice(&ws.m);
            w.copy_from_slice(&ws.w);
            u.copy_from_slice(&ws.u);
        }
        None => {
            for k in 0..=nt {
                let t = k as f64 / nt as f64;
                let row = &mut m[k * nc..(k + 1) * nc];
                for i in 0..nc {
                    row[i] = (1.0 - t) * m0[i] + t * m_t[i];
                }
            }
        }
    }
    m[..nc].copy_from_slice(&m0);
    m[nt * nc..].copy_from_slice(&m_t);

    // Dual momentum p = (pmu, pv), initialized at the cost gradient of the
    // initial primal image where defined (exact for warm starts near the
    // saddle, harmless otherwise).
    let mut mu_buf = vec![0.0; g.mid_len()];
    let mut v_buf = vec![0.0; g.w_len()];
    lat.m_to_midpoints(&m, &mut mu_buf);
    lat.w_to_centers(&w, &mut v_buf);
    let mut pmu = vec![0.0; g.mid_len()];
    let mut pv = vec![0.0; g.w_len()];
    init_dual_momentum(&ct, nc, d, &mu_buf, &v_buf, &mut pmu, &mut pv);

    let mut m_bar = m.clone();
    let mut w_bar = w.clone();
    let mut m_old = m.clone();
    let mut w_old = w.clone();
    let mut r_mid = vec![0.0; g.mid_len()];
    let mut gm = vec![0.0; g.m_len()];
    let mut gw = vec![0.0; g.w_len()];
    let mut tm = vec![0.0; g.m_len()];
    let mut tw = vec![0.0; g.w_len()];
    let mut warm_mu: Vec<f64> = mu_buf.clone();

    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut iterations = cfg.max_iter;

    for it in 1..=cfg.max_iter {
        // Dual ascent on the continuity multiplier from the extrapolated
        // primal; the sign convention makes u the potential that *decreases*
        // along the flow, matching the analytic saddle u = −t of the uniform
        // instance.
        lat.continuity_apply(&m_bar, &w_bar, &mut r_mid);
        for (ui, ri) in u.iter_mut().zip(&r_mid) {
            *ui -= sigma * ri;
        }

        // Dual momentum step: Moreau through the per-cell prox.
        lat.m_to_midpoints(&m_bar, &mut mu_buf);
        lat.w_to_centers(&w_bar, &mut v_buf);
        prox_sweep(
            &ct, nc, d, sigma, gamma, &mu_buf, &v_buf, &mut pmu, &mut pv, &mut warm_mu,
        )?;

        // Primal descent: interior density nodes and all momenta.
        lat.continuity_adjoint(&u, &mut gm, &mut gw);
        lat.midpoints_to_m(&pmu, &mut tm);
        lat.centers_to_w(&pv, &mut tw);
        m_old.copy_from_slice(&m);
        w_old.copy_from_slice(&w);
        for j in nc..nt * nc {
            m[j] += tau * (gm[j] - tm[j]);
        }
        for j in 0..g.w_len() {
            w[j] += tau * (gw[j] - tw[j]);
        }
        let th = cfg.theta;
        for j in 0..g.m_len() {
            m_bar[j] = m[j] + th * (m[j] - m_old[j]);
        }
        for j in 0..g.w_len() {
            w_bar[j] = w[j] + th * (w[j] - w_old[j]);
        }

        if it % cfg.check_every == 0 {
            lat.continuity_apply(&m, &w, &mut r_mid);
            let feas = (quad * r_mid.iter().map(|x| x * x).sum::<f64>()).sqrt();
            let b = eval_b_parts(&ct, &lat, &m, &w);
            let alpha = recover_alpha(&ct, &lat, &u);
            let a_val = eval_a(&ct, &lat, &u, &alpha, &m0, &m_t);
            let gap = if b.is_finite() {
                ((a_val + b) / (1.0 + b.abs())).max(0.0)
            } else {
                f64::INFINITY
            };
            history.push(HistoryRow { iteration: it, b, a: a_val, gap, feas });
            if gap <= cfg.tol_gap && feas <= cfg.tol_feas {
                status = SolveStatus::Converged;
                iterations = it;
                break;
            }
        }
    }

    // Reporting normalization; all certificates are invariant under this.
    let alpha = recover_alpha(&ct, &lat, &u);
    match cfg.normalization {
        Normalization::MeanZero => {
            let mean = u.iter().sum::<f64>() / u.len() as f64;
            for ui in &mut u {
                *ui -= mean;
            }
        }
        Normalization::MinTerminalZero => {
            let (_, u_t) = endpoint_traces(&ct, &lat, &u, &alpha);
            let min = u_t.iter().cloned().fold(f64::INFINITY, f64::min);
            for ui in &mut u {
                *ui -= min;
            }
        }
    }

    Ok(SolutionBundle {
        primal: StaggeredField { grid: *g, m, w },
        dual: DualField { grid: *g, u },
        alpha,
        history,
        iterations,
        status,
    })
}

/// Initialize `p = ∇Φ(μ, v)` cellwise where the gradient exists, zero
/// elsewhere.
fn init_dual_momentum(
    ct: &CoeffTable,
    nc: usize,
    d: usize,
    mu: &[f64],
    v: &[f64],
    pmu: &mut [f64],
    pv: &mut [f64],
) {
    let (rc, q) = (ct.r_conj, ct.q);
    for k in 0..ct.grid.nt {
        for i in 0..nc {
            let j = k * nc + i;
            let m = mu[j];
            if m <= 0.0 {
                pmu[j] = ct.c[i];
                continue;
            }
            let mut v2 = 0.0;
            for a in 0..d {
                let vv = v[(k * d + a) * nc + i];
                v2 += vv * vv;
            }
            let vn = v2.sqrt();
            let rho = vn / m;
            pmu[j] = -(rc - 1.0) / rc * ct.b_conj[i] * rho.powf(rc)
                + ct.c[i]
                + ct.a[i] * m.powf(q - 1.0);
            let factor = if vn == 0.0 {
                0.0
            } else {
                ct.b_conj[i] * vn.powf(rc - 2.0) * m.powf(1.0 - rc)
            };
            for a in 0..d {
                let idx = (k * d + a) * nc + i;
                pv[idx] = factor * v[idx];
            }
        }
    }
}

/// One dual-momentum sweep: `p ← y − σ·prox_{Φ/σ}(y/σ)` with
/// `y = p + σ·(Tx̄)`, cell by cell (the Moreau identity for `prox_{σΦ*}`).
/// Writes are disjoint per time slab, so the parallel fan-out is bitwise
/// deterministic.
#[allow(clippy::too_many_arguments)]
fn prox_sweep(
    ct: &CoeffTable,
    nc: usize,
    d: usize,
    sigma: f64,
    gamma: f64,
    mu_bar: &[f64],
    v_bar: &[f64],
    pmu: &mut [f64],
    pv: &mut [f64],
    warm_mu: &mut [f64],
) -> Result<()> {
    let (rc, q) = (ct.r_conj, ct.q);
    let inv_sigma = 1.0 / sigma;
    pmu.par_chunks_mut(nc)
        .zip(pv.par_chunks_mut(d * nc))
        .zip(mu_bar.par_chunks(nc))
        .zip(v_bar.par_chunks(d * nc))
        .zip(warm_mu.par_chunks_mut(nc))
        .try_for_each(|((((pmu_k, pv_k), mub_k), vb_k), warm_k)| -> Result<()> {
            let mut yv = [0.0_f64; 2];
            for i in 0..nc {
                let ymu = pmu_k[i] + sigma * mub_k[i];
                let mut z2 = 0.0;
                for (a, slot) in yv.iter_mut().enumerate().take(d) {
                    let y = pv_k[a * nc + i] + sigma * vb_k[a * nc + i];
                    *slot = y;
                    let z = y * inv_sigma;
                    z2 += z * z;
                }
                let w_norm = z2.sqrt();
                let warm = warm_k[i];
                let point = prox_cost(&ProxQuery {
                    m_tilde: ymu * inv_sigma,
                    w_norm,
                    gamma,
                    b_conj: ct.b_conj[i],
                    c: ct.c[i],
                    a: ct.a[i],
                    r_conj: rc,
                    q,
                    warm_mu: if warm > 0.0 { Some(warm) } else { None },
                })?;
                warm_k[i] = point.mu;
                pmu_k[i] = ymu - sigma * point.mu;
                let scale = if w_norm > 0.0 { point.s / w_norm } else { 0.0 };
                for (a, y) in yv.iter().enumerate().take(d) {
                    pv_k[a * nc + i] = y - scale * y;
                }
            }
            Ok(())
        })
}

/// Discrete primal value `ℬ_h` of a staggered field.
///
/// Extended-real: negative interpolated density, or zero density carrying
/// momentum, yields `+∞`. A relative guard band of `1e−9` absorbs round-off
/// dust so that certified iterates are not spuriously rejected.
pub fn eval_b(ct: &CoeffTable, lat: &Lattice, field: &StaggeredField) -> f64 {
    eval_b_parts(ct, lat, &field.m, &field.w)
}

pub(crate) fn eval_b_parts(ct: &CoeffTable, lat: &Lattice, m: &[f64], w: &[f64]) -> f64 {
    let g = &lat.grid;
    assert_eq!(m.len(), g.m_len(), "density shape mismatch");
    assert_eq!(w.len(), g.w_len(), "momentum shape mismatch");
    let (nc, d) = (lat.nc, g.d);
    let mut mu = vec![0.0; g.mid_len()];
    let mut v = vec![0.0; g.w_len()];
    lat.m_to_midpoints(m, &mut mu);
    lat.w_to_centers(w, &mut v);

    let mu_scale = mu.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let v_scale = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let tol_mu = 1e-9 * (1.0 + mu_scale);
    let tol_v = 1e-9 * (1.0 + v_scale);

    let mut total = 0.0;
    for k in 0..g.nt {
        for i in 0..nc {
            let j = k * nc + i;
            let mut mij = mu[j];
            if mij < -tol_mu {
                return f64::INFINITY;
            }
            let mut v2 = 0.0;
            for a in 0..d {
                let vv = v[(k * d + a) * nc + i];
                v2 += vv * vv;
            }
            let mut vn = v2.sqrt();
            if mij <= tol_mu {
                if vn > tol_v {
                    return f64::INFINITY;
                }
                mij = 0.0;
                vn = 0.0;
            }
            total += model::kinetic_scalar(ct.b_conj[i], ct.c[i], ct.r_conj, mij, vn)
                + model::f_primitive_scalar(ct.a[i], ct.q, mij);
        }
    }
    g.quad_weight() * total
}

/// Smallest feasible congestion multiplier for a dual potential:
/// `α = max(0, −D_t u + H(x, ∇_h u))` on the midpoint lattice, with the
/// centered time difference (one-sided at the extreme midpoints) and the
/// centered spatial gradient.
pub fn recover_alpha(ct: &CoeffTable, lat: &Lattice, u: &[f64]) -> Vec<f64> {
    let g = &lat.grid;
    assert_eq!(u.len(), g.mid_len(), "dual shape mismatch");
    let (nc, d, nt) = (lat.nc, g.d, g.nt);
    let dt = g.dt();
    let mut grad = vec![0.0; g.w_len()];
    lat.centered_gradient(u, &mut grad);
    let mut alpha = vec![0.0; g.mid_len()];
    for k in 0..nt {
        for i in 0..nc {
            let j = k * nc + i;
            let dtu = if nt == 1 {
                0.0
            } else if k == 0 {
                (u[nc + i] - u[i]) / dt
            } else if k == nt - 1 {
                (u[j] - u[j - nc]) / dt
            } else {
                (u[j + nc] - u[j - nc]) / (2.0 * dt)
            };
            let mut g2 = 0.0;
            for a in 0..d {
                let gg = grad[(k * d + a) * nc + i];
                g2 += gg * gg;
            }
            let h = model::h_scalar(ct.b[i], ct.c[i], ct.r, g2.sqrt());
            alpha[j] = (h - dtu).max(0.0);
        }
    }
    alpha
}

/// Endpoint traces of the dual potential: the first/last midpoint slabs
/// extrapolated by half a step along the discrete Hamilton-Jacobi flux,
/// `u(0) = u[½] − (dt/2)(H(x,∇_h u) − α)[½]` and symmetrically at `T`. On
/// the analytic uniform saddle these are exact and make the duality pairing
/// telescope to zero.
pub fn endpoint_traces(
    ct: &CoeffTable,
    lat: &Lattice,
    u: &[f64],
    alpha: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let g = &lat.grid;
    assert_eq!(u.len(), g.mid_len(), "dual shape mismatch");
    assert_eq!(alpha.len(), g.mid_len(), "alpha shape mismatch");
    let (nc, d, nt) = (lat.nc, g.d, g.nt);
    let half_dt = 0.5 * g.dt();
    let mut grad = vec![0.0; g.w_len()];
    lat.centered_gradient(u, &mut grad);
    let flux = |k: usize, i: usize| -> f64 {
        let mut g2 = 0.0;
        for a in 0..d {
            let gg = grad[(k * d + a) * nc + i];
            g2 += gg * gg;
        }
        model::h_scalar(ct.b[i], ct.c[i], ct.r, g2.sqrt()) - alpha[k * nc + i]
    };
    let mut u0 = vec![0.0; nc];
    let mut u_t = vec![0.0; nc];
    for i in 0..nc {
        u0[i] = u[i] - half_dt * flux(0, i);
        u_t[i] = u[(nt - 1) * nc + i] + half_dt * flux(nt - 1, i);
    }
    (u0, u_t)
}

/// Discrete dual value
/// `𝒜_h = ∫∫ F*(x, α) + ∫ u(T)·m_T − ∫ u(0)·m₀` with the half-step endpoint
/// traces. Gauge invariant at unit endpoint masses.
pub fn eval_a(
    ct: &CoeffTable,
    lat: &Lattice,
    u: &[f64],
    alpha: &[f64],
    m0: &[f64],
    m_t: &[f64],
) -> f64 {
    let g = &lat.grid;
    let nc = lat.nc;
    assert_eq!(m0.len(), nc, "initial density shape mismatch");
    assert_eq!(m_t.len(), nc, "terminal density shape mismatch");
    let mut fstar = 0.0;
    for k in 0..g.nt {
        for i in 0..nc {
            fstar += model::f_star_scalar(ct.a_conj[i], ct.q_conj, alpha[k * nc + i]);
        }
    }
    let (u0, u_t) = endpoint_traces(ct, lat, u, alpha);
    let mut pairing = 0.0;
    for i in 0..nc {
        pairing += m_t[i] * u_t[i] - m0[i] * u0[i];
    }
    g.quad_weight() * fstar + g.cell_volume() * pairing
}
