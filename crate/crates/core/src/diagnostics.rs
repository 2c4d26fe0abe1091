//! Certificates and regularity diagnostics for converged bundles.
//!
//! The weak-solution certificates check the optimality system satisfied by
//! a primal-dual pair: the duality gap, the energy identity, the
//! Hamilton-Jacobi inequality, and the pointwise optimality relations
//! `w = −m·D_ξH(x, ∇u)` and `α = f(x, m)` on the support of `m`. The
//! regularity diagnostics compute discrete Sobolev seminorms of `m^{q/2}`
//! and `j₁(∇u)` in space and interior time, an empirical Hölder statistic
//! of `u`, and boundedness-under-refinement and endpoint-stability tables.

use crate::error::Error;
use crate::grid::{GridSpec, Lattice};
use crate::model::{self, make_density, CoeffTable, DensityPreset, Exponents, ProblemSpec};
use crate::solver::{
    self, eval_a, eval_b, recover_alpha, SolutionBundle, SolverConfig, WarmStart,
};
use crate::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Diagnostic parameters; `None` fields pick data-dependent defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Support-mask threshold; default `1e-6·max(m)`.
    pub eps_mask: Option<f64>,
    /// Interior window for time seminorms; default `T/8`.
    pub tau_interior: Option<f64>,
    /// Endpoint perturbation schedule for the stability experiment.
    pub eps_list: Vec<f64>,
    /// Sample pairs for the Hölder statistic.
    pub holder_samples: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            eps_mask: None,
            tau_interior: None,
            eps_list: vec![0.2, 0.1, 0.05],
            holder_samples: 4000,
        }
    }
}

/// All certificates and seminorms of one bundle.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    /// Primal value ℬ.
    pub b: f64,
    /// Dual value 𝒜.
    pub a: f64,
    /// Clamped relative duality gap.
    pub gap: f64,
    /// Continuity residual (space-time L²).
    pub feas: f64,
    /// Energy-identity residual, relative to `1+|ℬ|`.
    pub energy_identity: f64,
    /// L¹ Hamilton-Jacobi violation per unit time.
    pub hj_violation: f64,
    /// Masked relative momentum optimality residual.
    pub opt_rel_w: f64,
    /// Masked relative congestion optimality residual.
    pub opt_rel_alpha: f64,
    pub seminorm_space_m: f64,
    pub seminorm_space_u: f64,
    pub seminorm_time_m: f64,
    pub seminorm_time_u: f64,
    /// Empirical Hölder statistic of `u`.
    pub holder: f64,
    /// Mask threshold actually used.
    pub eps_mask: f64,
    /// Interior window actually used.
    pub tau_interior: f64,
}

/// One row of the endpoint-stability table.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub eps: f64,
    pub b: f64,
    /// `L^q` norm of the interpolated density.
    pub lq_norm: f64,
    /// Weak pairings `∫∫ φ_j·m` against the fixed test family.
    pub pairings: Vec<f64>,
    pub gap: f64,
    pub feas: f64,
    pub converged: bool,
}

/// One row of the refinement table.
#[derive(Debug, Clone, Serialize)]
pub struct RefinementRow {
    pub n: usize,
    pub nt: usize,
    pub iterations: usize,
    pub converged: bool,
    pub report: DiagnosticsReport,
}

/// Assemble the full report for a bundle. Quantities are recomputed from the
/// fields (not read from the history), so this also serves as an
/// independent re-check of stored solutions.
pub fn diagnose(
    ct: &CoeffTable,
    lat: &Lattice,
    bundle: &SolutionBundle,
    cfg: &DiagnosticsConfig,
) -> Result<DiagnosticsReport> {
    let g = &lat.grid;
    let nc = lat.nc;
    let m = &bundle.primal.m;
    let m0 = &m[..nc];
    let m_t = &m[g.nt * nc..];
    let b = eval_b(ct, lat, &bundle.primal);
    let alpha = recover_alpha(ct, lat, &bundle.dual.u);
    let a = eval_a(ct, lat, &bundle.dual.u, &alpha, m0, m_t);
    let mut r_mid = vec![0.0; g.mid_len()];
    lat.continuity_apply(m, &bundle.primal.w, &mut r_mid);
    let feas = (g.quad_weight() * r_mid.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let gap = if b.is_finite() {
        ((a + b) / (1.0 + b.abs())).max(0.0)
    } else {
        f64::INFINITY
    };

    let max_m = m.iter().fold(0.0_f64, |acc, x| acc.max(*x));
    let eps_mask = cfg.eps_mask.unwrap_or(1e-6 * max_m);
    let tau_interior = cfg.tau_interior.unwrap_or(g.t_final / 8.0);
    if !(tau_interior > 0.0 && tau_interior < 0.5 * g.t_final) {
        return Err(Error::Config(format!(
            "tau_interior must lie in (0, T/2), got {tau_interior}"
        )));
    }

    let (opt_rel_w, opt_rel_alpha) = optimality_relations(ct, lat, bundle, eps_mask);
    let (s_m, s_u) = space_seminorms(ct, lat, bundle);
    let (t_m, t_u) = time_seminorms(ct, lat, bundle, tau_interior)?;
    let ex = Exponents::derive(ct.r, ct.q, g.d)?;
    Ok(DiagnosticsReport {
        b,
        a,
        gap,
        feas,
        energy_identity: energy_identity_residual(ct, lat, bundle),
        hj_violation: hj_violation(ct, lat, bundle),
        opt_rel_w,
        opt_rel_alpha,
        seminorm_space_m: s_m,
        seminorm_space_u: s_u,
        seminorm_time_m: t_m,
        seminorm_time_u: t_u,
        holder: holder_estimate(g, &bundle.dual.u, &ex, cfg.holder_samples),
        eps_mask,
        tau_interior,
    })
}

/// Residual of the weak-solution energy identity,
///
/// ```text
///   | ∫∫ m·[f(x,m) + H*(x, DξH(x,∇_h u))] + ∫ m_T·u(T) − ∫ m₀·u(0) |
///   -----------------------------------------------------------------
///                              1 + |ℬ|
/// ```
///
/// with `m` on midpoints, the centered gradient, and the same half-step
/// endpoint traces as the dual value. Exactly zero on the analytic uniform
/// saddle; gauge invariant at unit endpoint masses.
pub fn energy_identity_residual(ct: &CoeffTable, lat: &Lattice, bundle: &SolutionBundle) -> f64 {
    let g = &lat.grid;
    let (nc, d) = (lat.nc, g.d);
    let u = &bundle.dual.u;
    let mut mu = vec![0.0; g.mid_len()];
    lat.m_to_midpoints(&bundle.primal.m, &mut mu);
    let mut grad = vec![0.0; g.w_len()];
    lat.centered_gradient(u, &mut grad);

    // For the power family H*(x, DξH(x,g)) = b|g|^r/r' + c exactly.
    let mut bulk = 0.0;
    for k in 0..g.nt {
        for i in 0..nc {
            let j = k * nc + i;
            let mut g2 = 0.0;
            for a in 0..d {
                let gg = grad[(k * d + a) * nc + i];
                g2 += gg * gg;
            }
            let gn = g2.sqrt();
            let h_star = ct.b[i] * gn.powf(ct.r) / ct.r_conj + ct.c[i];
            let f_m = model::f_scalar(ct.a[i], ct.q, mu[j].max(0.0));
            bulk += mu[j] * (f_m + h_star);
        }
    }
    let alpha = recover_alpha(ct, lat, u);
    let (u0, u_t) = solver::endpoint_traces(ct, lat, u, &alpha);
    let m0 = &bundle.primal.m[..nc];
    let m_t = &bundle.primal.m[g.nt * nc..];
    let mut pairing = 0.0;
    for i in 0..nc {
        pairing += m_t[i] * u_t[i] - m0[i] * u0[i];
    }
    let raw = g.quad_weight() * bulk + g.cell_volume() * pairing;
    let b = eval_b(ct, lat, &bundle.primal);
    raw.abs() / (1.0 + if b.is_finite() { b.abs() } else { 0.0 })
}

/// L¹ norm (per unit time) of the positive part of the Hamilton-Jacobi
/// defect `−D_t u + H(x, ∇_h u) − f(x, m)` over the midpoint lattice.
pub fn hj_violation(ct: &CoeffTable, lat: &Lattice, bundle: &SolutionBundle) -> f64 {
    let g = &lat.grid;
    let nc = lat.nc;
    let alpha = recover_alpha(ct, lat, &bundle.dual.u);
    let mut mu = vec![0.0; g.mid_len()];
    lat.m_to_midpoints(&bundle.primal.m, &mut mu);
    // α = max(0, −D_t u + H) and f ≥ 0 make max(0, α − f) identical to
    // max(0, −D_t u + H − f).
    let mut total = 0.0;
    for j in 0..g.mid_len() {
        let f_m = model::f_scalar(ct.a[j % nc], ct.q, mu[j].max(0.0));
        total += (alpha[j] - f_m).max(0.0);
    }
    g.quad_weight() * total / g.t_final
}

/// Masked optimality residuals of Theorem-style saddle relations:
/// `res_w` for `w + m·DξH(x, ∇_h u) = 0` (centered momenta) and `res_alpha`
/// for `α = f(x, m)`, both as L¹ norms over `{m > eps_mask}` normalized by
/// `1 +` the L¹ norm of the reference quantity on the same mask.
pub fn optimality_relations(
    ct: &CoeffTable,
    lat: &Lattice,
    bundle: &SolutionBundle,
    eps_mask: f64,
) -> (f64, f64) {
    let g = &lat.grid;
    let (nc, d) = (lat.nc, g.d);
    let u = &bundle.dual.u;
    let mut mu = vec![0.0; g.mid_len()];
    lat.m_to_midpoints(&bundle.primal.m, &mut mu);
    let mut v = vec![0.0; g.w_len()];
    lat.w_to_centers(&bundle.primal.w, &mut v);
    let mut grad = vec![0.0; g.w_len()];
    lat.centered_gradient(u, &mut grad);
    let alpha = recover_alpha(ct, lat, u);

    let mut num_w = 0.0;
    let mut den_w = 0.0;
    let mut num_a = 0.0;
    let mut den_a = 0.0;
    for k in 0..g.nt {
        for i in 0..nc {
            let j = k * nc + i;
            if mu[j] <= eps_mask {
                continue;
            }
            let mut g2 = 0.0;
            for a in 0..d {
                let gg = grad[(k * d + a) * nc + i];
                g2 += gg * gg;
            }
            let gn = g2.sqrt();
            let factor = model::grad_xi_h_factor(ct.b[i], ct.r, gn);
            let mut res2 = 0.0;
            let mut v2 = 0.0;
            for a in 0..d {
                let idx = (k * d + a) * nc + i;
                let res = v[idx] + mu[j] * factor * grad[idx];
                res2 += res * res;
                v2 += v[idx] * v[idx];
            }
            num_w += res2.sqrt();
            den_w += v2.sqrt();
            let f_m = model::f_scalar(ct.a[i], ct.q, mu[j]);
            num_a += (alpha[j] - f_m).abs();
            den_a += f_m.abs();
        }
    }
    let q = g.quad_weight();
    (
        q * num_w / (1.0 + q * den_w),
        q * num_a / (1.0 + q * den_a),
    )
}

/// Space seminorms: `s_m = (2/q)·‖∇_h(m^{q/2})‖_{L²}` over node times
/// (trapezoidal in time) and `s_u = ‖√m̄·∇_h(j₁(∇_h u))‖_{L²}` over
/// midpoints, with forward face differences.
pub fn space_seminorms(ct: &CoeffTable, lat: &Lattice, bundle: &SolutionBundle) -> (f64, f64) {
    let g = &lat.grid;
    let (nc, d, nt) = (lat.nc, g.d, g.nt);
    let h = g.h();
    let q_exp = ct.q;

    // s_m over node slabs.
    let mut sum_m = 0.0;
    for k in 0..=nt {
        let time_weight = if k == 0 || k == nt { 0.5 } else { 1.0 };
        let slab = &bundle.primal.m[k * nc..(k + 1) * nc];
        for i in 0..nc {
            let si = slab[i].max(0.0).powf(0.5 * q_exp);
            for a in 0..d {
                let sn = slab[lat.next_cell(a, i)].max(0.0).powf(0.5 * q_exp);
                let diff = (sn - si) / h;
                sum_m += time_weight * diff * diff;
            }
        }
    }
    let s_m = (2.0 / q_exp) * (g.quad_weight() * sum_m).sqrt();

    // s_u over midpoint slabs.
    let jay = j1_field(ct, lat, &bundle.dual.u);
    let mut mu = vec![0.0; g.mid_len()];
    lat.m_to_midpoints(&bundle.primal.m, &mut mu);
    let mut sum_u = 0.0;
    for k in 0..nt {
        for i in 0..nc {
            let weight = mu[k * nc + i].max(0.0);
            if weight == 0.0 {
                continue;
            }
            let mut frob = 0.0;
            for comp in 0..d {
                let ji = jay[(k * d + comp) * nc + i];
                for axis in 0..d {
                    let jn = jay[(k * d + comp) * nc + lat.next_cell(axis, i)];
                    let diff = (jn - ji) / h;
                    frob += diff * diff;
                }
            }
            sum_u += weight * frob;
        }
    }
    let s_u = (g.quad_weight() * sum_u).sqrt();
    (s_m, s_u)
}

/// Interior time seminorms: discrete L² norms of `D_t(m^{q/2})` and
/// `√m·D_t(j₁(∇_h u))` restricted to times in `[tau_interior, T−tau_interior]`.
pub fn time_seminorms(
    ct: &CoeffTable,
    lat: &Lattice,
    bundle: &SolutionBundle,
    tau_interior: f64,
) -> Result<(f64, f64)> {
    let g = &lat.grid;
    if !(tau_interior > 0.0 && tau_interior < 0.5 * g.t_final) {
        return Err(Error::Config(format!(
            "tau_interior must lie in (0, T/2), got {tau_interior}"
        )));
    }
    let (nc, d, nt) = (lat.nc, g.d, g.nt);
    let dt = g.dt();
    let q_exp = ct.q;
    let lo = tau_interior;
    let hi = g.t_final - tau_interior;

    // D_t(m^{q/2}) lives at midpoints.
    let mut sum_m = 0.0;
    for k in 0..nt {
        let t = g.midpoint_time(k);
        if t < lo || t > hi {
            continue;
        }
        let s0 = &bundle.primal.m[k * nc..(k + 1) * nc];
        let s1 = &bundle.primal.m[(k + 1) * nc..(k + 2) * nc];
        for i in 0..nc {
            let diff = (s1[i].max(0.0).powf(0.5 * q_exp) - s0[i].max(0.0).powf(0.5 * q_exp)) / dt;
            sum_m += diff * diff;
        }
    }
    let t_m = (g.quad_weight() * sum_m).sqrt();

    // D_t(j₁(∇u)) lives at interior nodes; weighted by the node density.
    let jay = j1_field(ct, lat, &bundle.dual.u);
    let mut sum_u = 0.0;
    for k in 0..nt.saturating_sub(1) {
        // Difference between midpoint slabs k and k+1 sits at node k+1.
        let t = g.node_time(k + 1);
        if t < lo || t > hi {
            continue;
        }
        let m_node = &bundle.primal.m[(k + 1) * nc..(k + 2) * nc];
        for i in 0..nc {
            let mut d2 = 0.0;
            for comp in 0..d {
                let diff =
                    (jay[((k + 1) * d + comp) * nc + i] - jay[(k * d + comp) * nc + i]) / dt;
                d2 += diff * diff;
            }
            sum_u += m_node[i].max(0.0) * d2;
        }
    }
    let t_u = (g.quad_weight() * sum_u).sqrt();
    Ok((t_m, t_u))
}

/// `j₁(∇_h u)` on the midpoint lattice (centered gradient), component-wise
/// layout identical to a momentum field.
fn j1_field(ct: &CoeffTable, lat: &Lattice, u: &[f64]) -> Vec<f64> {
    let g = &lat.grid;
    let (nc, d) = (lat.nc, g.d);
    let r = ct.r;
    let mut grad = vec![0.0; g.w_len()];
    lat.centered_gradient(u, &mut grad);
    let mut out = vec![0.0; g.w_len()];
    for k in 0..g.nt {
        for i in 0..nc {
            let mut g2 = 0.0;
            for a in 0..d {
                let gg = grad[(k * d + a) * nc + i];
                g2 += gg * gg;
            }
            let gn = g2.sqrt();
            let factor = if gn == 0.0 { 0.0 } else { gn.powf(0.5 * r - 1.0) };
            for a in 0..d {
                let idx = (k * d + a) * nc + i;
                out[idx] = factor * grad[idx];
            }
        }
    }
    out
}

/// Empirical Hölder statistic: sup over sampled pairs `(t₁,x), (t₂,y)` with
/// `t₁ < t₂ ≤ T − dt` of
/// `[u(t₁,x) − u(t₂,y)] / [|x−y|^{r'}·(t₂−t₁)^{1−r'} + (t₂−t₁)^ν + 1]`.
/// Deterministic sampling from a fixed seed; reported as a
/// refinement-stability statistic, not a thresholded certificate.
pub fn holder_estimate(grid: &GridSpec, u: &[f64], ex: &Exponents, samples: usize) -> f64 {
    assert_eq!(u.len(), grid.mid_len(), "dual shape mismatch");
    let nc = grid.cells();
    let nt = grid.nt;
    if nt < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x686f_6c64_6572);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..samples.max(1) {
        let k1 = rng.random_range(0..nt - 1);
        let k2 = rng.random_range(k1 + 1..nt);
        let i1 = rng.random_range(0..nc);
        let i2 = rng.random_range(0..nc);
        let t1 = grid.midpoint_time(k1);
        let t2 = grid.midpoint_time(k2);
        let x1 = grid.cell_center(i1);
        let x2 = grid.cell_center(i2);
        let dist = model::torus_dist_sq(&x1, &x2).sqrt();
        let dt_gap = t2 - t1;
        let denom = dist.powf(ex.r_conj) * dt_gap.powf(1.0 - ex.r_conj) + dt_gap.powf(ex.nu) + 1.0;
        let val = (u[k1 * nc + i1] - u[k2 * nc + i2]) / denom;
        best = best.max(val);
    }
    best
}

/// Test family for the weak pairings of the stability experiment:
/// low-frequency trigonometric space-time products.
fn test_fields(d: usize, t_final: f64) -> Vec<Box<dyn Fn(f64, &[f64]) -> f64>> {
    use std::f64::consts::PI;
    let two_pi = 2.0 * PI;
    let mut fields: Vec<Box<dyn Fn(f64, &[f64]) -> f64>> = Vec::new();
    fields.push(Box::new(move |_t, x| (two_pi * x[0]).cos()));
    fields.push(Box::new(move |t, x| {
        (two_pi * x[0]).sin() * (2.0 * t / t_final - 1.0)
    }));
    if d == 1 {
        fields.push(Box::new(move |t, x| {
            (2.0 * two_pi * x[0]).cos() * (PI * t / t_final).cos()
        }));
        fields.push(Box::new(move |_t, x| (2.0 * two_pi * x[0]).sin()));
    } else {
        fields.push(Box::new(move |t, x| {
            (two_pi * (x[0] + x[1])).cos() * (PI * t / t_final).cos()
        }));
        fields.push(Box::new(move |_t, x| (two_pi * x[1]).sin()));
    }
    fields
}

/// Weak pairings `∫∫ φ_j·m` of the interpolated density against the fixed
/// test family.
fn weak_pairings(lat: &Lattice, bundle: &SolutionBundle) -> Vec<f64> {
    let g = &lat.grid;
    let nc = lat.nc;
    let mut mu = vec![0.0; g.mid_len()];
    lat.m_to_midpoints(&bundle.primal.m, &mut mu);
    let fields = test_fields(g.d, g.t_final);
    let mut out = Vec::with_capacity(fields.len());
    for phi in &fields {
        let mut acc = 0.0;
        for k in 0..g.nt {
            let t = g.midpoint_time(k);
            for i in 0..nc {
                acc += phi(t, &g.cell_center(i)) * mu[k * nc + i];
            }
        }
        out.push(g.quad_weight() * acc);
    }
    out
}

fn stability_row(
    lat: &Lattice,
    ct: &CoeffTable,
    eps: f64,
    bundle: &SolutionBundle,
) -> StabilityRow {
    let g = &lat.grid;
    let mut mu = vec![0.0; g.mid_len()];
    lat.m_to_midpoints(&bundle.primal.m, &mut mu);
    let lq = (g.quad_weight()
        * mu.iter().map(|m| m.max(0.0).powf(ct.q)).sum::<f64>())
    .powf(1.0 / ct.q);
    let b = eval_b(ct, lat, &bundle.primal);
    let alpha = recover_alpha(ct, lat, &bundle.dual.u);
    let nc = lat.nc;
    let a = eval_a(
        ct,
        lat,
        &bundle.dual.u,
        &alpha,
        &bundle.primal.m[..nc],
        &bundle.primal.m[g.nt * nc..],
    );
    let mut r_mid = vec![0.0; g.mid_len()];
    lat.continuity_apply(&bundle.primal.m, &bundle.primal.w, &mut r_mid);
    let feas = (g.quad_weight() * r_mid.iter().map(|x| x * x).sum::<f64>()).sqrt();
    StabilityRow {
        eps,
        b,
        lq_norm: lq,
        pairings: weak_pairings(lat, bundle),
        gap: if b.is_finite() { ((a + b) / (1.0 + b.abs())).max(0.0) } else { f64::INFINITY },
        feas,
        converged: bundle.status == solver::SolveStatus::Converged,
    }
}

/// Endpoint-stability experiment: solve the base instance, then re-solve
/// with both endpoint densities mixed toward uniform,
/// `m^ε = (1−ε)·m + ε·1`, for each ε in the schedule. The first row is the
/// base (ε = 0); pairings are expected to approach their base values as
/// ε decreases.
pub fn stability_experiment(
    problem: &ProblemSpec,
    grid: &GridSpec,
    cfg: &SolverConfig,
    dcfg: &DiagnosticsConfig,
) -> Result<Vec<StabilityRow>> {
    for &eps in &dcfg.eps_list {
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::Config(format!(
                "perturbation sizes must lie in [0, 1), got {eps}"
            )));
        }
    }
    let ct = CoeffTable::new(problem, grid)?;
    let lat = Lattice::new(grid);
    let base = solver::solve(problem, grid, cfg)?;
    let mut rows = vec![stability_row(&lat, &ct, 0.0, &base)];

    let m0 = make_density(&problem.m0, grid)?;
    let m_t = make_density(&problem.m_t, grid)?;
    for &eps in &dcfg.eps_list {
        let mix = |m: &[f64]| -> DensityPreset {
            DensityPreset::Values {
                values: m.iter().map(|v| (1.0 - eps) * v + eps).collect(),
            }
        };
        let mut perturbed = problem.clone();
        perturbed.m0 = mix(&m0);
        perturbed.m_t = mix(&m_t);
        let bundle = solver::solve(&perturbed, grid, cfg)?;
        rows.push(stability_row(&lat, &ct, eps, &bundle));
    }
    Ok(rows)
}

/// Piecewise-constant (space) and linear (time) prolongation of a coarse
/// bundle to a finer grid, used to warm-start refinement ladders.
fn prolong(bundle: &SolutionBundle, fine: &GridSpec) -> WarmStart {
    let coarse = &bundle.primal.grid;
    let (cn, cnt, cnc) = (coarse.n, coarse.nt, coarse.cells());
    let (fnt, fnc) = (fine.nt, fine.cells());
    let d = fine.d;

    let coarse_cell = |i: usize| -> usize {
        match d {
            1 => i * cn / fine.n,
            _ => {
                let ix = (i % fine.n) * cn / fine.n;
                let iy = (i / fine.n) * cn / fine.n;
                iy * cn + ix
            }
        }
    };

    let mut m = vec![0.0; fine.m_len()];
    for k in 0..=fnt {
        // Position of the fine node in coarse node coordinates.
        let tc = k as f64 * cnt as f64 / fnt as f64;
        let k0 = (tc.floor() as usize).min(cnt);
        let k1 = (k0 + 1).min(cnt);
        let frac = tc - k0 as f64;
        for i in 0..fnc {
            let ci = coarse_cell(i);
            m[k * fnc + i] = (1.0 - frac) * bundle.primal.m[k0 * cnc + ci]
                + frac * bundle.primal.m[k1 * cnc + ci];
        }
    }
    let coarse_mid = |k: usize| -> usize { (k * cnt / fnt).min(cnt - 1) };
    let mut w = vec![0.0; fine.w_len()];
    for k in 0..fnt {
        let kc = coarse_mid(k);
        for a in 0..d {
            for i in 0..fnc {
                w[(k * d + a) * fnc + i] = bundle.primal.w[(kc * d + a) * cnc + coarse_cell(i)];
            }
        }
    }
    let mut u = vec![0.0; fine.mid_len()];
    for k in 0..fnt {
        let kc = coarse_mid(k);
        for i in 0..fnc {
            u[k * fnc + i] = bundle.dual.u[kc * cnc + coarse_cell(i)];
        }
    }
    WarmStart { m, w, u }
}

/// Refinement study: solve the problem on each `(n, nt)` level in order,
/// warm-starting every level from the previous one, and tabulate the full
/// report per level.
pub fn refinement_study(
    problem: &ProblemSpec,
    cfg: &SolverConfig,
    dcfg: &DiagnosticsConfig,
    levels: &[(usize, usize)],
) -> Result<Vec<RefinementRow>> {
    if levels.is_empty() {
        return Err(Error::Config("refinement needs at least one level".into()));
    }
    let mut rows = Vec::with_capacity(levels.len());
    let mut prev: Option<SolutionBundle> = None;
    for &(n, nt) in levels {
        let grid = GridSpec::new(problem.d, n, nt, problem.t_final)?;
        let warm = prev.as_ref().map(|b| prolong(b, &grid));
        let bundle = solver::solve_from(problem, &grid, cfg, warm.as_ref())?;
        let ct = CoeffTable::new(problem, &grid)?;
        let lat = Lattice::new(&grid);
        let report = diagnose(&ct, &lat, &bundle, dcfg)?;
        rows.push(RefinementRow {
            n,
            nt,
            iterations: bundle.iterations,
            converged: bundle.status == solver::SolveStatus::Converged,
            report,
        });
        prev = Some(bundle);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DualField, StaggeredField};
    use crate::model::{CouplingSpec, HamiltonianSpec, SpatialCoeff};
    use crate::solver::SolveStatus;

    fn uniform_problem() -> ProblemSpec {
        ProblemSpec {
            d: 1,
            t_final: 1.0,
            hamiltonian: HamiltonianSpec {
                r: 2.0,
                b: SpatialCoeff::Constant { value: 1.0 },
                c: SpatialCoeff::Constant { value: 0.0 },
            },
            coupling: CouplingSpec {
                q: 2.0,
                a: SpatialCoeff::Constant { value: 1.0 },
            },
            m0: DensityPreset::Uniform,
            m_t: DensityPreset::Uniform,
        }
    }

    fn analytic_bundle(grid: GridSpec) -> SolutionBundle {
        let nc = grid.cells();
        let mut u = vec![0.0; grid.mid_len()];
        for k in 0..grid.nt {
            for i in 0..nc {
                u[k * nc + i] = -grid.midpoint_time(k);
            }
        }
        SolutionBundle {
            primal: StaggeredField {
                grid,
                m: vec![1.0; grid.m_len()],
                w: vec![0.0; grid.w_len()],
            },
            dual: DualField { grid, u: u.clone() },
            alpha: vec![1.0; grid.mid_len()],
            history: Vec::new(),
            iterations: 0,
            status: SolveStatus::Converged,
        }
    }

    #[test]
    fn analytic_saddle_has_zero_residuals() {
        let problem = uniform_problem();
        let grid = GridSpec::new(1, 12, 10, 1.0).unwrap();
        let ct = CoeffTable::new(&problem, &grid).unwrap();
        let lat = Lattice::new(&grid);
        let bundle = analytic_bundle(grid);
        let report = diagnose(&ct, &lat, &bundle, &DiagnosticsConfig::default()).unwrap();
        assert!(report.gap <= 1e-12, "gap = {}", report.gap);
        assert!(report.feas <= 1e-12);
        assert!(report.energy_identity <= 1e-12, "energy = {}", report.energy_identity);
        assert!(report.hj_violation <= 1e-12);
        assert!(report.opt_rel_w <= 1e-12);
        assert!(report.opt_rel_alpha <= 1e-12);
        assert_eq!(report.seminorm_space_m, 0.0);
        assert_eq!(report.seminorm_space_u, 0.0);
        assert_eq!(report.seminorm_time_m, 0.0);
        assert_eq!(report.seminorm_time_u, 0.0);
        assert!(report.holder <= 1.0 + 1e-12);
    }

    #[test]
    fn gauge_shift_changes_no_certificate() {
        let problem = uniform_problem();
        let grid = GridSpec::new(1, 12, 10, 1.0).unwrap();
        let ct = CoeffTable::new(&problem, &grid).unwrap();
        let lat = Lattice::new(&grid);
        let bundle = analytic_bundle(grid);
        let mut shifted = bundle.clone();
        for ui in &mut shifted.dual.u {
            *ui += 3.25;
        }
        let r1 = energy_identity_residual(&ct, &lat, &bundle);
        let r2 = energy_identity_residual(&ct, &lat, &shifted);
        assert!((r1 - r2).abs() <= 1e-12);
        let a1 = hj_violation(&ct, &lat, &bundle);
        let a2 = hj_violation(&ct, &lat, &shifted);
        assert!((a1 - a2).abs() <= 1e-12);
    }

    #[test]
    fn empty_mask_gives_vacuous_optimality() {
        let problem = uniform_problem();
        let grid = GridSpec::new(1, 8, 6, 1.0).unwrap();
        let ct = CoeffTable::new(&problem, &grid).unwrap();
        let lat = Lattice::new(&grid);
        let bundle = analytic_bundle(grid);
        let (rw, ra) = optimality_relations(&ct, &lat, &bundle, 10.0);
        assert_eq!((rw, ra), (0.0, 0.0));
    }

    #[test]
    fn interior_window_is_validated() {
        let problem = uniform_problem();
        let grid = GridSpec::new(1, 8, 6, 1.0).unwrap();
        let ct = CoeffTable::new(&problem, &grid).unwrap();
        let lat = Lattice::new(&grid);
        let bundle = analytic_bundle(grid);
        assert!(time_seminorms(&ct, &lat, &bundle, 0.6).is_err());
        assert!(time_seminorms(&ct, &lat, &bundle, 0.125).is_ok());
    }

    #[test]
    fn stability_rejects_bad_perturbations() {
        let problem = uniform_problem();
        let grid = GridSpec::new(1, 8, 6, 1.0).unwrap();
        let cfg = SolverConfig { max_iter: 10, ..SolverConfig::default() };
        let dcfg = DiagnosticsConfig { eps_list: vec![1.5], ..DiagnosticsConfig::default() };
        assert!(stability_experiment(&problem, &grid, &cfg, &dcfg).is_err());
    }
}
