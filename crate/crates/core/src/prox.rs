//! Proximal map of the per-cell transport cost.
//!
//! Each space-time cell contributes
//!
//! ```text
//!   Φ(μ, v) = B·|v|^{r'}·μ^{1-r'}/r' + c·μ + a·μ^q/q     (μ > 0)
//!   Φ(0, 0) = 0,   Φ(μ, v) = +∞ otherwise
//! ```
//!
//! with `B = b^{1-r'}`. `prox_cost` evaluates `argmin Φ + ‖·-(m̃,w̃)‖²/(2γ)`.
//!
//! The momentum block is radial: the minimizer satisfies `v = s·w̃/|w̃|` with
//! `s ∈ [0, |w̃|]`, so the whole map reduces to scalars. Writing `ρ = s/μ`
//! (the optimal speed), the inner stationarity becomes
//!
//! ```text
//!   μ·ρ + γB·ρ^{r'-1} = W,     W = |w̃|,
//! ```
//!
//! which has a unique root in `[0, C]`, `C = (W/(γB))^{1/(r'-1)}`, for every
//! `μ ≥ 0`. The outer problem is convex in `μ` with derivative
//!
//! ```text
//!   φ'(μ) = -(r'-1)/r'·B·ρ(μ)^{r'} + c + a·μ^{q-1} + (μ - m̃)/γ,
//! ```
//!
//! nondecreasing, finite down to `μ = 0` (where `ρ(0) = C`). When
//! `φ'(0⁺) ≥ 0` the minimizer is the apex `(0, 0)`; otherwise the root lies
//! in `(0, m̃ + γ·(r'-1)/r'·B·C^{r'}]`, a rigorous bracket. The speed
//! parametrization keeps every intermediate quantity bounded, so no branch
//! can overflow even at `μ → 0`.

use crate::error::Error;
use crate::Result;

/// One proximal query: the point to project, the step, and the cell data.
#[derive(Debug, Clone, Copy)]
pub struct ProxQuery {
    /// Density component of the proximal point.
    pub m_tilde: f64,
    /// Euclidean norm of the momentum component, `W = |w̃| ≥ 0`.
    pub w_norm: f64,
    /// Proximal step `γ > 0`.
    pub gamma: f64,
    /// Conjugate mobility weight `B = b^{1-r'} > 0`.
    pub b_conj: f64,
    /// Potential offset `c ≥ 0`.
    pub c: f64,
    /// Congestion weight `a > 0`.
    pub a: f64,
    /// Dual kinetic exponent `r' > 1`.
    pub r_conj: f64,
    /// Congestion exponent `q > 1`.
    pub q: f64,
    /// Warm start for the density root; `None` to start cold.
    pub warm_mu: Option<f64>,
}

/// Proximal point: optimal density and optimal momentum norm. The momentum
/// direction is that of `w̃` (and `s = 0` whenever `W = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxPoint {
    pub mu: f64,
    pub s: f64,
}

/// Objective `Φ(μ, s·ŵ) + ((μ-m̃)² + (s-W)²)/(2γ)` of a query at a scalar
/// candidate. Extended-real; used by the solver's certificates and by tests.
pub fn prox_objective(q: &ProxQuery, mu: f64, s: f64) -> f64 {
    let kin = crate::model::kinetic_scalar(q.b_conj, q.c, q.r_conj, mu, s.abs());
    if kin.is_infinite() {
        return f64::INFINITY;
    }
    let coupling = crate::model::f_primitive_scalar(q.a, q.q, mu);
    let dm = mu - q.m_tilde;
    let ds = s - q.w_norm;
    kin + coupling + (dm * dm + ds * ds) / (2.0 * q.gamma)
}

/// Root of a nondecreasing function on `[lo, hi]` by the Illinois variant of
/// regula falsi. Requires `f(lo) ≤ 0 ≤ f(hi)`; returns the abscissa once the
/// bracket width drops below `tol·(1 + |lo| + |hi|)` or an exact zero is hit.
pub fn solve_scalar_monotone<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::ScalarSolve(format!("invalid bracket [{lo}, {hi}]")));
    }
    let mut a = lo;
    let mut b = hi;
    let mut fa = f(a);
    let mut fb = f(b);
    if fa > 0.0 || fb < 0.0 {
        return Err(Error::ScalarSolve(format!(
            "bracket does not straddle a root: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    // +1: last replaced b, -1: last replaced a, 0: none yet.
    let mut last_side = 0i8;
    for _ in 0..200 {
        let scale = 1.0 + a.abs() + b.abs();
        if b - a <= tol * scale {
            return Ok(0.5 * (a + b));
        }
        let mut x = (a * fb - b * fa) / (fb - fa);
        if !x.is_finite() || x <= a || x >= b {
            x = 0.5 * (a + b);
        }
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
            fa = fx;
            if last_side == -1 {
                fb *= 0.5;
            }
            last_side = -1;
        } else {
            b = x;
            fb = fx;
            if last_side == 1 {
                fa *= 0.5;
            }
            last_side = 1;
        }
    }
    Err(Error::NoConvergence(format!(
        "scalar root bracket stalled at [{a}, {b}]"
    )))
}

/// `μ^{q-1}` with fast paths for the common exponents.
#[inline]
fn pow_qm1(mu: f64, q: f64) -> f64 {
    if q == 2.0 {
        mu
    } else if q == 1.5 {
        mu.sqrt()
    } else {
        mu.powf(q - 1.0)
    }
}

/// `μ^{q-2}`, used only inside Newton curvature terms.
#[inline]
fn pow_qm2(mu: f64, q: f64) -> f64 {
    if q == 2.0 {
        1.0
    } else if q == 1.5 {
        1.0 / mu.sqrt()
    } else {
        mu.powf(q - 2.0)
    }
}

/// Optimal speed `ρ(μ)`: unique root of `μ·ρ + γB·ρ^{r'-1} = W` in `[0, C]`.
fn speed(mu: f64, w: f64, gb: f64, r_conj: f64, cap: f64) -> Result<f64> {
    if w == 0.0 {
        return Ok(0.0);
    }
    if r_conj == 2.0 {
        return Ok(w / (mu + gb));
    }
    let e = r_conj - 1.0;
    solve_scalar_monotone(|rho| mu * rho + gb * rho.powf(e) - w, 0.0, cap, 1e-15)
}

/// Proximal map of the per-cell cost. See the module docs for the scalar
/// reduction; the result satisfies the joint stationarity system to about
/// fourteen digits.
pub fn prox_cost(q: &ProxQuery) -> Result<ProxPoint> {
    if !(q.gamma > 0.0) || !q.gamma.is_finite() {
        return Err(Error::ScalarSolve(format!("prox step must be positive, got {}", q.gamma)));
    }
    if !(q.b_conj > 0.0) || !(q.a > 0.0) || q.c < 0.0 {
        return Err(Error::ScalarSolve(
            "prox coefficients must satisfy B > 0, a > 0, c >= 0".into(),
        ));
    }
    if !(q.r_conj > 1.0) || !(q.q > 1.0) {
        return Err(Error::ScalarSolve(
            "prox exponents must satisfy r' > 1, q > 1".into(),
        ));
    }
    if q.w_norm < 0.0 || !q.w_norm.is_finite() || !q.m_tilde.is_finite() {
        return Err(Error::ScalarSolve(format!(
            "prox point must be finite with W >= 0, got m = {}, W = {}",
            q.m_tilde, q.w_norm
        )));
    }

    let w = q.w_norm;
    let gamma = q.gamma;
    let gb = gamma * q.b_conj;
    let rc = q.r_conj;
    // Speed cap C and the kinetic slope -(r'-1)/r'·B·C^{r'} = -(r'-1)/r'·C·W/γ
    // at μ = 0⁺.
    let cap = if w == 0.0 { 0.0 } else { (w / gb).powf(1.0 / (rc - 1.0)) };
    let kin0 = (rc - 1.0) / rc * cap * w / gamma;
    let phi_zero = q.c - q.m_tilde / gamma - kin0;
    if phi_zero >= 0.0 {
        return Ok(ProxPoint { mu: 0.0, s: 0.0 });
    }
    // φ'(hi) ≥ 0 because the kinetic slope never exceeds kin0.
    let hi = q.m_tilde + gamma * kin0;

    let mu = if rc == 2.0 {
        newton_r2(q, gb, hi, phi_zero)?
    } else {
        let kin_coef = (rc - 1.0) / rc * q.b_conj;
        let phi = |mu: f64| -> f64 {
            if mu <= 0.0 {
                return phi_zero;
            }
            let rho = speed(mu, w, gb, rc, cap).unwrap_or(cap);
            -kin_coef * rho.powf(rc) + q.c + q.a * pow_qm1(mu, q.q) + (mu - q.m_tilde) / gamma
        };
        solve_scalar_monotone(phi, 0.0, hi, 1e-13)?
    };

    let rho = speed(mu, w, gb, rc, cap)?;
    Ok(ProxPoint { mu, s: rho * mu })
}

/// Safeguarded Newton on φ' for the quadratic kinetic case `r' = 2`, where
/// the speed is `ρ = W/(μ + γB)` in closed form.
fn newton_r2(q: &ProxQuery, gb: f64, hi: f64, phi_zero: f64) -> Result<f64> {
    let bw2 = q.b_conj * q.w_norm * q.w_norm;
    let inv_gamma = 1.0 / q.gamma;
    let phi = |mu: f64| -> f64 {
        if mu <= 0.0 {
            return phi_zero;
        }
        let t = mu + gb;
        -0.5 * bw2 / (t * t) + q.c + q.a * pow_qm1(mu, q.q) + (mu - q.m_tilde) * inv_gamma
    };
    let dphi = |mu: f64| -> f64 {
        let t = mu + gb;
        bw2 / (t * t * t) + q.a * (q.q - 1.0) * pow_qm2(mu, q.q) + inv_gamma
    };

    let mut lo = 0.0_f64;
    let mut hi = hi;
    let mut mu = match q.warm_mu {
        Some(m) if m.is_finite() && m > lo && m < hi => m,
        _ => 0.5 * hi,
    };
    for _ in 0..100 {
        let f = phi(mu);
        if f == 0.0 {
            return Ok(mu);
        }
        if f < 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let df = dphi(mu);
        let mut next = mu - f / df;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - mu).abs() <= 1e-14 * (1.0 + mu.abs()) {
            return Ok(next);
        }
        mu = next;
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            return Ok(0.5 * (lo + hi));
        }
    }
    // Newton stalled (can happen for exotic data); the bracket is still valid.
    solve_scalar_monotone(phi, lo, hi, 1e-13)
}
