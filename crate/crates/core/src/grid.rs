//! Staggered space-time grid on the unit torus.
//!
//! Densities `m` live on time nodes `t_k = k·dt` at cell centers; momenta `w`
//! live on time midpoints `t_{k+1/2}` at cell faces (one face per axis, the
//! positive side of each cell); the dual potential `u` and congestion
//! multiplier `α` live on time midpoints at cell centers.
//!
//! The discrete continuity residual at midpoint `k+1/2`, cell `i`, is
//!
//! ```text
//!   R[k,i] = (m[k+1,i] - m[k,i]) / dt + Σ_a (w[k,a,i] - w[k,a,i-e_a]) / h
//! ```
//!
//! with periodic wrap in `i ± e_a`. `continuity_adjoint` is the exact
//! transpose of this stencil, so `⟨R(m,w), u⟩ = ⟨(m,w), Rᵀu⟩` holds to
//! round-off; that exactness is what the duality-gap certificate rests on.

use crate::error::Error;
use crate::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Uniform grid descriptor: `n` cells per axis on the unit torus, `nt` time
/// steps on `[0, T]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Spatial dimension, 1 or 2.
    pub d: usize,
    /// Cells per axis.
    pub n: usize,
    /// Time steps.
    pub nt: usize,
    /// Time horizon.
    pub t_final: f64,
}

impl GridSpec {
    pub fn new(d: usize, n: usize, nt: usize, t_final: f64) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(Error::Grid(format!("d must be 1 or 2, got {d}")));
        }
        if n < 2 {
            return Err(Error::Grid(format!("need at least 2 cells per axis, got {n}")));
        }
        if nt < 1 {
            return Err(Error::Grid(format!("need at least 1 time step, got {nt}")));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::Grid(format!("t_final must be positive and finite, got {t_final}")));
        }
        Ok(GridSpec { d, n, nt, t_final })
    }

    /// Spatial mesh width `h = 1/n`.
    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Time step `dt = T/nt`.
    #[inline]
    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    /// Number of cells `n^d`.
    #[inline]
    pub fn cells(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Cell volume `h^d`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    /// Space-time quadrature weight `h^d·dt`.
    #[inline]
    pub fn quad_weight(&self) -> f64 {
        self.cell_volume() * self.dt()
    }

    /// Center coordinates of cell `i` (row-major: `i = iy·n + ix` in 2-D).
    pub fn cell_center(&self, i: usize) -> Vec<f64> {
        let h = self.h();
        match self.d {
            1 => vec![(i as f64 + 0.5) * h],
            _ => {
                let ix = i % self.n;
                let iy = i / self.n;
                vec![(ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h]
            }
        }
    }

    /// Node time `t_k = k·dt`, `k = 0..=nt`.
    #[inline]
    pub fn node_time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Midpoint time `t_{k+1/2}`, `k = 0..nt`.
    #[inline]
    pub fn midpoint_time(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt()
    }

    /// Length of the density array: `(nt+1)·cells`.
    #[inline]
    pub fn m_len(&self) -> usize {
        (self.nt + 1) * self.cells()
    }

    /// Length of the momentum array: `nt·d·cells`.
    #[inline]
    pub fn w_len(&self) -> usize {
        self.nt * self.d * self.cells()
    }

    /// Length of a midpoint scalar array (`u`, `α`, residuals): `nt·cells`.
    #[inline]
    pub fn mid_len(&self) -> usize {
        self.nt * self.cells()
    }
}

/// Primal pair `(m, w)` on the staggered grid, stored flat.
///
/// Layout: `m[k·nc + i]` for `k = 0..=nt`; `w[(k·d + a)·nc + i]` for
/// `k = 0..nt`, axis `a`, where `w[k,a,i]` sits on the positive-side face of
/// cell `i` along axis `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredField {
    pub grid: GridSpec,
    pub m: Vec<f64>,
    pub w: Vec<f64>,
}

impl StaggeredField {
    pub fn zeros(grid: GridSpec) -> Self {
        StaggeredField {
            grid,
            m: vec![0.0; grid.m_len()],
            w: vec![0.0; grid.w_len()],
        }
    }

    /// Density value at time node `k`, cell `i`.
    #[inline]
    pub fn m_at(&self, k: usize, i: usize) -> f64 {
        self.m[k * self.grid.cells() + i]
    }

    /// Momentum component at midpoint `k`, axis `a`, face of cell `i`.
    #[inline]
    pub fn w_at(&self, k: usize, a: usize, i: usize) -> f64 {
        self.w[(k * self.grid.d + a) * self.grid.cells() + i]
    }
}

/// Dual potential `u` on time midpoints at cell centers, stored flat as
/// `u[k·nc + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualField {
    pub grid: GridSpec,
    pub u: Vec<f64>,
}

impl DualField {
    pub fn zeros(grid: GridSpec) -> Self {
        DualField {
            grid,
            u: vec![0.0; grid.mid_len()],
        }
    }

    #[inline]
    pub fn at(&self, k: usize, i: usize) -> f64 {
        self.u[k * self.grid.cells() + i]
    }
}

/// Precomputed periodic neighbor tables plus grid constants; all stencil
/// kernels run off this.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub grid: GridSpec,
    pub nc: usize,
    /// `next[a][i]`: cell index of `i + e_a` (wrapped), for `a < d`.
    next: Vec<Vec<usize>>,
    /// `prev[a][i]`: cell index of `i - e_a` (wrapped).
    prev: Vec<Vec<usize>>,
}

impl Lattice {
    pub fn new(grid: &GridSpec) -> Self {
        let n = grid.n;
        let nc = grid.cells();
        let mut next = Vec::with_capacity(grid.d);
        let mut prev = Vec::with_capacity(grid.d);
        for a in 0..grid.d {
            let mut nx = vec![0usize; nc];
            let mut pv = vec![0usize; nc];
            for i in 0..nc {
                let (ix, iy) = (i % n, i / n);
                match a {
                    0 => {
                        nx[i] = iy * n + (ix + 1) % n;
                        pv[i] = iy * n + (ix + n - 1) % n;
                    }
                    _ => {
                        nx[i] = ((iy + 1) % n) * n + ix;
                        pv[i] = ((iy + n - 1) % n) * n + ix;
                    }
                }
            }
            next.push(nx);
            prev.push(pv);
        }
        Lattice {
            grid: *grid,
            nc,
            next,
            prev,
        }
    }

    #[inline]
    pub fn next_cell(&self, a: usize, i: usize) -> usize {
        self.next[a][i]
    }

    #[inline]
    pub fn prev_cell(&self, a: usize, i: usize) -> usize {
        self.prev[a][i]
    }

    /// Continuity residual `R(m, w)` into `out` (midpoint layout).
    pub fn continuity_apply(&self, m: &[f64], w: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        debug_assert_eq!(m.len(), g.m_len());
        debug_assert_eq!(w.len(), g.w_len());
        debug_assert_eq!(out.len(), g.mid_len());
        let (nc, d) = (self.nc, g.d);
        let inv_dt = 1.0 / g.dt();
        let inv_h = 1.0 / g.h();
        for k in 0..g.nt {
            let m0 = &m[k * nc..(k + 1) * nc];
            let m1 = &m[(k + 1) * nc..(k + 2) * nc];
            let out_k = &mut out[k * nc..(k + 1) * nc];
            for i in 0..nc {
                out_k[i] = (m1[i] - m0[i]) * inv_dt;
            }
            for a in 0..d {
                let wk = &w[(k * d + a) * nc..(k * d + a + 1) * nc];
                let prev = &self.prev[a];
                for i in 0..nc {
                    out_k[i] += (wk[i] - wk[prev[i]]) * inv_h;
                }
            }
        }
    }

    /// Exact transpose of [`Lattice::continuity_apply`]: writes `Rᵀu` into
    /// the density-shaped `gm` and momentum-shaped `gw`.
    pub fn continuity_adjoint(&self, u: &[f64], gm: &mut [f64], gw: &mut [f64]) {
        let g = &self.grid;
        debug_assert_eq!(u.len(), g.mid_len());
        debug_assert_eq!(gm.len(), g.m_len());
        debug_assert_eq!(gw.len(), g.w_len());
        let (nc, d) = (self.nc, g.d);
        let inv_dt = 1.0 / g.dt();
        let inv_h = 1.0 / g.h();
        // gm[k] = (u[k-1] - u[k]) / dt with u[-1] = u[nt] = 0.
        for k in 0..=g.nt {
            let gm_k = &mut gm[k * nc..(k + 1) * nc];
            match (k > 0, k < g.nt) {
                (false, true) => {
                    let u0 = &u[0..nc];
                    for i in 0..nc {
                        gm_k[i] = -u0[i] * inv_dt;
                    }
                }
                (true, true) => {
                    let (ua, ub) = (&u[(k - 1) * nc..k * nc], &u[k * nc..(k + 1) * nc]);
                    for i in 0..nc {
                        gm_k[i] = (ua[i] - ub[i]) * inv_dt;
                    }
                }
                (true, false) => {
                    let ua = &u[(k - 1) * nc..k * nc];
                    for i in 0..nc {
                        gm_k[i] = ua[i] * inv_dt;
                    }
                }
                (false, false) => unreachable!("nt >= 1"),
            }
        }
        // gw[k,a,i] = (u[k,i] - u[k,i+e_a]) / h.
        for k in 0..g.nt {
            let uk = &u[k * nc..(k + 1) * nc];
            for a in 0..d {
                let gw_k = &mut gw[(k * d + a) * nc..(k * d + a + 1) * nc];
                let next = &self.next[a];
                for i in 0..nc {
                    gw_k[i] = (uk[i] - uk[next[i]]) * inv_h;
                }
            }
        }
    }

    /// Node-to-midpoint time average: `μ[k,i] = (m[k,i] + m[k+1,i]) / 2`.
    pub fn m_to_midpoints(&self, m: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        debug_assert_eq!(m.len(), g.m_len());
        debug_assert_eq!(out.len(), g.mid_len());
        let nc = self.nc;
        for k in 0..g.nt {
            let m0 = &m[k * nc..(k + 1) * nc];
            let m1 = &m[(k + 1) * nc..(k + 2) * nc];
            let out_k = &mut out[k * nc..(k + 1) * nc];
            for i in 0..nc {
                out_k[i] = 0.5 * (m0[i] + m1[i]);
            }
        }
    }

    /// Face-to-center average per axis:
    /// `v[k,a,i] = (w[k,a,i] + w[k,a,i-e_a]) / 2`.
    pub fn w_to_centers(&self, w: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        debug_assert_eq!(w.len(), g.w_len());
        debug_assert_eq!(out.len(), g.w_len());
        let (nc, d) = (self.nc, g.d);
        for k in 0..g.nt {
            for a in 0..d {
                let wk = &w[(k * d + a) * nc..(k * d + a + 1) * nc];
                let out_k = &mut out[(k * d + a) * nc..(k * d + a + 1) * nc];
                let prev = &self.prev[a];
                for i in 0..nc {
                    out_k[i] = 0.5 * (wk[i] + wk[prev[i]]);
                }
            }
        }
    }

    /// Transpose of [`Lattice::m_to_midpoints`]: spreads midpoint data back
    /// to nodes, `gm[k] = (μ̂[k-1] + μ̂[k]) / 2` with `μ̂[-1] = μ̂[nt] = 0`.
    pub fn midpoints_to_m(&self, mu: &[f64], gm: &mut [f64]) {
        let g = &self.grid;
        debug_assert_eq!(mu.len(), g.mid_len());
        debug_assert_eq!(gm.len(), g.m_len());
        let nc = self.nc;
        for k in 0..=g.nt {
            let gm_k = &mut gm[k * nc..(k + 1) * nc];
            match (k > 0, k < g.nt) {
                (false, true) => {
                    let m0 = &mu[0..nc];
                    for i in 0..nc {
                        gm_k[i] = 0.5 * m0[i];
                    }
                }
                (true, true) => {
                    let (ma, mb) = (&mu[(k - 1) * nc..k * nc], &mu[k * nc..(k + 1) * nc]);
                    for i in 0..nc {
                        gm_k[i] = 0.5 * (ma[i] + mb[i]);
                    }
                }
                (true, false) => {
                    let ma = &mu[(k - 1) * nc..k * nc];
                    for i in 0..nc {
                        gm_k[i] = 0.5 * ma[i];
                    }
                }
                (false, false) => unreachable!("nt >= 1"),
            }
        }
    }

    /// Transpose of [`Lattice::w_to_centers`]:
    /// `gw[k,a,i] = (v̂[k,a,i] + v̂[k,a,i+e_a]) / 2`.
    pub fn centers_to_w(&self, v: &[f64], gw: &mut [f64]) {
        let g = &self.grid;
        debug_assert_eq!(v.len(), g.w_len());
        debug_assert_eq!(gw.len(), g.w_len());
        let (nc, d) = (self.nc, g.d);
        for k in 0..g.nt {
            for a in 0..d {
                let vk = &v[(k * d + a) * nc..(k * d + a + 1) * nc];
                let gw_k = &mut gw[(k * d + a) * nc..(k * d + a + 1) * nc];
                let next = &self.next[a];
                for i in 0..nc {
                    gw_k[i] = 0.5 * (vk[i] + vk[next[i]]);
                }
            }
        }
    }

    /// Centered spatial gradient of a midpoint scalar, per axis, at cell
    /// centers: `g[k,a,i] = (s[k,i+e_a] - s[k,i-e_a]) / (2h)`.
    pub fn centered_gradient(&self, s: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        debug_assert_eq!(s.len(), g.mid_len());
        debug_assert_eq!(out.len(), g.w_len());
        let (nc, d) = (self.nc, g.d);
        let inv_2h = 0.5 / g.h();
        for k in 0..g.nt {
            let sk = &s[k * nc..(k + 1) * nc];
            for a in 0..d {
                let out_k = &mut out[(k * d + a) * nc..(k * d + a + 1) * nc];
                let (next, prev) = (&self.next[a], &self.prev[a]);
                for i in 0..nc {
                    out_k[i] = (sk[next[i]] - sk[prev[i]]) * inv_2h;
                }
            }
        }
    }

    /// Forward face gradient of a midpoint scalar:
    /// `g[k,a,i] = (s[k,i+e_a] - s[k,i]) / h`, living on the same faces as `w`.
    pub fn face_gradient(&self, s: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        debug_assert_eq!(s.len(), g.mid_len());
        debug_assert_eq!(out.len(), g.w_len());
        let (nc, d) = (self.nc, g.d);
        let inv_h = 1.0 / g.h();
        for k in 0..g.nt {
            let sk = &s[k * nc..(k + 1) * nc];
            for a in 0..d {
                let out_k = &mut out[(k * d + a) * nc..(k * d + a + 1) * nc];
                let next = &self.next[a];
                for i in 0..nc {
                    out_k[i] = (sk[next[i]] - sk[i]) * inv_h;
                }
            }
        }
    }
}

/// Free-function form of the continuity stencil.
pub fn continuity_apply(lat: &Lattice, m: &[f64], w: &[f64], out: &mut [f64]) {
    lat.continuity_apply(m, w, out)
}

/// Free-function form of the continuity transpose.
pub fn continuity_adjoint(lat: &Lattice, u: &[f64], gm: &mut [f64], gw: &mut [f64]) {
    lat.continuity_adjoint(u, gm, gw)
}

/// Free-function form of the node-to-midpoint average.
pub fn m_on_midpoints(lat: &Lattice, m: &[f64], out: &mut [f64]) {
    lat.m_to_midpoints(m, out)
}

/// Space-time quadrature `h^d·dt·Σ` of a midpoint scalar array.
pub fn integrate(grid: &GridSpec, midpoint_vals: &[f64]) -> f64 {
    debug_assert_eq!(midpoint_vals.len(), grid.mid_len());
    grid.quad_weight() * midpoint_vals.iter().sum::<f64>()
}

/// Spatial quadrature `h^d·Σ` of a single-time cell array.
pub fn space_integral(grid: &GridSpec, cell_vals: &[f64]) -> f64 {
    debug_assert_eq!(cell_vals.len(), grid.cells());
    grid.cell_volume() * cell_vals.iter().sum::<f64>()
}

/// Operator norm `‖R‖` of the continuity stencil (largest singular value),
/// by power iteration on `R·Rᵀ` over midpoint vectors. Deterministic: the
/// start vector comes from a fixed-seed generator. Fails if the iteration
/// has not reached a 1e-6 relative increment within 10_000 sweeps.
pub fn op_norm(lat: &Lattice) -> Result<f64> {
    let g = &lat.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d66_706c_616e);
    let mut v: Vec<f64> = (0..g.mid_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut gm = vec![0.0; g.m_len()];
    let mut gw = vec![0.0; g.w_len()];
    let mut av = vec![0.0; g.mid_len()];
    let mut sigma_prev = 0.0_f64;
    for _ in 0..10_000 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::NoConvergence(
                "operator norm power iteration hit a zero vector".into(),
            ));
        }
        for x in &mut v {
            *x /= norm;
        }
        lat.continuity_adjoint(&v, &mut gm, &mut gw);
        lat.continuity_apply(&gm, &gw, &mut av);
        // Rayleigh quotient of R·Rᵀ at unit v is σ².
        let lambda = v.iter().zip(&av).map(|(a, b)| a * b).sum::<f64>();
        let sigma = lambda.max(0.0).sqrt();
        if (sigma - sigma_prev).abs() <= 1e-6 * sigma.max(1.0) {
            return Ok(sigma);
        }
        sigma_prev = sigma;
        v.copy_from_slice(&av);
    }
    Err(Error::NoConvergence(
        "operator norm power iteration did not settle in 10000 sweeps".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(3, 8, 4, 1.0).is_err());
        assert!(GridSpec::new(1, 1, 4, 1.0).is_err());
        assert!(GridSpec::new(1, 8, 0, 1.0).is_err());
        assert!(GridSpec::new(1, 8, 4, 0.0).is_err());
        let g = GridSpec::new(2, 8, 4, 2.0).unwrap();
        assert_eq!(g.cells(), 64);
        assert_eq!(g.w_len(), 4 * 2 * 64);
        assert!((g.dt() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn neighbor_tables_wrap() {
        let g = GridSpec::new(2, 4, 1, 1.0).unwrap();
        let lat = Lattice::new(&g);
        // cell (3, 2) = 2*4+3 = 11: +x wraps to (0,2)=8, +y to (3,3)=15.
        assert_eq!(lat.next_cell(0, 11), 8);
        assert_eq!(lat.prev_cell(0, 8), 11);
        assert_eq!(lat.next_cell(1, 11), 15);
        assert_eq!(lat.next_cell(1, 15), 3);
    }

    #[test]
    fn constant_fields_are_conserved() {
        let g = GridSpec::new(2, 6, 3, 1.0).unwrap();
        let lat = Lattice::new(&g);
        let m = vec![1.0; g.m_len()];
        let w = vec![0.25; g.w_len()];
        let mut r = vec![0.0; g.mid_len()];
        lat.continuity_apply(&m, &w, &mut r);
        let max = r.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        assert!(max <= 1e-12, "constant (m, w) must be divergence free, got {max}");
    }

    #[test]
    fn operator_norm_within_analytic_bounds() {
        let g = GridSpec::new(1, 8, 5, 1.0).unwrap();
        let lat = Lattice::new(&g);
        let sigma = op_norm(&lat).unwrap();
        let bound = ((2.0 / g.dt()).powi(2) + (2.0 / g.h()).powi(2)).sqrt();
        assert!(sigma <= bound * (1.0 + 1e-6), "sigma = {sigma} > bound = {bound}");
        assert!(sigma >= 2.0 / g.dt() * 0.5, "sigma = {sigma} suspiciously small");
    }
}
