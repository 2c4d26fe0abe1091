//! Microbenchmarks for the hot kernels (scalar prox, continuity stencil and
//! its adjoint, objective evaluation) plus one small end-to-end solve.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use mfplan_core::prox::prox_cost;
use mfplan_core::solver::{self, eval_b};
use mfplan_core::{
    CoeffTable, CouplingSpec, DensityPreset, GridSpec, HamiltonianSpec, Lattice, ProblemSpec,
    ProxQuery, SolverConfig, SpatialCoeff, StaggeredField,
};
use std::hint::black_box;

fn gaussian_problem(d: usize) -> ProblemSpec {
    let center = |x: f64| vec![x; d];
    ProblemSpec {
        d,
        t_final: 1.0,
        hamiltonian: HamiltonianSpec {
            r: 2.0,
            b: SpatialCoeff::Constant { value: 1.0 },
            c: SpatialCoeff::Constant { value: 0.0 },
        },
        coupling: CouplingSpec {
            q: if d == 1 { 2.0 } else { 1.5 },
            a: SpatialCoeff::Constant { value: 1.0 },
        },
        m0: DensityPreset::Gaussian {
            center: center(0.4),
            width: 0.3,
        },
        m_t: DensityPreset::Gaussian {
            center: center(0.6),
            width: 0.3,
        },
    }
}

/// Deterministic, cheap pseudo-random stream for filling fields.
fn fill(values: &mut [f64], mut seed: u64, lo: f64, hi: f64) {
    for v in values.iter_mut() {
        // SplitMix64 step.
        seed = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = seed;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        *v = lo + (hi - lo) * (z >> 11) as f64 / (1u64 << 53) as f64;
    }
}

fn bench_prox(c: &mut Criterion) {
    let mut group = c.benchmark_group("prox_cost");
    for &(label, r_conj) in &[("quadratic", 2.0), ("general", 2.5)] {
        let mut queries = Vec::with_capacity(512);
        let mut raw = vec![0.0; 512 * 3];
        fill(&mut raw, 0x5eed, 0.0, 1.0);
        for i in 0..512 {
            queries.push(ProxQuery {
                m_tilde: 3.0 * raw[3 * i] - 0.5,
                w_norm: 2.0 * raw[3 * i + 1],
                gamma: 0.05 + raw[3 * i + 2],
                b_conj: 1.0,
                c: 0.0,
                a: 1.0,
                r_conj,
                q: 2.0,
                warm_mu: None,
            });
        }
        group.bench_function(label, |b| {
            b.iter(|| {
                let mut acc = 0.0;
                for q in &queries {
                    let p = prox_cost(black_box(q)).unwrap();
                    acc += p.mu + p.s;
                }
                acc
            })
        });
    }
    group.finish();
}

fn bench_stencils(c: &mut Criterion) {
    let grid = GridSpec::new(2, 64, 32, 1.0).unwrap();
    let lat = Lattice::new(&grid);
    let mut m = vec![0.0; grid.m_len()];
    let mut w = vec![0.0; grid.w_len()];
    let mut u = vec![0.0; grid.mid_len()];
    fill(&mut m, 1, 0.5, 1.5);
    fill(&mut w, 2, -0.5, 0.5);
    fill(&mut u, 3, -1.0, 1.0);

    let mut out = vec![0.0; grid.mid_len()];
    c.bench_function("continuity_apply_64x64x32", |b| {
        b.iter(|| {
            lat.continuity_apply(black_box(&m), black_box(&w), &mut out);
            out[0]
        })
    });

    let mut gm = vec![0.0; grid.m_len()];
    let mut gw = vec![0.0; grid.w_len()];
    c.bench_function("continuity_adjoint_64x64x32", |b| {
        b.iter(|| {
            lat.continuity_adjoint(black_box(&u), &mut gm, &mut gw);
            gm[0] + gw[0]
        })
    });

    let problem = gaussian_problem(2);
    let ct = CoeffTable::new(&problem, &grid).unwrap();
    let field = StaggeredField {
        grid,
        m: m.clone(),
        w: w.clone(),
    };
    c.bench_function("eval_b_64x64x32", |b| {
        b.iter(|| eval_b(black_box(&ct), &lat, black_box(&field)))
    });
}

fn bench_solve(c: &mut Criterion) {
    let problem = gaussian_problem(1);
    let grid = GridSpec::new(1, 32, 32, 1.0).unwrap();
    let cfg = SolverConfig {
        max_iter: 100_000,
        tol_gap: 1e-3,
        tol_feas: 1e-4,
        check_every: 100,
        ..SolverConfig::default()
    };
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("gaussian_1d_32x32", |b| {
        b.iter_batched(
            || (),
            |()| solver::solve(&problem, &grid, &cfg).unwrap().iterations,
            BatchSize::PerIteration,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_prox, bench_stencils, bench_solve);
criterion_main!(benches);
