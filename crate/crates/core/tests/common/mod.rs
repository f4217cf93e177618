#![allow(dead_code)]

use inertia_core::allocator::{AllocationProblem, Variant};
use inertia_core::grid::{Bus, Edge, FrequencyPenalty, GridModel, PerformanceSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random spanning tree plus a few chords, weights in [0.5, 2].
pub fn random_grid(rng: &mut ChaCha8Rng, n: usize) -> GridModel {
    let buses = (0..n)
        .map(|i| {
            let floor = rng.random_range(0.5..2.0);
            Bus::new(i, rng.random_range(0.5..2.0), floor, 4.0 * floor)
        })
        .collect();
    let mut lines = Vec::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        lines.push(Edge::new(j, i, rng.random_range(0.5..2.0)));
    }
    for _ in 0..n / 2 {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            lines.push(Edge::new(a, b, rng.random_range(0.5..2.0)));
        }
    }
    GridModel::new(buses, lines).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// `S = D`, `N = 0`: primary control effort.
pub fn primary_spec(grid: &GridModel, w: DVector<f64>) -> PerformanceSpec {
    let n = grid.n();
    PerformanceSpec::new(
        DMatrix::zeros(n, n),
        FrequencyPenalty::Diagonal(grid.damping()),
        w,
    )
    .unwrap()
}

pub fn laplacian_spec(grid: &GridModel, s: DVector<f64>, w: DVector<f64>) -> PerformanceSpec {
    PerformanceSpec::new(grid.laplacian().clone(), FrequencyPenalty::Diagonal(s), w).unwrap()
}

/// Two buses joined by `a12`, damping `d`, floors `floor`, caps `cap`.
pub fn two_area(d: [f64; 2], a12: f64, floor: f64, cap: f64) -> GridModel {
    GridModel::new(
        vec![Bus::new(1, d[0], floor, cap), Bus::new(2, d[1], floor, cap)],
        vec![Edge::new(1, 2, a12)],
    )
    .unwrap()
}

pub fn problem(
    grid: GridModel,
    spec: PerformanceSpec,
    budget: f64,
    variant: Variant,
) -> AllocationProblem {
    AllocationProblem::new(grid, spec, budget, variant).unwrap()
}

/// Buses with explicit floors and caps on a path.
pub fn path_with_bounds(d: &[f64], lower: &[f64], upper: &[f64]) -> GridModel {
    let n = d.len();
    let buses = (0..n)
        .map(|i| Bus::new(i, d[i], lower[i], upper[i]))
        .collect();
    let lines = (1..n).map(|i| Edge::new(i - 1, i, 1.0)).collect();
    GridModel::new(buses, lines).unwrap()
}
