//! Local solver for the non-convex general problem and its ℓ1-regularized
//! (sparsity-promoting) variant.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::descent::{minimize, Descent};
use super::heuristics::uniform_allocation;
use super::{AllocationProblem, AllocationResult, Diagnostics, Extras, SolverOptions};
use crate::error::{Error, Result};
use crate::h2;
use crate::par::map_indices;

/// Named starting points: `m̲`, the uniform heuristic, `m̄` projected onto
/// the budget, and two seeded random feasible points.
pub(crate) fn starting_points(problem: &AllocationProblem) -> Result<Vec<(String, DVector<f64>)>> {
    let n = problem.n();
    let mut starts = vec![
        ("no_add".to_string(), problem.lower.clone()),
        ("uniform".to_string(), uniform_allocation(problem)?),
        ("max_cap".to_string(), problem.project(&problem.upper)?),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(problem.options.seed);
    for k in 0..2 {
        let raw = DVector::from_fn(n, |i, _| {
            let (lo, hi) = (problem.lower[i], problem.upper[i]);
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        });
        starts.push((format!("random_{k}"), problem.project(&raw)?));
    }
    Ok(starts)
}

/// `m_i - m̲_i > 1e-6 m̲_i`.
pub fn support(m: &DVector<f64>, lower: &DVector<f64>) -> Vec<usize> {
    (0..m.len())
        .filter(|&i| m[i] - lower[i] > 1e-6 * lower[i])
        .collect()
}

fn oracle(
    problem: &AllocationProblem,
    gamma: f64,
) -> impl Fn(&DVector<f64>) -> Result<(f64, DVector<f64>)> + '_ {
    move |m| {
        let (f, mut g) = h2::value_and_gradient(&problem.grid, &problem.spec, m)?;
        if gamma == 0.0 {
            return Ok((f, g));
        }
        g.add_scalar_mut(gamma);
        Ok((f + gamma * (m - &problem.lower).sum(), g))
    }
}

/// Strict improvement beyond roundoff; ties keep the lowest start index.
pub(crate) fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate < incumbent - 1e-12 * incumbent.abs()
}

fn run_starts(
    problem: &AllocationProblem,
    gamma: f64,
    starts: &[(String, DVector<f64>)],
) -> Result<(usize, Descent)> {
    let options: &SolverOptions = &problem.options;
    let runs = map_indices(starts.len(), |k| {
        minimize(problem, options, &starts[k].1, oracle(problem, gamma))
    });
    let mut best: Option<(usize, Descent)> = None;
    for (k, run) in runs.into_iter().enumerate() {
        let run = run?;
        if best
            .as_ref()
            .is_none_or(|(_, b)| improves(run.value, b.value))
        {
            best = Some((k, run));
        }
    }
    best.ok_or_else(|| Error::invalid("starts", "no starting point"))
}

fn finish(
    problem: &AllocationProblem,
    gamma: f64,
    starts: &[(String, DVector<f64>)],
    best: usize,
    run: Descent,
) -> Result<AllocationResult> {
    let diagnostics = Diagnostics {
        iterations: run.iterations,
        projected_gradient_norm: run.projected_gradient_norm,
        first_order_residual: run.residual,
        converged: run.converged,
        starts: starts.len(),
        best_start: Some(starts[best].0.clone()),
    };
    let extras = if gamma > 0.0 || matches!(problem.variant, super::Variant::Sparse { .. }) {
        Extras::Sparse {
            gamma,
            support: support(&run.m, &problem.lower),
            penalty: gamma * (&run.m - &problem.lower).sum(),
        }
    } else {
        Extras::None
    };
    AllocationResult::build(problem, run.m, run.value, extras, diagnostics)
}

/// Best of the multi-start projected-gradient runs on `‖G‖₂²`.
pub fn solve_general(problem: &AllocationProblem) -> Result<AllocationResult> {
    problem.validate()?;
    let starts = starting_points(problem)?;
    let (best, run) = run_starts(problem, 0.0, &starts)?;
    finish(problem, 0.0, &starts, best, run)
}

/// Minimizes `‖G‖₂² + γ Σ(m_i - m̲_i)`.
pub fn solve_sparse(problem: &AllocationProblem, gamma: f64) -> Result<AllocationResult> {
    problem.validate()?;
    if !(gamma >= 0.0) {
        return Err(Error::invalid("problem.gamma", "must be >= 0"));
    }
    let starts = starting_points(problem)?;
    let (best, run) = run_starts(problem, gamma, &starts)?;
    finish(problem, gamma, &starts, best, run)
}

#[derive(Debug, Clone, Serialize)]
pub struct SparsityPoint {
    pub gamma: f64,
    pub m: Vec<f64>,
    pub support: Vec<usize>,
    pub support_size: usize,
    /// Unregularized `‖G‖₂²` at the regularized optimum.
    pub h2_norm_sq: f64,
    /// `100·(f(m_γ) - f(m₀)) / (f(m̲) - f(m₀))`: 0 at the unregularized
    /// optimum, 100 with no added inertia.
    pub relative_loss_percent: f64,
    pub converged: bool,
}

/// Regularization path over `gammas` (solved in ascending order, each run
/// warm-started from the previous optimum and from `m̲`).
pub fn sparsity_path(problem: &AllocationProblem, gammas: &[f64]) -> Result<Vec<SparsityPoint>> {
    problem.validate()?;
    if let Some(g) = gammas.iter().find(|g| !(**g >= 0.0)) {
        return Err(Error::invalid("gamma_grid", format!("{g} is not >= 0")));
    }
    let mut sorted = gammas.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));

    let reference = solve_general(problem)?;
    let f_opt = reference.h2_norm_sq;
    let f_floor = h2::h2_value(&problem.grid, &problem.spec, &problem.lower)?;
    let span = f_floor - f_opt;

    let mut points = Vec::with_capacity(sorted.len());
    let mut warm = reference.m_star.clone();
    for gamma in sorted {
        let starts = vec![
            ("warm".to_string(), warm.clone()),
            ("no_add".to_string(), problem.lower.clone()),
        ];
        let (_, run) = run_starts(problem, gamma, &starts)?;
        let f = h2::h2_value(&problem.grid, &problem.spec, &run.m)?;
        let loss = if span > 0.0 {
            100.0 * ((f - f_opt) / span).max(0.0)
        } else {
            0.0
        };
        let sup = support(&run.m, &problem.lower);
        points.push(SparsityPoint {
            gamma,
            m: run.m.iter().copied().collect(),
            support_size: sup.len(),
            support: sup,
            h2_norm_sq: f,
            relative_loss_percent: loss,
            converged: run.converged,
        });
        warm = run.m;
    }
    Ok(points)
}
