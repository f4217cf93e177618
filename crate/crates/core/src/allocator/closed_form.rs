//! Convex special cases solved in closed form by water-filling.
//!
//! * Primary-effort penalty (`S = D`, `N = 0`): `‖G‖₂² = ½ Σ w_i/m_i`, so
//!   unclamped buses satisfy `m_i ∝ √w_i`.
//! * Uniform disturbance-damping ratio `w_i/d_i ≡ λ`:
//!   `‖G‖₂² = λ/2 · (Σ s_i/m_i + trace(N L†))`, so `m_i ∝ √s_i`.
//! * Robust primary effort: the worst case is `max_i 1/(2m_i)`, minimized by
//!   raising the lowest buses first (valley filling).

use nalgebra::DVector;

use super::projection::water_fill;
use super::{AllocationProblem, AllocationResult, Diagnostics, Extras};
use crate::error::{Error, Result};
use crate::grid::FrequencyPenalty;
use crate::h2::trace_penalty_offset;

pub fn solve_primary_effort(problem: &AllocationProblem) -> Result<AllocationResult> {
    problem.validate()?;
    let w = &problem.spec.disturbance;
    if w.iter().all(|&wi| wi == 0.0) {
        let m = problem.lower.clone();
        return AllocationResult::build(
            problem,
            m,
            0.0,
            Extras::ClosedForm {
                level: None,
                degenerate: true,
            },
            Diagnostics::closed_form(),
        );
    }
    let fill = water_fill(
        &w.map(f64::sqrt),
        &problem.lower,
        &problem.upper,
        problem.budget,
    )?;
    let objective = 0.5 * w.iter().zip(fill.m.iter()).map(|(w, m)| w / m).sum::<f64>();
    AllocationResult::build(
        problem,
        fill.m,
        objective,
        Extras::ClosedForm {
            level: fill.level,
            degenerate: false,
        },
        Diagnostics::closed_form(),
    )
}

/// Uniform ratio `λ = w_i/d_i`, or the bus pair with the widest gap.
pub fn uniform_ratio(problem: &AllocationProblem) -> Result<f64> {
    let d = problem.grid.damping();
    let ratios: Vec<f64> = problem
        .spec
        .disturbance
        .iter()
        .zip(d.iter())
        .map(|(w, d)| w / d)
        .collect();
    let (mut lo, mut hi) = (0, 0);
    for (i, &r) in ratios.iter().enumerate() {
        if r < ratios[lo] {
            lo = i;
        }
        if r > ratios[hi] {
            hi = i;
        }
    }
    if ratios[hi] - ratios[lo] > 1e-9 * ratios[hi].abs() {
        let ids = problem.grid.retained_ids();
        return Err(Error::RatioNotUniform {
            first: ids[hi],
            first_ratio: ratios[hi],
            second: ids[lo],
            second_ratio: ratios[lo],
        });
    }
    Ok(ratios[hi])
}

pub fn solve_uniform_ratio(problem: &AllocationProblem) -> Result<AllocationResult> {
    problem.validate()?;
    let lambda = uniform_ratio(problem)?;
    let offset = trace_penalty_offset(&problem.spec.angle_penalty, problem.grid.laplacian())?;
    let objective_at = |m: &DVector<f64>| {
        let s = problem.spec.freq_penalty.weights(m);
        0.5 * lambda * (s.iter().zip(m.iter()).map(|(s, m)| s / m).sum::<f64>() + offset)
    };
    let degenerate = |m: DVector<f64>| {
        let objective = objective_at(&m);
        AllocationResult::build(
            problem,
            m,
            objective,
            Extras::ClosedForm {
                level: None,
                degenerate: true,
            },
            Diagnostics::closed_form(),
        )
    };
    let s = match &problem.spec.freq_penalty {
        // Σ s_i/m_i = c·n does not depend on the allocation
        FrequencyPenalty::KineticEnergy(_) => return degenerate(problem.lower.clone()),
        FrequencyPenalty::Diagonal(s) => s.clone(),
    };
    if lambda == 0.0 {
        return degenerate(problem.lower.clone());
    }
    let fill = water_fill(
        &s.map(f64::sqrt),
        &problem.lower,
        &problem.upper,
        problem.budget,
    )?;
    let objective = objective_at(&fill.m);
    AllocationResult::build(
        problem,
        fill.m,
        objective,
        Extras::ClosedForm {
            level: fill.level,
            degenerate: false,
        },
        Diagnostics::closed_form(),
    )
}

/// Valley filling `m_i = clamp(h, m̲_i, m̄_i)` with `Σ m_i = m_bdg` (or `m̄`
/// when the caps run out first). Worst-case node costs are
/// `g_i = 1/(2m_i)`, the primary-effort norm of a unit disturbance at `i`.
pub fn solve_robust_primary(
    problem: &AllocationProblem,
    w_budget: f64,
) -> Result<AllocationResult> {
    problem.validate()?;
    if !(w_budget > 0.0) {
        return Err(Error::invalid("problem.w_budget", "must be > 0"));
    }
    let n = problem.n();
    let fill = water_fill(
        &DVector::from_element(n, 1.0),
        &problem.lower,
        &problem.upper,
        problem.budget,
    )?;
    let costs = fill.m.map(|m| 0.5 / m);
    let lambda = costs.max();
    let mu: Vec<f64> = costs.iter().map(|g| lambda - g).collect();
    // adversary spreads over the lowest buses; ties resolved by index order
    let tol = 1e-12 * lambda;
    let worst: Vec<usize> = (0..n).filter(|&i| mu[i] <= tol).collect();
    let share = w_budget / worst.len() as f64;
    let mut w_star = vec![0.0; n];
    for &i in &worst {
        w_star[i] = share;
    }
    let complementarity = (0..n).map(|i| w_star[i] * mu[i]).fold(0.0, f64::max);
    AllocationResult::build(
        problem,
        fill.m,
        w_budget * lambda,
        Extras::Robust {
            lambda,
            mu,
            node_costs: costs.iter().copied().collect(),
            worst_case_disturbance: w_star,
            complementarity,
        },
        Diagnostics::closed_form(),
    )
}
