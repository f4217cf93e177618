use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::Serialize;

use super::projection::water_fill;
use super::{AllocationProblem, Heuristic};
use crate::error::Result;
use crate::h2;

#[derive(Debug, Clone, Serialize)]
pub struct HeuristicAllocation {
    pub m: Vec<f64>,
    /// Whether `m` respects the budget (`m̄` may exceed it).
    pub feasible: bool,
    pub h2_norm_sq: f64,
}

/// `m_bdg / n` per bus; buses clipped at a bound hand their excess or
/// deficit to the rest, which is `clamp(t, m̲_i, m̄_i)` with the level `t`
/// spending the budget.
pub(crate) fn uniform_allocation(problem: &AllocationProblem) -> Result<DVector<f64>> {
    let ones = DVector::from_element(problem.n(), 1.0);
    Ok(water_fill(&ones, &problem.lower, &problem.upper, problem.budget)?.m)
}

/// Baselines requested by the problem (all three when none are listed).
pub fn heuristic_allocations(
    problem: &AllocationProblem,
) -> Result<BTreeMap<Heuristic, HeuristicAllocation>> {
    problem.validate()?;
    let requested = if problem.heuristics.is_empty() {
        vec![Heuristic::NoAdd, Heuristic::Uniform, Heuristic::MaxCap]
    } else {
        problem.heuristics.clone()
    };
    let mut out = BTreeMap::new();
    for h in requested {
        let m = match h {
            Heuristic::NoAdd => problem.lower.clone(),
            Heuristic::Uniform => uniform_allocation(problem)?,
            Heuristic::MaxCap => problem.upper.clone(),
        };
        let h2_norm_sq = h2::h2_value(&problem.grid, &problem.spec, &m)?;
        out.insert(
            h,
            HeuristicAllocation {
                feasible: problem.is_feasible(&m),
                m: m.iter().copied().collect(),
                h2_norm_sq,
            },
        );
    }
    Ok(out)
}
