//! Box-and-budget geometry shared by the solvers.
//!
//! Every closed-form allocation and the Euclidean projection have the same
//! shape: `x_i(t) = clamp(c_i + s_i·t, l_i, u_i)` with `s_i ≥ 0`, where the
//! level `t` is fixed by `Σ x_i(t) = target`. The sum is continuous,
//! nondecreasing and piecewise linear in `t`, so the level is found exactly
//! by locating the breakpoint segment that brackets the target.

use nalgebra::DVector;

use crate::error::{Error, Result};

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// Evaluates `x(t)`.
pub fn level_point(
    offsets: &DVector<f64>,
    slopes: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    t: f64,
) -> DVector<f64> {
    DVector::from_fn(offsets.len(), |i, _| {
        clamp(offsets[i] + slopes[i] * t, lower[i], upper[i])
    })
}

/// Level `t` with `Σ x_i(t) = target`, or `None` when the target exceeds
/// `sup_t Σ x_i(t)` (every sloped coordinate saturates first).
pub fn solve_level(
    offsets: &DVector<f64>,
    slopes: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    target: f64,
) -> Result<Option<f64>> {
    let n = offsets.len();
    let mut breaks: Vec<f64> = Vec::with_capacity(2 * n);
    for i in 0..n {
        if slopes[i] > 0.0 {
            breaks.push((lower[i] - offsets[i]) / slopes[i]);
            breaks.push((upper[i] - offsets[i]) / slopes[i]);
        }
    }
    let total = |t: f64| level_point(offsets, slopes, lower, upper, t).sum();
    if breaks.is_empty() {
        let fixed = total(0.0);
        return if fixed <= target {
            Ok(None)
        } else {
            Err(Error::Infeasible(format!(
                "fixed coordinates sum to {fixed} > {target}"
            )))
        };
    }
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    let values: Vec<f64> = breaks.iter().map(|&t| total(t)).collect();
    if target < values[0] {
        return Err(Error::Infeasible(format!(
            "lower bounds sum to {} > {target}",
            values[0]
        )));
    }
    let last = *values.last().unwrap();
    if target > last {
        return Ok(None);
    }
    for k in 0..values.len() - 1 {
        let (f0, f1) = (values[k], values[k + 1]);
        if f0 <= target && target <= f1 {
            let (t0, t1) = (breaks[k], breaks[k + 1]);
            if f1 == f0 {
                return Ok(Some(t0));
            }
            return Ok(Some(t0 + (target - f0) * (t1 - t0) / (f1 - f0)));
        }
    }
    // target == values[0] with a single breakpoint
    Ok(Some(breaks[0]))
}

/// Euclidean projection onto `{l ≤ x ≤ u, Σx ≤ budget}`.
pub fn project_feasible(
    m: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    budget: f64,
) -> Result<DVector<f64>> {
    check_feasible(lower, upper, budget)?;
    let clipped = DVector::from_fn(m.len(), |i, _| clamp(m[i], lower[i], upper[i]));
    if clipped.sum() <= budget {
        return Ok(clipped);
    }
    // x_i = clamp(m_i - τ), τ ≥ 0, written with t = -τ
    let ones = DVector::from_element(m.len(), 1.0);
    let t = solve_level(m, &ones, lower, upper, budget)?
        .expect("clipped point exceeds the budget, so the level exists");
    Ok(level_point(m, &ones, lower, upper, t.min(0.0)))
}

pub fn check_feasible(lower: &DVector<f64>, upper: &DVector<f64>, budget: f64) -> Result<()> {
    if lower.len() != upper.len() {
        return Err(Error::Dimension {
            expected: lower.len(),
            found: upper.len(),
        });
    }
    if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
        return Err(Error::Infeasible(format!(
            "lower bound {} exceeds upper bound {} at position {i}",
            lower[i], upper[i]
        )));
    }
    let floor = lower.sum();
    if floor > budget * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!(
            "existing inertia {floor} exceeds the budget {budget}"
        )));
    }
    Ok(())
}

/// Result of a weighted water-filling.
#[derive(Debug, Clone)]
pub struct WaterFill {
    pub m: DVector<f64>,
    /// Water level `t`; `None` when the budget is not binding.
    pub level: Option<f64>,
}

/// Minimizer of `Σ a_i² / m_i` over box and budget: `m_i = clamp(t·a_i)`.
/// Zero weights stay at their lower bound. With unit weights this is the
/// valley-filling allocation `clamp(t)`.
pub fn water_fill(
    weights: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    budget: f64,
) -> Result<WaterFill> {
    check_feasible(lower, upper, budget)?;
    let zeros = DVector::zeros(weights.len());
    match solve_level(&zeros, weights, lower, upper, budget)? {
        Some(t) => Ok(WaterFill {
            m: level_point(&zeros, weights, lower, upper, t),
            level: Some(t),
        }),
        None => Ok(WaterFill {
            m: DVector::from_fn(weights.len(), |i, _| {
                if weights[i] > 0.0 {
                    upper[i]
                } else {
                    lower[i]
                }
            }),
            level: None,
        }),
    }
}
