//! Projected gradient descent on the box-and-budget set with Armijo
//! backtracking along the projection arc and Barzilai–Borwein trial steps.

use nalgebra::DVector;

use super::{AllocationProblem, SolverOptions};
use crate::error::Result;

const SHRINK: f64 = 0.5;
const SLOPE: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;
const MAX_STEP: f64 = 1e12;

#[derive(Debug, Clone)]
pub(crate) struct Descent {
    pub m: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    pub residual: f64,
    pub converged: bool,
}

/// `‖P(m - g) - m‖` and the same divided by `1 + ‖g‖`.
pub(crate) fn stationarity(
    problem: &AllocationProblem,
    m: &DVector<f64>,
    g: &DVector<f64>,
) -> Result<(f64, f64)> {
    let norm = (problem.project(&(m - g))? - m).norm();
    Ok((norm, norm / (1.0 + g.norm())))
}

/// Minimizes `oracle` (value and gradient) from `start`, which is projected
/// first.
pub(crate) fn minimize<F>(
    problem: &AllocationProblem,
    options: &SolverOptions,
    start: &DVector<f64>,
    mut oracle: F,
) -> Result<Descent>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let mut m = problem.project(start)?;
    let (mut f, mut g) = oracle(&m)?;
    let mut step = 1.0;
    let mut iterations = 0;
    loop {
        let (pg, residual) = stationarity(problem, &m, &g)?;
        let done = residual <= options.tol;
        if done || iterations >= options.max_iters {
            return Ok(Descent {
                m,
                value: f,
                iterations,
                projected_gradient_norm: pg,
                residual,
                converged: done,
            });
        }
        iterations += 1;

        let mut t = step;
        let accepted = loop {
            let trial = problem.project(&(&m - t * &g))?;
            let moved = &trial - &m;
            if moved.amax() == 0.0 {
                break None;
            }
            let (ft, gt) = oracle(&trial)?;
            if ft <= f + SLOPE * g.dot(&moved) {
                break Some((trial, ft, gt));
            }
            t *= SHRINK;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some((next, f_next, g_next)) = accepted else {
            // no descent available at working precision
            let (pg, residual) = stationarity(problem, &m, &g)?;
            return Ok(Descent {
                m,
                value: f,
                iterations,
                projected_gradient_norm: pg,
                residual,
                converged: residual <= options.tol,
            });
        };
        let s = &next - &m;
        let y = &g_next - &g;
        let sy = s.dot(&y);
        step = if sy > 0.0 {
            (s.norm_squared() / sy).clamp(MIN_STEP, MAX_STEP)
        } else {
            (2.0 * t).min(MAX_STEP)
        };
        m = next;
        f = f_next;
        g = g_next;
    }
}
