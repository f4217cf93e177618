//! Robust allocation against the disturbance set `{w ≥ 0, Σw ≤ w_bdg}`.
//!
//! The inner maximum is attained at a vertex, so the problem is
//! `min_m w_bdg · max_i g_i(m)` over the feasible set. Each outer step of
//! the prox-linear method minimizes the linearized max plus a proximal term,
//!
//! ```text
//! min_{x ∈ F}  max_i [g_i + J_i (x - m)] + ‖x - m‖² / (2α),
//! ```
//!
//! through its dual over the probability simplex, where the inner
//! minimizer is `x(π) = P_F(m - α Jᵀπ)`. The dual weights `π` at the
//! solution are the worst-case disturbance profile.

use nalgebra::{DMatrix, DVector};

use super::general::{improves, starting_points};
use super::projection::{level_point, solve_level};
use super::{AllocationProblem, AllocationResult, Diagnostics, Extras};
use crate::error::{Error, Result};
use crate::grid::assemble_state_space;
use crate::h2::Sensitivity;
use crate::par::map_indices;

const DUAL_ITERS: usize = 20_000;
const ACCEPT: f64 = 0.1;
const EXPAND: f64 = 0.75;
/// Costs within this relative distance of the maximum count as active.
const ACTIVE_TOL: f64 = 1e-7;

fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    let ones = DVector::from_element(n, 1.0);
    let zeros = DVector::zeros(n);
    let t = solve_level(v, &ones, &zeros, &ones, 1.0)
        .ok()
        .flatten()
        .unwrap_or(0.0);
    level_point(v, &ones, &zeros, &ones, t)
}

struct Linearization {
    costs: DVector<f64>,
    jacobian: DMatrix<f64>,
}

impl Linearization {
    fn at(problem: &AllocationProblem, m: &DVector<f64>) -> Result<Self> {
        let ss = assemble_state_space(&problem.grid, &problem.spec, m)?;
        let sens = Sensitivity::new(&ss, problem.spec.freq_penalty.sensitivity())?;
        Ok(Linearization {
            costs: sens.node_costs(),
            jacobian: sens.cost_jacobian(),
        })
    }

    fn worst(&self) -> f64 {
        self.costs.max()
    }
}

struct Step {
    x: DVector<f64>,
    pi: DVector<f64>,
    /// `max_i [g_i + J_i(x - m)]`.
    model: f64,
}

/// Dual FISTA with adaptive restart on the prox-linear subproblem. Returns
/// the primal point with the smallest model value seen.
fn subproblem(
    problem: &AllocationProblem,
    m: &DVector<f64>,
    lin: &Linearization,
    alpha: f64,
    pi0: &DVector<f64>,
) -> Result<Step> {
    let j = &lin.jacobian;
    let jt = j.transpose();
    let lipschitz = alpha * j.norm_squared();
    let rate = if lipschitz > 0.0 {
        1.0 / lipschitz
    } else {
        1.0
    };
    let primal = |pi: &DVector<f64>| problem.project(&(m - alpha * (&jt * pi)));
    let affine = |x: &DVector<f64>| &lin.costs + j * (x - m);
    let scale = 1.0 + lin.worst().abs();

    let mut pi = pi0.clone();
    let mut y = pi.clone();
    let mut t: f64 = 1.0;
    let mut dual_prev = f64::NEG_INFINITY;
    let mut best: Option<(f64, Step)> = None;
    for _ in 0..DUAL_ITERS {
        let xy = primal(&y)?;
        let next = project_simplex(&(&y + rate * affine(&xy)));
        let x = primal(&next)?;
        let ell = affine(&x);
        let prox = (&x - m).norm_squared() / (2.0 * alpha);
        let model = ell.max();
        let dual = next.dot(&ell) + prox;
        let gap = model + prox - dual;
        if best.as_ref().is_none_or(|(v, _)| model + prox < *v) {
            best = Some((
                model + prox,
                Step {
                    x: x.clone(),
                    pi: next.clone(),
                    model,
                },
            ));
        }
        if gap <= 1e-14 * scale {
            break;
        }
        if dual < dual_prev {
            t = 1.0;
            y = next.clone();
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &next + ((t - 1.0) / t_next) * (&next - &pi);
            t = t_next;
        }
        dual_prev = dual;
        pi = next;
    }
    Ok(best.expect("at least one dual iteration").1)
}

struct Run {
    m: DVector<f64>,
    lin: Linearization,
    pi: DVector<f64>,
    iterations: usize,
    gradient_mapping: f64,
    residual: f64,
    converged: bool,
}

fn active_weights(costs: &DVector<f64>) -> DVector<f64> {
    let top = costs.max();
    let tol = ACTIVE_TOL * top.abs();
    let active = costs.map(|g| if top - g <= tol { 1.0 } else { 0.0 });
    let count = active.sum();
    active / count
}

fn prox_linear(problem: &AllocationProblem, start: &DVector<f64>) -> Result<Run> {
    let options = &problem.options;
    let mut m = problem.project(start)?;
    let mut lin = Linearization::at(problem, &m)?;
    let jnorm = lin.jacobian.norm().max(f64::MIN_POSITIVE);
    let alpha0 = 0.1 * m.norm() / jnorm;
    let (alpha_min, alpha_max) = (1e-12 * alpha0, 1e6 * alpha0);
    let mut alpha = alpha0;
    let mut pi = active_weights(&lin.costs);
    let mut iterations = 0;
    loop {
        let step = subproblem(problem, &m, &lin, alpha, &pi)?;
        let moved = (&step.x - &m).norm();
        let gradient_mapping = moved / alpha;
        let residual = gradient_mapping / (1.0 + (lin.jacobian.transpose() * &step.pi).norm());
        let f = lin.worst();
        let predicted = f - step.model;
        let stationary = residual <= options.tol || predicted <= 1e-15 * (1.0 + f.abs());
        if stationary || iterations >= options.max_iters || alpha < alpha_min {
            return Ok(Run {
                m,
                lin,
                pi: step.pi,
                iterations,
                gradient_mapping,
                residual,
                converged: stationary,
            });
        }
        iterations += 1;
        let trial = Linearization::at(problem, &step.x)?;
        let ratio = (f - trial.worst()) / predicted;
        if ratio >= ACCEPT {
            m = step.x;
            lin = trial;
            pi = step.pi;
            if ratio >= EXPAND {
                alpha = (2.0 * alpha).min(alpha_max);
            }
        } else {
            alpha *= 0.25;
        }
    }
}

/// Multi-start prox-linear solve of `min_m w_bdg · max_i g_i(m)`.
pub fn solve_robust(problem: &AllocationProblem, w_budget: f64) -> Result<AllocationResult> {
    problem.validate()?;
    if !(w_budget > 0.0) {
        return Err(Error::invalid("problem.w_budget", "must be > 0"));
    }
    let starts = starting_points(problem)?;
    let runs = map_indices(starts.len(), |k| prox_linear(problem, &starts[k].1));
    let mut best: Option<(usize, Run)> = None;
    for (k, run) in runs.into_iter().enumerate() {
        let run = run?;
        if best
            .as_ref()
            .is_none_or(|(_, b)| improves(run.lin.worst(), b.lin.worst()))
        {
            best = Some((k, run));
        }
    }
    let (k, run) = best.expect("starting points are never empty");

    let costs = &run.lin.costs;
    let lambda = costs.max();
    let mu: Vec<f64> = costs.iter().map(|g| lambda - g).collect();
    // adversary mass restricted to the maximizers of g
    let active = active_weights(costs);
    let restricted = run
        .pi
        .component_mul(&active.map(|a| if a > 0.0 { 1.0 } else { 0.0 }));
    let pi = if restricted.sum() > 0.0 {
        &restricted / restricted.sum()
    } else {
        active
    };
    let worst: Vec<f64> = pi.iter().map(|p| w_budget * p).collect();
    let complementarity = worst.iter().zip(&mu).map(|(w, u)| w * u).sum();
    let diagnostics = Diagnostics {
        iterations: run.iterations,
        projected_gradient_norm: run.gradient_mapping,
        first_order_residual: run.residual,
        converged: run.converged,
        starts: starts.len(),
        best_start: Some(starts[k].0.clone()),
    };
    AllocationResult::build(
        problem,
        run.m,
        w_budget * lambda,
        Extras::Robust {
            lambda,
            mu,
            node_costs: costs.iter().copied().collect(),
            worst_case_disturbance: worst,
            complementarity,
        },
        diagnostics,
    )
}
