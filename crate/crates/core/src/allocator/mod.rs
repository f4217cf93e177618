//! Inertia allocation: minimize the squared H2 norm over
//! `{m̲ ≤ m ≤ m̄, Σm ≤ m_bdg}` and its variants.

mod closed_form;
mod descent;
mod general;
mod heuristics;
pub mod projection;
mod robust;

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridModel, PerformanceSpec};
use crate::h2;

pub use closed_form::{solve_primary_effort, solve_robust_primary, solve_uniform_ratio};
pub use general::{solve_general, solve_sparse, sparsity_path, SparsityPoint};
pub use heuristics::{heuristic_allocations, HeuristicAllocation};
pub use projection::project_feasible;
pub use robust::solve_robust;

/// Environment variable overriding the iteration cap of the iterative solvers.
pub const MAX_ITERS_ENV: &str = "INERTIA_OPT_MAX_ITERS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum Variant {
    General,
    PrimaryEffort,
    UniformRatio,
    Sparse { gamma: f64 },
    Robust { w_budget: f64 },
    RobustPrimary { w_budget: f64 },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::General => "general",
            Variant::PrimaryEffort => "primary_effort",
            Variant::UniformRatio => "uniform_ratio",
            Variant::Sparse { .. } => "sparse",
            Variant::Robust { .. } => "robust",
            Variant::RobustPrimary { .. } => "robust_primary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    /// No additional inertia: `m = m̲`.
    NoAdd,
    /// Budget split evenly, `m_bdg / n`, clipped into the boxes with the
    /// remainder redistributed.
    Uniform,
    /// Every bus at its cap: `m = m̄`.
    MaxCap,
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Heuristic::NoAdd => "no_add",
            Heuristic::Uniform => "uniform",
            Heuristic::MaxCap => "max_cap",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub seed: u64,
    /// Stationarity tolerance on the projected gradient, relative to
    /// `1 + ‖∇f‖`.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 5000,
            seed: 42,
            tol: 1e-7,
        }
    }
}

impl SolverOptions {
    /// Defaults with the iteration cap taken from `INERTIA_OPT_MAX_ITERS`
    /// when set.
    pub fn from_env() -> Result<Self> {
        let mut opts = SolverOptions::default();
        if let Ok(raw) = std::env::var(MAX_ITERS_ENV) {
            opts.max_iters = raw
                .trim()
                .parse()
                .map_err(|_| Error::invalid(MAX_ITERS_ENV, format!("`{raw}` is not a count")))?;
        }
        Ok(opts)
    }
}

#[derive(Debug, Clone)]
pub struct AllocationProblem {
    pub grid: GridModel,
    pub spec: PerformanceSpec,
    pub budget: f64,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub variant: Variant,
    pub heuristics: Vec<Heuristic>,
    pub options: SolverOptions,
}

impl AllocationProblem {
    /// Problem with the grid's own floors and caps.
    pub fn new(
        grid: GridModel,
        spec: PerformanceSpec,
        budget: f64,
        variant: Variant,
    ) -> Result<Self> {
        let lower = grid.inertia_floor();
        let upper = grid.inertia_cap();
        let problem = AllocationProblem {
            grid,
            spec,
            budget,
            lower,
            upper,
            variant,
            heuristics: Vec::new(),
            options: SolverOptions::default(),
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        AllocationProblem {
            variant,
            ..self.clone()
        }
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n();
        for (name, v) in [("lower", &self.lower), ("upper", &self.upper)] {
            if v.len() != n {
                return Err(Error::invalid(
                    name,
                    format!("expected {n} entries, found {}", v.len()),
                ));
            }
        }
        if self.spec.n() != n {
            return Err(Error::Dimension {
                expected: n,
                found: self.spec.n(),
            });
        }
        if !(self.budget > 0.0) || !self.budget.is_finite() {
            return Err(Error::invalid("problem.budget", "must be finite and > 0"));
        }
        if let Some(i) = (0..n).find(|&i| !(self.lower[i] > 0.0)) {
            return Err(Error::invalid(
                format!("lower[{i}]"),
                "inertia floors must be > 0",
            ));
        }
        match self.variant {
            Variant::Sparse { gamma } if !(gamma >= 0.0) => {
                return Err(Error::invalid("problem.gamma", "must be >= 0"))
            }
            Variant::Robust { w_budget } | Variant::RobustPrimary { w_budget }
                if !(w_budget > 0.0) =>
            {
                return Err(Error::invalid("problem.w_budget", "must be > 0"))
            }
            _ => {}
        }
        projection::check_feasible(&self.lower, &self.upper, self.budget)
    }

    pub fn project(&self, m: &DVector<f64>) -> Result<DVector<f64>> {
        project_feasible(m, &self.lower, &self.upper, self.budget)
    }

    pub fn is_feasible(&self, m: &DVector<f64>) -> bool {
        let tol = 1e-9 * (1.0 + self.budget);
        m.len() == self.n()
            && m.sum() <= self.budget + tol
            && (0..m.len()).all(|i| m[i] >= self.lower[i] - tol && m[i] <= self.upper[i] + tol)
    }

    /// Objective of the problem's variant at `m`.
    pub fn objective(&self, m: &DVector<f64>) -> Result<f64> {
        match self.variant {
            Variant::General | Variant::PrimaryEffort | Variant::UniformRatio => {
                h2::h2_value(&self.grid, &self.spec, m)
            }
            Variant::Sparse { gamma } => {
                Ok(h2::h2_value(&self.grid, &self.spec, m)? + gamma * (m - &self.lower).sum())
            }
            Variant::Robust { w_budget } | Variant::RobustPrimary { w_budget } => {
                Ok(w_budget * h2::node_costs(&self.grid, &self.spec, m)?.max())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Extras {
    None,
    ClosedForm {
        /// Water level of the closed-form allocation; absent when the
        /// budget does not bind.
        level: Option<f64>,
        degenerate: bool,
    },
    Sparse {
        gamma: f64,
        /// Reduced-model indices with `m_i - m̲_i > 1e-6 m̲_i`.
        support: Vec<usize>,
        penalty: f64,
    },
    Robust {
        lambda: f64,
        mu: Vec<f64>,
        node_costs: Vec<f64>,
        /// Adversarial disturbance on `{w ≥ 0, Σw ≤ w_bdg}`.
        worst_case_disturbance: Vec<f64>,
        complementarity: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    /// `‖P(m - ∇f) - m‖ / (1 + ‖∇f‖)`.
    pub first_order_residual: f64,
    pub converged: bool,
    pub starts: usize,
    pub best_start: Option<String>,
}

impl Diagnostics {
    pub(crate) fn closed_form() -> Self {
        Diagnostics {
            iterations: 0,
            projected_gradient_norm: 0.0,
            first_order_residual: 0.0,
            converged: true,
            starts: 0,
            best_start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AllocationResult {
    pub variant: Variant,
    pub m_star: DVector<f64>,
    /// Objective of the variant (H2 norm, regularized norm, or worst case).
    pub objective: f64,
    /// `‖G‖₂²` at `m_star` under the problem's own performance spec.
    pub h2_norm_sq: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub budget_slack: f64,
    pub budget_active: bool,
    pub at_lower: Vec<bool>,
    pub at_upper: Vec<bool>,
    pub extras: Extras,
    pub diagnostics: Diagnostics,
}

impl AllocationResult {
    pub(crate) fn build(
        problem: &AllocationProblem,
        m_star: DVector<f64>,
        objective: f64,
        extras: Extras,
        diagnostics: Diagnostics,
    ) -> Result<Self> {
        let ss = crate::grid::assemble_state_space(&problem.grid, &problem.spec, &m_star)?;
        let report = h2::h2_norm_squared(&ss)?;
        let slack = problem.budget - m_star.sum();
        let tol = 1e-9 * problem.budget.max(1.0);
        let bound_tol = |v: f64| 1e-9 * v.abs().max(1.0);
        Ok(AllocationResult {
            variant: problem.variant,
            objective,
            h2_norm_sq: report.norm_sq,
            lower_bound: report.lower_bound,
            upper_bound: report.upper_bound,
            budget_slack: slack,
            budget_active: slack <= tol,
            at_lower: (0..m_star.len())
                .map(|i| m_star[i] - problem.lower[i] <= bound_tol(problem.lower[i]))
                .collect(),
            at_upper: (0..m_star.len())
                .map(|i| problem.upper[i] - m_star[i] <= bound_tol(problem.upper[i]))
                .collect(),
            m_star,
            extras,
            diagnostics,
        })
    }
}

/// Dispatches on the problem's variant.
pub fn solve(problem: &AllocationProblem) -> Result<AllocationResult> {
    problem.validate()?;
    match problem.variant {
        Variant::General => solve_general(problem),
        Variant::PrimaryEffort => solve_primary_effort(problem),
        Variant::UniformRatio => solve_uniform_ratio(problem),
        Variant::Sparse { gamma } => solve_sparse(problem, gamma),
        Variant::Robust { w_budget } => solve_robust(problem, w_budget),
        Variant::RobustPrimary { w_budget } => solve_robust_primary(problem, w_budget),
    }
}
