//! Squared H2 norm of the swing model, its performance bounds and its
//! gradient with respect to the inertia vector.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{
    assemble_state_space, check_connected, pseudo_inverse_symmetric, GridModel, PerformanceSpec,
    StateSpace,
};
use crate::lyapunov::{ConstrainedLyapunov, Gramian};
use crate::par::map_indices;

#[derive(Debug, Clone)]
pub struct H2Report {
    pub norm_sq: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// `w_i X₂,ᵢᵢ / m_i²`; sums to `norm_sq`.
    pub per_bus_contribution: DVector<f64>,
    pub gramian: Gramian,
}

/// Observability Gramian of `ss` (pinned by `P v₀ = 0`).
pub fn gramian(ss: &StateSpace) -> Result<Gramian> {
    let solver = ConstrainedLyapunov::new(&ss.a, &ss.null_vector())?;
    Ok(Gramian {
        p: solver.solve(&ss.output_weight())?,
        n: ss.n,
    })
}

fn contributions(ss: &StateSpace, g: &Gramian) -> DVector<f64> {
    let n = ss.n;
    DVector::from_fn(n, |i, _| {
        ss.disturbance[i] * g.p[(n + i, n + i)] / (ss.m[i] * ss.m[i])
    })
}

/// `trace(N L†)`; `L` must be a connected Laplacian.
pub fn trace_penalty_offset(n_mat: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<f64> {
    if n_mat.shape() != l.shape() {
        return Err(Error::Dimension {
            expected: l.nrows(),
            found: n_mat.nrows(),
        });
    }
    check_connected(l, &(0..l.nrows()).collect::<Vec<_>>())?;
    Ok((n_mat * pseudo_inverse_symmetric(l)).trace())
}

/// Lower and upper bounds
/// `(w_min / 2d_max, w_max / 2d_min) · (trace(N L†) + Σ s_i/m_i)`.
pub fn bounds_for(ss: &StateSpace) -> Result<(f64, f64)> {
    let offset = trace_penalty_offset(&ss.angle_penalty, &ss.laplacian)?;
    let core = offset
        + ss.freq_penalty
            .iter()
            .zip(ss.m.iter())
            .map(|(s, m)| s / m)
            .sum::<f64>();
    let (w_lo, w_hi) = (ss.disturbance.min(), ss.disturbance.max());
    let (d_lo, d_hi) = (ss.damping.min(), ss.damping.max());
    Ok((w_lo / (2.0 * d_hi) * core, w_hi / (2.0 * d_lo) * core))
}

pub fn performance_bounds(
    grid: &GridModel,
    spec: &PerformanceSpec,
    m: &DVector<f64>,
) -> Result<(f64, f64)> {
    bounds_for(&assemble_state_space(grid, spec, m)?)
}

/// Full H2 report for an assembled system.
pub fn h2_norm_squared(ss: &StateSpace) -> Result<H2Report> {
    let g = gramian(ss)?;
    let per_bus_contribution = contributions(ss, &g);
    let (lower_bound, upper_bound) = bounds_for(ss)?;
    Ok(H2Report {
        norm_sq: per_bus_contribution.sum(),
        lower_bound,
        upper_bound,
        per_bus_contribution,
        gramian: g,
    })
}

/// `‖G‖₂²` at allocation `m`, without the bounds.
pub fn h2_value(grid: &GridModel, spec: &PerformanceSpec, m: &DVector<f64>) -> Result<f64> {
    let ss = assemble_state_space(grid, spec, m)?;
    let g = gramian(&ss)?;
    Ok(contributions(&ss, &g).sum())
}

/// Per-node worst-case costs `g_i(m) = X₂,ᵢᵢ / m_i²`, i.e. the norm for a
/// unit disturbance at node `i` alone.
pub fn node_costs(
    grid: &GridModel,
    spec: &PerformanceSpec,
    m: &DVector<f64>,
) -> Result<DVector<f64>> {
    let ss = assemble_state_space(grid, spec, m)?;
    let g = gramian(&ss)?;
    let n = ss.n;
    Ok(DVector::from_fn(n, |i, _| {
        g.p[(n + i, n + i)] / (m[i] * m[i])
    }))
}

/// First-order perturbation data of the Gramian: `P⁽⁰⁾` and one `P⁽¹⁾` per
/// coordinate direction `eᵢ`, all sharing a single Schur factorization.
#[derive(Debug, Clone)]
pub struct Sensitivity {
    pub p0: DMatrix<f64>,
    pub p1: Vec<DMatrix<f64>>,
    m: DVector<f64>,
}

impl Sensitivity {
    pub fn new(ss: &StateSpace, freq_penalty_rate: f64) -> Result<Self> {
        let n = ss.n;
        let solver = ConstrainedLyapunov::new(&ss.a, &ss.null_vector())?;
        let p0 = solver.solve(&ss.output_weight())?;
        let l = &ss.laplacian;
        let m = &ss.m;
        let d = &ss.damping;
        let p1 = map_indices(n, |i| {
            // A⁽¹⁾ = [0 0; Φ M⁻²L  Φ M⁻²D] with Φ = eᵢeᵢᵀ: only row n+i is nonzero
            let inv_sq = 1.0 / (m[i] * m[i]);
            let mut a1 = DMatrix::zeros(2 * n, 2 * n);
            for j in 0..n {
                a1[(n + i, j)] = l[(i, j)] * inv_sq;
            }
            a1[(n + i, n + i)] = d[i] * inv_sq;
            let mut q1 = &p0 * &a1 + a1.transpose() * &p0;
            // S = cM moves the output weight as well
            q1[(n + i, n + i)] += freq_penalty_rate;
            solver.solve(&q1).map_err(|e| Error::GradientCoordinate {
                coordinate: i,
                source: Box::new(e),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(Sensitivity {
            p0,
            p1,
            m: m.clone(),
        })
    }

    fn n(&self) -> usize {
        self.m.len()
    }

    /// `∂/∂m_k` of `Σ_j w_j X₂,ⱼⱼ/m_j²`, which is
    /// `Trace(2 B⁽¹⁾ᵀP⁽⁰⁾B⁽⁰⁾ + B⁽⁰⁾ᵀP⁽¹⁾B⁽⁰⁾)` with the sparsity of
    /// `B⁽⁰⁾ = [0; M⁻¹W^½]` and `B⁽¹⁾ = [0; -ΦM⁻²W^½]` written out.
    pub fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let m = &self.m;
        DVector::from_fn(n, |k, _| {
            let direct = -2.0 * w[k] * self.p0[(n + k, n + k)] / (m[k] * m[k] * m[k]);
            let through_gramian: f64 = (0..n)
                .map(|j| w[j] * self.p1[k][(n + j, n + j)] / (m[j] * m[j]))
                .sum();
            direct + through_gramian
        })
    }

    /// Jacobian `J[i][k] = ∂g_i/∂m_k` of the node costs `g_i = X₂,ᵢᵢ/m_i²`.
    pub fn cost_jacobian(&self) -> DMatrix<f64> {
        let n = self.n();
        let m = &self.m;
        DMatrix::from_fn(n, n, |i, k| {
            let through_gramian = self.p1[k][(n + i, n + i)] / (m[i] * m[i]);
            if i == k {
                through_gramian - 2.0 * self.p0[(n + i, n + i)] / (m[i] * m[i] * m[i])
            } else {
                through_gramian
            }
        })
    }

    pub fn node_costs(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(n, |i, _| self.p0[(n + i, n + i)] / (self.m[i] * self.m[i]))
    }
}

/// Value and analytic gradient of `‖G‖₂²` at `m` (n+1 Lyapunov solves).
pub fn value_and_gradient(
    grid: &GridModel,
    spec: &PerformanceSpec,
    m: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    let ss = assemble_state_space(grid, spec, m)?;
    let sens = Sensitivity::new(&ss, spec.freq_penalty.sensitivity())?;
    let value = sens.node_costs().dot(&spec.disturbance);
    Ok((value, sens.gradient(&spec.disturbance)))
}

/// Analytic gradient `∇_m ‖G‖₂²`.
pub fn gradient(
    grid: &GridModel,
    spec: &PerformanceSpec,
    m: &DVector<f64>,
) -> Result<DVector<f64>> {
    value_and_gradient(grid, spec, m).map(|(_, g)| g)
}

/// Central differences of `‖G‖₂²` with per-coordinate step `h·m_i`.
pub fn finite_difference_gradient(
    grid: &GridModel,
    spec: &PerformanceSpec,
    m: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    if !(h > 0.0) {
        return Err(Error::invalid("h", "step must be > 0"));
    }
    let n = m.len();
    let mut g = DVector::zeros(n);
    for i in 0..n {
        let step = h * m[i];
        if !(m[i] - step > 0.0) {
            return Err(Error::invalid(
                format!("m[{i}]"),
                "finite-difference step leaves the positive orthant",
            ));
        }
        let mut plus = m.clone();
        plus[i] += step;
        let mut minus = m.clone();
        minus[i] -= step;
        g[i] = (h2_value(grid, spec, &plus)? - h2_value(grid, spec, &minus)?) / (2.0 * step);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{average_penalty, build_laplacian, Bus, Edge, FrequencyPenalty};
    use approx::assert_relative_eq;

    fn path_grid(n: usize) -> GridModel {
        let buses = (0..n)
            .map(|i| Bus::new(i, 1.0 + 0.3 * i as f64, 1.0 + 0.5 * i as f64, 10.0))
            .collect();
        let lines = (1..n)
            .map(|i| Edge::new(i - 1, i, 1.0 + i as f64))
            .collect();
        GridModel::new(buses, lines).unwrap()
    }

    fn primary_effort_spec(grid: &GridModel, w: DVector<f64>) -> PerformanceSpec {
        let n = grid.n();
        PerformanceSpec::new(
            DMatrix::zeros(n, n),
            FrequencyPenalty::Diagonal(grid.damping()),
            w,
        )
        .unwrap()
    }

    #[test]
    fn primary_effort_closed_form() {
        let grid = path_grid(4);
        let w = DVector::from_vec(vec![0.5, 1.0, 2.0, 0.1]);
        let spec = primary_effort_spec(&grid, w.clone());
        let m = DVector::from_vec(vec![1.5, 2.0, 3.0, 1.2]);
        let report = h2_norm_squared(&assemble_state_space(&grid, &spec, &m).unwrap()).unwrap();
        let expected: f64 = 0.5 * w.iter().zip(m.iter()).map(|(w, m)| w / m).sum::<f64>();
        assert_relative_eq!(report.norm_sq, expected, epsilon = 1e-12);
        assert!(report.lower_bound <= report.norm_sq && report.norm_sq <= report.upper_bound);
    }

    #[test]
    fn zero_disturbance_has_zero_norm() {
        let grid = path_grid(3);
        let spec = primary_effort_spec(&grid, DVector::zeros(3));
        let m = grid.inertia_floor();
        assert_eq!(h2_value(&grid, &spec, &m).unwrap(), 0.0);
    }

    #[test]
    fn trace_offset_cases() {
        let l = build_laplacian(&[Edge::new(0, 1, 2.0), Edge::new(1, 2, 3.0)], 3).unwrap();
        assert_relative_eq!(trace_penalty_offset(&l, &l).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(
            trace_penalty_offset(&DMatrix::zeros(3, 3), &l).unwrap(),
            0.0
        );
        // complete graph with unit weights: L† = (I - 11ᵀ/n)/n
        let n = 5;
        let edges: Vec<Edge> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| Edge::new(i, j, 1.0)))
            .collect();
        let k = build_laplacian(&edges, n).unwrap();
        assert_relative_eq!(
            trace_penalty_offset(&average_penalty(n), &k).unwrap(),
            (n as f64 - 1.0) / n as f64,
            epsilon = 1e-12
        );
    }

    #[test]
    fn trace_offset_rejects_disconnected() {
        let l = crate::grid::laplacian_unchecked(&[Edge::new(0, 1, 1.0)], 3).unwrap();
        assert!(matches!(
            trace_penalty_offset(&average_penalty(3), &l),
            Err(Error::Disconnected { .. })
        ));
    }

    #[test]
    fn primary_effort_gradient_is_analytic() {
        let grid = path_grid(3);
        let w = DVector::from_vec(vec![0.3, 1.0, 2.5]);
        let spec = primary_effort_spec(&grid, w.clone());
        let m = DVector::from_vec(vec![1.1, 2.2, 3.3]);
        let g = gradient(&grid, &spec, &m).unwrap();
        for i in 0..3 {
            assert_relative_eq!(g[i], -w[i] / (2.0 * m[i] * m[i]), epsilon = 1e-12);
        }
    }

    #[test]
    fn scalar_fd_matches_analytic_derivative() {
        let mut bus = Bus::new(0, 1.0, 0.5, 5.0);
        bus.disturbance_weight = 3.0;
        let grid = GridModel::new(vec![bus], vec![]).unwrap();
        let spec = primary_effort_spec(&grid, DVector::from_element(1, 3.0));
        let m = DVector::from_element(1, 2.0);
        let fd = finite_difference_gradient(&grid, &spec, &m, 1e-5).unwrap();
        assert_relative_eq!(fd[0], -3.0 / (2.0 * 4.0), max_relative = 1e-8);
    }

    #[test]
    fn fd_rejects_step_outside_orthant() {
        let grid = path_grid(2);
        let spec = primary_effort_spec(&grid, DVector::from_element(2, 1.0));
        let m = DVector::from_element(2, 1.0);
        assert!(finite_difference_gradient(&grid, &spec, &m, 1.5).is_err());
    }

    #[test]
    fn general_gradient_matches_fd() {
        let grid = path_grid(4);
        let n = 4;
        let spec = PerformanceSpec::new(
            grid.laplacian().clone(),
            FrequencyPenalty::Diagonal(DVector::from_vec(vec![1.0, 0.5, 2.0, 1.5])),
            DVector::from_vec(vec![0.2, 1.0, 0.7, 0.4]),
        )
        .unwrap();
        let m = DVector::from_fn(n, |i, _| 1.3 + 0.4 * i as f64);
        let g = gradient(&grid, &spec, &m).unwrap();
        let fd = finite_difference_gradient(&grid, &spec, &m, 1e-5).unwrap();
        for i in 0..n {
            assert_relative_eq!(g[i], fd[i], max_relative = 1e-6);
        }
    }

    #[test]
    fn cost_jacobian_matches_weighted_gradient() {
        let grid = path_grid(3);
        let spec = PerformanceSpec::new(
            average_penalty(3),
            FrequencyPenalty::Diagonal(DVector::from_element(3, 1.0)),
            DVector::from_vec(vec![0.2, 1.0, 0.7]),
        )
        .unwrap();
        let m = DVector::from_vec(vec![1.2, 2.0, 2.4]);
        let ss = assemble_state_space(&grid, &spec, &m).unwrap();
        let sens = Sensitivity::new(&ss, 0.0).unwrap();
        let jt_w = sens.cost_jacobian().transpose() * &spec.disturbance;
        assert_relative_eq!(jt_w, sens.gradient(&spec.disturbance), epsilon = 1e-14);
    }
}
