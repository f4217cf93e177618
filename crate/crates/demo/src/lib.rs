//! Two-area playground compiled to WebAssembly.
//!
//! Every export takes plain numbers and returns a JSON string, either the
//! payload or `{"error": "..."}`, so the page needs no glue beyond
//! `JSON.parse`.

use inertia_core::allocator::{AllocationProblem, Variant};
use inertia_core::grid::{
    assemble_state_space, Bus, Edge, FrequencyPenalty, GridModel, PerformanceSpec,
};
use inertia_core::{h2, run, simulator};
use nalgebra::DVector;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Existing inertia at both buses.
pub const FLOOR: f64 = 0.1;
/// Samples kept per plotted trajectory.
pub const MAX_POINTS: usize = 600;

type Result<T> = std::result::Result<T, inertia_core::Error>;

fn grid(d1: f64, d2: f64, a12: f64, cap: f64) -> Result<GridModel> {
    GridModel::new(
        vec![Bus::new(1, d1, FLOOR, cap), Bus::new(2, d2, FLOOR, cap)],
        vec![Edge::new(1, 2, a12)],
    )
}

fn spec(grid: &GridModel, w: [f64; 2]) -> Result<PerformanceSpec> {
    PerformanceSpec::new(
        grid.laplacian().clone(),
        FrequencyPenalty::Diagonal(DVector::from_element(2, 1.0)),
        DVector::from_vec(w.to_vec()),
    )
}

fn respond<T: Serialize>(out: Result<T>) -> String {
    let value = match out {
        Ok(v) => serde_json::to_value(v)
            .unwrap_or_else(|e| serde_json::json!({ "error": e.to_string() })),
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    };
    value.to_string()
}

#[derive(Debug, Serialize)]
pub struct Sweep {
    pub w1: Vec<f64>,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub objective: Vec<f64>,
    pub budget_active: Vec<bool>,
}

pub fn sweep_points(
    d1: f64,
    d2: f64,
    a12: f64,
    cap: f64,
    budget: f64,
    points: usize,
) -> Result<Sweep> {
    let g = grid(d1, d2, a12, cap)?;
    let s = spec(&g, [0.5, 0.5])?;
    let problem = AllocationProblem::new(g, s, budget, Variant::General)?;
    let pts = run::sweep_disturbance(&problem, points)?;
    Ok(Sweep {
        w1: pts.iter().map(|p| p.w1).collect(),
        m1: pts.iter().map(|p| p.m[0]).collect(),
        m2: pts.iter().map(|p| p.m[1]).collect(),
        objective: pts.iter().map(|p| p.objective).collect(),
        budget_active: pts.iter().map(|p| p.budget_active).collect(),
    })
}

/// Optimal `(m₁, m₂)` against `w = (w₁, 1 − w₁)` as it moves from bus 2 to
/// bus 1.
#[wasm_bindgen]
pub fn sweep(d1: f64, d2: f64, a12: f64, cap: f64, budget: f64, points: usize) -> String {
    respond(sweep_points(d1, d2, a12, cap, budget, points))
}

#[derive(Debug, Serialize)]
pub struct Response {
    pub t: Vec<f64>,
    pub angle_difference: Vec<f64>,
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
    pub effort1: Vec<f64>,
    pub effort2: Vec<f64>,
    pub h2_norm_sq: f64,
}

pub fn impulse_points(
    d1: f64,
    d2: f64,
    a12: f64,
    m1: f64,
    m2: f64,
    node: usize,
    horizon: f64,
) -> Result<Response> {
    let g = grid(d1, d2, a12, m1.max(m2).max(FLOOR))?;
    let ss = assemble_state_space(&g, &spec(&g, [1.0, 1.0])?, &DVector::from_vec(vec![m1, m2]))?;
    let index = g.reduced_index(node).ok_or_else(|| {
        inertia_core::Error::invalid("node", format!("bus {node} does not exist; use 1 or 2"))
    })?;
    let dt = 0.5 * simulator::max_step(&ss);
    let traj = simulator::impulse_response(&ss, index, 1.0, horizon, dt)?;
    let effort = simulator::control_effort(&ss, &traj);
    let stride = traj.len().div_ceil(MAX_POINTS).max(1);
    let keep: Vec<usize> = (0..traj.len()).step_by(stride).collect();
    let pick = |row: &dyn Fn(usize) -> f64| keep.iter().map(|&k| row(k)).collect::<Vec<f64>>();
    Ok(Response {
        t: pick(&|k| traj.time[k]),
        angle_difference: pick(&|k| traj.theta[(0, k)] - traj.theta[(1, k)]),
        omega1: pick(&|k| traj.omega[(0, k)]),
        omega2: pick(&|k| traj.omega[(1, k)]),
        effort1: pick(&|k| effort[(0, k)]),
        effort2: pick(&|k| effort[(1, k)]),
        h2_norm_sq: h2::h2_norm_squared(&ss)?.norm_sq,
    })
}

/// Unit impulse at bus `node` (1 or 2) for the allocation `(m₁, m₂)`.
#[wasm_bindgen]
pub fn impulse(d1: f64, d2: f64, a12: f64, m1: f64, m2: f64, node: usize, horizon: f64) -> String {
    respond(impulse_points(d1, d2, a12, m1, m2, node, horizon))
}

pub fn spectrum_modes(
    d1: f64,
    d2: f64,
    a12: f64,
    m1: f64,
    m2: f64,
) -> Result<Vec<simulator::Mode>> {
    let g = grid(d1, d2, a12, m1.max(m2).max(FLOOR))?;
    let ss = assemble_state_space(&g, &spec(&g, [1.0, 1.0])?, &DVector::from_vec(vec![m1, m2]))?;
    Ok(simulator::eigen_spectrum(&ss))
}

/// Eigenvalues of the swing model with damping ratios.
#[wasm_bindgen]
pub fn spectrum(d1: f64, d2: f64, a12: f64, m1: f64, m2: f64) -> String {
    respond(spectrum_modes(d1, d2, a12, m1, m2))
}
