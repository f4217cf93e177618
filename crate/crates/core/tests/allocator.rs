mod common;

use approx::assert_relative_eq;
use common::*;
use inertia_core::allocator::{
    heuristic_allocations, solve, solve_general, solve_primary_effort, solve_robust,
    solve_robust_primary, solve_sparse, solve_uniform_ratio, sparsity_path, Extras, Heuristic,
    Variant,
};
use inertia_core::grid::{average_penalty, FrequencyPenalty, PerformanceSpec};
use inertia_core::h2;
use inertia_core::Error;
use nalgebra::DVector;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

#[test]
fn primary_effort_square_root_rule() {
    let grid = path_with_bounds(&[1.0, 1.0], &[1e-6, 1e-6], &[100.0, 100.0]);
    let spec = primary_spec(&grid, v(&[1.0, 4.0]));
    let res = solve_primary_effort(&problem(grid, spec, 3.0, Variant::PrimaryEffort)).unwrap();
    assert_relative_eq!(res.m_star, v(&[1.0, 2.0]), epsilon = 1e-12);
    assert_relative_eq!(res.objective, 0.5 * (1.0 + 2.0), epsilon = 1e-12);
    assert_relative_eq!(res.h2_norm_sq, res.objective, max_relative = 1e-10);
}

#[test]
fn primary_effort_single_disturbed_node() {
    let grid = path_with_bounds(&[1.0, 2.0, 1.5], &[1.0, 2.0, 0.5], &[10.0, 4.0, 3.0]);
    let spec = primary_spec(&grid, v(&[0.0, 1.0, 0.0]));
    let res = solve_primary_effort(&problem(
        grid.clone(),
        spec.clone(),
        20.0,
        Variant::PrimaryEffort,
    ))
    .unwrap();
    // cap binds
    assert_eq!(res.m_star, v(&[1.0, 4.0, 0.5]));
    let res = solve_primary_effort(&problem(grid, spec, 5.0, Variant::PrimaryEffort)).unwrap();
    // budget binds: m_2 = m_bdg - m̲_1 - m̲_3
    assert_relative_eq!(res.m_star, v(&[1.0, 3.5, 0.5]), epsilon = 1e-12);
}

#[test]
fn primary_effort_all_zero_disturbance_is_degenerate() {
    let grid = path_with_bounds(&[1.0, 1.0], &[1.0, 1.0], &[5.0, 5.0]);
    let spec = primary_spec(&grid, v(&[0.0, 0.0]));
    let res = solve_primary_effort(&problem(grid, spec, 6.0, Variant::PrimaryEffort)).unwrap();
    assert_eq!(res.m_star, v(&[1.0, 1.0]));
    assert!(matches!(
        res.extras,
        Extras::ClosedForm {
            degenerate: true,
            ..
        }
    ));
}

#[test]
fn uniform_ratio_rejects_mismatched_pair() {
    let grid = path_with_bounds(&[1.0, 2.0, 1.0], &[1.0; 3], &[5.0; 3]);
    let spec = laplacian_spec(&grid, v(&[1.0; 3]), v(&[1.0, 1.0, 3.0]));
    let err = solve_uniform_ratio(&problem(grid, spec, 9.0, Variant::UniformRatio)).unwrap_err();
    match err {
        Error::RatioNotUniform { first, second, .. } => assert_eq!((first, second), (2, 1)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn uniform_ratio_matches_general() {
    let mut rng = rng(7);
    for n in 2..=4 {
        let grid = random_grid(&mut rng, n);
        let w = grid.damping() * 0.7;
        let s = random_vec(&mut rng, n, 0.5, 2.0);
        let spec =
            PerformanceSpec::new(average_penalty(n), FrequencyPenalty::Diagonal(s), w).unwrap();
        let budget = grid.inertia_floor().sum() * 2.0;
        let p = problem(grid, spec, budget, Variant::UniformRatio);
        let closed = solve_uniform_ratio(&p).unwrap();
        let general = solve_general(&p.with_variant(Variant::General)).unwrap();
        assert_relative_eq!(closed.objective, closed.h2_norm_sq, max_relative = 1e-9);
        assert_relative_eq!(closed.objective, general.objective, max_relative = 1e-6);
    }
}

#[test]
fn kinetic_penalty_makes_every_point_optimal() {
    let mut rng = rng(11);
    let grid = random_grid(&mut rng, 4);
    let w = grid.damping() * 2.0;
    let spec = PerformanceSpec::new(
        grid.laplacian().clone(),
        FrequencyPenalty::KineticEnergy(0.5),
        w,
    )
    .unwrap();
    let budget = grid.inertia_floor().sum() * 1.5;
    let p = problem(grid, spec, budget, Variant::General);
    let res = solve_general(&p).unwrap();
    assert_eq!(res.m_star, p.lower);
    assert_eq!(res.diagnostics.iterations, 0);
    assert_eq!(res.diagnostics.best_start.as_deref(), Some("no_add"));
    let closed = solve_uniform_ratio(&p.with_variant(Variant::UniformRatio)).unwrap();
    assert!(matches!(
        closed.extras,
        Extras::ClosedForm {
            degenerate: true,
            ..
        }
    ));
}

#[test]
fn symmetric_two_area_splits_evenly() {
    let grid = two_area([2.0, 2.0], 1.0, 0.1, 1e3);
    let spec = laplacian_spec(&grid, v(&[1.0, 1.0]), v(&[1.0, 1.0]));
    let res = solve_general(&problem(grid, spec, 10.0, Variant::General)).unwrap();
    assert_relative_eq!(res.m_star[0], res.m_star[1], max_relative = 1e-6);
}

#[test]
fn general_beats_heuristics_and_is_stationary() {
    let mut rng = rng(3);
    for n in [3, 5] {
        let grid = random_grid(&mut rng, n);
        let w = random_vec(&mut rng, n, 0.1, 2.0);
        let spec = laplacian_spec(&grid, DVector::from_element(n, 1.0), w);
        let budget = grid.inertia_floor().sum() * 2.0;
        let p = problem(grid, spec, budget, Variant::General);
        let res = solve_general(&p).unwrap();
        assert!(res.diagnostics.converged);
        assert!(res.diagnostics.first_order_residual <= 1e-7);
        assert!(p.is_feasible(&res.m_star));
        for (h, alloc) in heuristic_allocations(&p).unwrap() {
            if alloc.feasible {
                assert!(res.objective <= alloc.h2_norm_sq * (1.0 + 1e-12), "{h}");
            }
        }
    }
}

#[test]
fn budget_can_stay_slack() {
    // frequency penalty only on the angle: more inertia eventually hurts
    let grid = two_area([6.0, 1.0], 1.0, 0.1, 25.0);
    let spec = laplacian_spec(&grid, v(&[1.0, 1.0]), v(&[0.0, 1.0]));
    let res = solve_general(&problem(grid, spec, 25.0, Variant::General)).unwrap();
    assert_eq!(res.budget_active, res.budget_slack <= 1e-9 * 25.0);
}

#[test]
fn heuristics_follow_their_definitions() {
    let n = 9;
    let grid = path_with_bounds(&[1.0; 9], &[2.0; 9], &[8.0; 9]);
    let spec = laplacian_spec(
        &grid,
        DVector::from_element(n, 1.0),
        DVector::from_element(n, 1.0 / 9.0),
    );
    let p = problem(grid, spec, 18.0 + 9.0, Variant::General);
    let h = heuristic_allocations(&p).unwrap();
    assert_eq!(h[&Heuristic::NoAdd].m, vec![2.0; 9]);
    for x in &h[&Heuristic::Uniform].m {
        assert_relative_eq!(*x, 3.0, epsilon = 1e-12);
    }
    assert_eq!(h[&Heuristic::MaxCap].m, vec![8.0; 9]);
    assert!(!h[&Heuristic::MaxCap].feasible);
    let opt = solve_general(&p).unwrap();
    assert!(h[&Heuristic::NoAdd].h2_norm_sq >= opt.objective);
}

#[test]
fn sparse_limits() {
    let mut rng = rng(5);
    let grid = random_grid(&mut rng, 4);
    let spec = laplacian_spec(
        &grid,
        DVector::from_element(4, 1.0),
        random_vec(&mut rng, 4, 0.2, 1.0),
    );
    let budget = grid.inertia_floor().sum() * 2.0;
    let p = problem(grid, spec, budget, Variant::General);
    let general = solve_general(&p).unwrap();
    let zero = solve_sparse(&p.with_variant(Variant::Sparse { gamma: 0.0 }), 0.0).unwrap();
    assert_relative_eq!(zero.objective, general.objective, max_relative = 1e-9);
    let big = solve_sparse(&p.with_variant(Variant::Sparse { gamma: 1e3 }), 1e3).unwrap();
    assert_eq!(big.m_star, p.lower);
    match big.extras {
        Extras::Sparse { ref support, .. } => assert!(support.is_empty()),
        ref other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn sparsity_path_support_shrinks() {
    let mut rng = rng(9);
    let grid = random_grid(&mut rng, 5);
    let mut w = DVector::from_element(5, 0.05);
    w[2] = 1.0;
    let spec = laplacian_spec(&grid, DVector::from_element(5, 1.0), w);
    let budget = grid.inertia_floor().sum() * 2.0;
    let p = problem(grid, spec, budget, Variant::General);
    let gammas: Vec<f64> = (0..15)
        .map(|k| 1e-5 * 10f64.powf(k as f64 * 0.35))
        .collect();
    let path = sparsity_path(&p, &gammas).unwrap();
    for pair in path.windows(2) {
        assert!(pair[1].support_size <= pair[0].support_size);
        assert!(pair[1].relative_loss_percent >= pair[0].relative_loss_percent - 1e-6);
    }
    assert_eq!(path.last().unwrap().support_size, 0);
}

#[test]
fn robust_primary_valley_filling() {
    let grid = path_with_bounds(&[1.0; 3], &[1.0, 2.0, 3.0], &[100.0; 3]);
    let spec = primary_spec(&grid, DVector::from_element(3, 1.0));
    let p = problem(grid, spec, 9.0, Variant::RobustPrimary { w_budget: 1.0 });
    let closed = solve_robust_primary(&p, 1.0).unwrap();
    assert_eq!(closed.m_star, v(&[3.0, 3.0, 3.0]));
    let general = solve_robust(&p.with_variant(Variant::Robust { w_budget: 1.0 }), 1.0).unwrap();
    assert_relative_eq!(general.m_star, closed.m_star, epsilon = 1e-4);
    assert_relative_eq!(general.objective, closed.objective, max_relative = 1e-6);
    match general.extras {
        Extras::Robust {
            complementarity, ..
        } => assert!(complementarity <= 1e-6),
        ref other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn robust_dominates_fixed_disturbances() {
    let mut rng = rng(21);
    let grid = random_grid(&mut rng, 3);
    let spec = laplacian_spec(
        &grid,
        DVector::from_element(3, 1.0),
        DVector::from_element(3, 1.0),
    );
    let budget = grid.inertia_floor().sum() * 2.0;
    let w_bdg = 2.0;
    let p = problem(
        grid.clone(),
        spec.clone(),
        budget,
        Variant::Robust { w_budget: w_bdg },
    );
    let res = solve(&p).unwrap();
    assert!(res.diagnostics.converged);
    let Extras::Robust {
        lambda,
        ref mu,
        ref worst_case_disturbance,
        complementarity,
        ..
    } = res.extras
    else {
        panic!("robust extras expected");
    };
    assert!(complementarity <= 1e-6);
    assert!(mu.iter().all(|&u| u >= 0.0));
    assert_relative_eq!(
        worst_case_disturbance.iter().sum::<f64>(),
        w_bdg,
        epsilon = 1e-12
    );
    assert_relative_eq!(res.objective, w_bdg * lambda, max_relative = 1e-14);
    for _ in 0..10 {
        let raw = random_vec(&mut rng, 3, 0.0, 1.0);
        let w = &raw * (w_bdg / raw.sum());
        let f = h2::h2_value(&grid, &spec.with_disturbance(w).unwrap(), &res.m_star).unwrap();
        assert!(f <= res.objective * (1.0 + 1e-9));
    }
}

#[test]
fn robust_reduces_to_dominant_vertex() {
    // bus 0 has far less damping and a tight cap, so its cost dominates
    let grid = path_with_bounds(&[0.2, 3.0], &[0.5, 0.5], &[1.0, 10.0]);
    let spec = primary_spec(&grid, DVector::from_element(2, 1.0));
    let spec = PerformanceSpec::new(
        spec.angle_penalty.clone(),
        FrequencyPenalty::Diagonal(v(&[1.0, 1.0])),
        v(&[1.0, 1.0]),
    )
    .unwrap();
    let w_bdg = 1.5;
    let p = problem(
        grid.clone(),
        spec.clone(),
        6.0,
        Variant::Robust { w_budget: w_bdg },
    );
    let robust = solve(&p).unwrap();
    let costs = h2::node_costs(&grid, &spec, &robust.m_star).unwrap();
    assert!(costs[0] > costs[1]);
    let fixed = spec.with_disturbance(v(&[w_bdg, 0.0])).unwrap();
    let general = solve_general(&problem(grid, fixed, 6.0, Variant::General)).unwrap();
    assert_relative_eq!(robust.objective, general.objective, max_relative = 1e-6);
}
