use inertia_demo::{impulse, impulse_points, spectrum, spectrum_modes, sweep, sweep_points};

#[test]
fn sweep_moves_inertia_toward_the_disturbance() {
    let s = sweep_points(6.0, 1.0, 1.0, 15.0, 25.0, 21).unwrap();
    assert_eq!(s.w1.len(), 21);
    assert!(s.m2[0] > s.m1[0]);
    assert!(s.m1[20] > s.m2[20]);
    assert!(s.m1.windows(2).all(|p| p[1] >= p[0] - 1e-6));
}

#[test]
fn impulse_is_decimated_and_decays() {
    let r = impulse_points(6.0, 1.0, 1.0, 3.0, 2.0, 2, 40.0).unwrap();
    assert!(r.t.len() <= inertia_demo::MAX_POINTS + 1);
    assert_eq!(r.omega2[0], 1.0 / 2.0);
    assert!(r.omega1.last().unwrap().abs() < 1e-6);
    assert!(r.h2_norm_sq > 0.0);
}

#[test]
fn spectrum_tags_one_zero() {
    let modes = spectrum_modes(6.0, 1.0, 1.0, 3.0, 2.0).unwrap();
    assert_eq!(modes.len(), 4);
    assert_eq!(modes.iter().filter(|m| m.structural_zero).count(), 1);
}

#[test]
fn exports_return_json() {
    let v: serde_json::Value = serde_json::from_str(&sweep(6.0, 1.0, 1.0, 15.0, 25.0, 5)).unwrap();
    assert_eq!(v["m1"].as_array().unwrap().len(), 5);
    let v: serde_json::Value = serde_json::from_str(&spectrum(6.0, 1.0, 1.0, 3.0, 2.0)).unwrap();
    assert!(v.is_array());
    let v: serde_json::Value =
        serde_json::from_str(&impulse(6.0, 1.0, 1.0, 3.0, 2.0, 7, 10.0)).unwrap();
    assert!(v["error"].as_str().unwrap().contains("bus 7"));
    let v: serde_json::Value = serde_json::from_str(&sweep(6.0, 1.0, 1.0, 15.0, 0.1, 5)).unwrap();
    assert!(v["error"].is_string());
}
