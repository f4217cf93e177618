use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bundled(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn cli(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inertia-opt"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn optimize_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = bundled("three_region.json");
    let s = scenario.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(cli(&["optimize", s, "--seed", "7"], &a).status.success());
    assert!(cli(&["optimize", s, "--seed", "7"], &b).status.success());
    let ra = std::fs::read(a.join("results.json")).unwrap();
    let rb = std::fs::read(b.join("results.json")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(
        std::fs::read(a.join("allocation.csv")).unwrap(),
        std::fs::read(b.join("allocation.csv")).unwrap()
    );
    assert_eq!(read_json(&a.join("results.json"))["scenario"]["seed"], 7);
}

#[test]
fn two_area_sweep_writes_crossover_curve() {
    let dir = tempfile::tempdir().unwrap();
    let s = bundled("two_area_fig3.json");
    let out = cli(
        &["optimize", s.to_str().unwrap(), "--sweep-w", "11"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "w_1,w_2,m_1,m_2,objective,budget_slack,budget_active"
    );
    assert_eq!(lines.count(), 11);
}

#[test]
fn sweep_command_uses_default_points() {
    let dir = tempfile::tempdir().unwrap();
    let s = bundled("two_area_fig3.json");
    assert!(cli(&["sweep", s.to_str().unwrap()], dir.path())
        .status
        .success());
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 102);
}

#[test]
fn evaluate_reports_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let s = bundled("three_region.json");
    let out = cli(&["evaluate", s.to_str().unwrap()], dir.path());
    assert!(out.status.success());
    let r = read_json(&dir.path().join("results.json"));
    let evals = r["evaluations"].as_array().unwrap();
    assert_eq!(evals.len(), 3);
    for e in evals {
        assert_eq!(e["sandwich_holds"], true);
        let (lo, v, hi) = (
            e["lower_bound"].as_f64().unwrap(),
            e["norm_sq"].as_f64().unwrap(),
            e["upper_bound"].as_f64().unwrap(),
        );
        assert!(lo <= v && v <= hi);
    }
}

#[test]
fn sparsity_path_emits_table() {
    let dir = tempfile::tempdir().unwrap();
    let s = bundled("three_region_localized_capacity.json");
    let out = cli(
        &[
            "sparsity-path",
            s.to_str().unwrap(),
            "--gamma-grid",
            "1e-6,1e-3,1",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("sparsity_path.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("gamma,support_size,relative_loss_percent,h2_norm_sq,m_1"));
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    // γ = 1 swamps every marginal gain: nothing added, 100% loss
    assert_eq!(last[1], "0");
    assert_eq!(last[2], "100");
}

#[test]
fn simulate_and_spectrum_write_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let s = bundled("three_region_localized_capacity.json");
    assert!(cli(&["simulate", s.to_str().unwrap()], dir.path())
        .status
        .success());
    let r = read_json(&dir.path().join("results.json"));
    let sims = r["simulations"].as_array().unwrap();
    let effort = |label: &str| {
        sims.iter().find(|x| x["allocation"] == label).unwrap()["effort_energy"]
            .as_f64()
            .unwrap()
    };
    assert!(effort("optimal") <= effort("max_cap"));
    for sim in sims {
        let (a, b) = (
            sim["h2_lyapunov"].as_f64().unwrap(),
            sim["h2_impulse"].as_f64().unwrap(),
        );
        assert!((a - b).abs() <= 1e-3 * a);
    }
    let traj = std::fs::read_to_string(dir.path().join("trajectory_optimal.csv")).unwrap();
    assert!(traj.lines().count() <= 2002);

    assert!(cli(&["spectrum", s.to_str().unwrap()], dir.path())
        .status
        .success());
    let spec = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let zeros = spec.lines().filter(|l| l.ends_with(",true")).count();
    assert_eq!(zeros, 4);
}

#[test]
fn robust_command_reports_worst_case() {
    let dir = tempfile::tempdir().unwrap();
    let s = bundled("two_area_fig3.json");
    assert!(cli(&["robust", s.to_str().unwrap()], dir.path())
        .status
        .success());
    let r = read_json(&dir.path().join("results.json"));
    assert_eq!(r["result"]["variant"], "robust");
    let w = r["result"]["extras"]["worst_case_disturbance"]
        .as_array()
        .unwrap();
    let total: f64 = w.iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn failures_print_machine_readable_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        "{\n  \"schema\": \"inertia-opt/1\",\n  \"buses\": [,]\n}",
    )
    .unwrap();
    let out = cli(&["optimize", bad.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "parse");
    assert!(err["error"]["message"].as_str().unwrap().contains("line 3"));

    let missing = dir.path().join("nope.json");
    let out = cli(&["evaluate", missing.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "io");
}

#[test]
fn iteration_cap_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let s = bundled("two_area_fig3.json");
    let out = Command::new(env!("CARGO_BIN_EXE_inertia-opt"))
        .args(["optimize", s.to_str().unwrap(), "--out"])
        .arg(dir.path())
        .env("INERTIA_OPT_MAX_ITERS", "not-a-number")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "invalid_input");
}
