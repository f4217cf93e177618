//! Batch commands behind the `inertia-opt` binary.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use serde::Serialize;

use crate::allocator::{self, heuristic_allocations, AllocationProblem, Heuristic, Variant};
use crate::error::{Error, Result};
use crate::grid::assemble_state_space;
use crate::h2;
use crate::report::{self, sig, AllocationSummary};
use crate::scenario::{Loaded, Scenario, VariantName};
use crate::simulator::{self, Mode};

/// Rows kept in trajectory CSVs; longer runs are decimated.
pub const MAX_TRAJECTORY_ROWS: usize = 2001;
pub const DEFAULT_SWEEP_POINTS: usize = 101;
pub const DEFAULT_GAMMA_GRID: &str = "log:1e-6:1e-3:25";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Evaluate,
    Optimize,
    Sweep,
    Simulate,
    Spectrum,
    SparsityPath,
    Robust,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Evaluate => "evaluate",
            Command::Optimize => "optimize",
            Command::Sweep => "sweep",
            Command::Simulate => "simulate",
            Command::Spectrum => "spectrum",
            Command::SparsityPath => "sparsity-path",
            Command::Robust => "robust",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "evaluate" => Command::Evaluate,
            "optimize" => Command::Optimize,
            "sweep" => Command::Sweep,
            "simulate" => Command::Simulate,
            "spectrum" => Command::Spectrum,
            "sparsity-path" => Command::SparsityPath,
            "robust" => Command::Robust,
            _ => return Err(Error::invalid("command", format!("unknown command `{s}`"))),
        })
    }
}

/// `log:a:b:K`, `lin:a:b:K` or a comma-separated list.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaGrid(pub Vec<f64>);

impl FromStr for GammaGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::invalid("gamma_grid", format!("`{s}`: {why}"));
        let parts: Vec<&str> = s.split(':').collect();
        if let [kind @ ("log" | "lin"), a, b, k] = parts[..] {
            let a: f64 = a.parse().map_err(|_| bad("bad start"))?;
            let b: f64 = b.parse().map_err(|_| bad("bad end"))?;
            let k: usize = k.parse().map_err(|_| bad("bad count"))?;
            if k == 0 {
                return Err(bad("count must be >= 1"));
            }
            let t = |i: usize| {
                if k == 1 {
                    0.0
                } else {
                    i as f64 / (k - 1) as f64
                }
            };
            let grid = if kind == "log" {
                if !(a > 0.0 && b > 0.0) {
                    return Err(bad("log grid bounds must be > 0"));
                }
                (0..k)
                    .map(|i| (a.ln() + t(i) * (b.ln() - a.ln())).exp())
                    .collect()
            } else {
                (0..k).map(|i| a + t(i) * (b - a)).collect()
            };
            return Ok(GammaGrid(grid));
        }
        let values = s
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("expected log:a:b:K, lin:a:b:K or a comma list"))?;
        Ok(GammaGrid(values))
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub gamma_grid: Option<GammaGrid>,
    pub sweep_w: Option<usize>,
    pub variant: Option<VariantName>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            out: PathBuf::from("."),
            seed: None,
            gamma_grid: None,
            sweep_w: None,
            variant: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    /// One-line human summary.
    pub summary: String,
}

#[derive(Serialize)]
struct Results<'a, P: Serialize> {
    command: &'static str,
    scenario: &'a Scenario,
    #[serde(flatten)]
    payload: P,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        report::write_json(&path, value)?;
        self.files.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let path = self.dir.join(name);
        report::write_csv(&path, header, rows)?;
        self.files.push(path);
        Ok(())
    }
}

/// Applies the command-line overrides, validates, and executes `command`.
pub fn run(scenario: &Scenario, command: Command, opts: &RunOptions) -> Result<RunOutput> {
    let mut scenario = scenario.clone();
    if let Some(seed) = opts.seed {
        scenario.seed = seed;
    }
    if let Some(v) = opts.variant {
        scenario.problem.variant = v;
    }
    if command == Command::Robust
        && !matches!(
            scenario.problem.variant,
            VariantName::Robust | VariantName::RobustPrimary
        )
    {
        scenario.problem.variant = VariantName::Robust;
    }
    let loaded = scenario.load()?;
    let mut w = Writer::new(&opts.out)?;
    let summary = match command {
        Command::Evaluate => evaluate(&loaded, &mut w)?,
        Command::Optimize | Command::Robust => optimize(&loaded, opts, &mut w, command)?,
        Command::Sweep => sweep_only(&loaded, opts, &mut w)?,
        Command::Simulate => simulate(&loaded, &mut w)?,
        Command::Spectrum => spectrum(&loaded, &mut w)?,
        Command::SparsityPath => sparsity(&loaded, opts, &mut w)?,
    };
    Ok(RunOutput {
        files: w.files,
        summary,
    })
}

fn ids(loaded: &Loaded) -> Vec<usize> {
    loaded.grid.retained_ids()
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn results<P: Serialize>(loaded: &Loaded, command: Command, payload: P) -> Results<'_, P> {
    Results {
        command: command.name(),
        scenario: &loaded.scenario,
        payload,
    }
}

/// Requested heuristic allocations, labelled.
fn labelled_heuristics(problem: &AllocationProblem) -> Result<Vec<(String, DVector<f64>)>> {
    Ok(heuristic_allocations(problem)?
        .into_iter()
        .map(|(h, a)| (h.to_string(), DVector::from_vec(a.m)))
        .collect())
}

#[derive(Serialize)]
struct Evaluation {
    allocation: String,
    m: Vec<f64>,
    feasible: bool,
    norm_sq: f64,
    lower_bound: f64,
    upper_bound: f64,
    sandwich_holds: bool,
    per_bus_contribution: Vec<f64>,
}

fn evaluate(loaded: &Loaded, w: &mut Writer) -> Result<String> {
    let problem = &loaded.problem;
    let mut evaluations = Vec::new();
    for (label, m) in labelled_heuristics(problem)? {
        let ss = assemble_state_space(&loaded.grid, &loaded.spec, &m)?;
        let r = h2::h2_norm_squared(&ss)?;
        let tol = 1e-9 * r.norm_sq.abs().max(1e-300);
        evaluations.push(Evaluation {
            feasible: problem.is_feasible(&m),
            m: to_vec(&m),
            norm_sq: r.norm_sq,
            lower_bound: r.lower_bound,
            upper_bound: r.upper_bound,
            sandwich_holds: r.lower_bound <= r.norm_sq + tol && r.norm_sq <= r.upper_bound + tol,
            per_bus_contribution: to_vec(&r.per_bus_contribution),
            allocation: label,
        });
    }
    #[derive(Serialize)]
    struct Payload {
        bus_ids: Vec<usize>,
        evaluations: Vec<Evaluation>,
    }
    let summary = evaluations
        .iter()
        .map(|e| {
            format!(
                "{}: {} <= {} <= {}",
                e.allocation,
                sig(e.lower_bound),
                sig(e.norm_sq),
                sig(e.upper_bound)
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    let violation = evaluations
        .iter()
        .find(|e| !e.sandwich_holds)
        .map(|e| Error::BoundViolation {
            allocation: e.allocation.clone(),
            norm_sq: e.norm_sq,
            lower: e.lower_bound,
            upper: e.upper_bound,
        });
    w.json(
        "results.json",
        &results(
            loaded,
            Command::Evaluate,
            Payload {
                bus_ids: ids(loaded),
                evaluations,
            },
        ),
    )?;
    match violation {
        Some(err) => Err(err),
        None => Ok(summary),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub w1: f64,
    pub w2: f64,
    pub m: Vec<f64>,
    pub objective: f64,
    pub budget_slack: f64,
    pub budget_active: bool,
}

/// Moves unit disturbance weight from the second retained bus (`w₁ = 0`) to
/// the first (`w₁ = 1`) in `points` steps; other buses keep their weights.
pub fn sweep_disturbance(problem: &AllocationProblem, points: usize) -> Result<Vec<SweepPoint>> {
    let n = problem.n();
    if n < 2 {
        return Err(Error::invalid(
            "sweep_w",
            "needs at least two retained buses",
        ));
    }
    if points < 2 {
        return Err(Error::invalid("sweep_w", "needs at least two points"));
    }
    let mut out = Vec::with_capacity(points);
    for k in 0..points {
        let w1 = k as f64 / (points - 1) as f64;
        let mut wv = problem.spec.disturbance.clone();
        wv[0] = w1;
        wv[1] = 1.0 - w1;
        let mut p = problem.clone();
        p.spec = problem.spec.with_disturbance(wv)?;
        let r = allocator::solve(&p)?;
        out.push(SweepPoint {
            w1,
            w2: 1.0 - w1,
            m: to_vec(&r.m_star),
            objective: r.objective,
            budget_slack: r.budget_slack,
            budget_active: r.budget_active,
        });
    }
    Ok(out)
}

fn write_sweep(loaded: &Loaded, points: &[SweepPoint], w: &mut Writer) -> Result<()> {
    let mut header = vec!["w_1".to_string(), "w_2".to_string()];
    header.extend(ids(loaded).iter().map(|id| format!("m_{id}")));
    header.extend(["objective", "budget_slack", "budget_active"].map(String::from));
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let mut row = vec![sig(p.w1), sig(p.w2)];
            row.extend(p.m.iter().map(|x| sig(*x)));
            row.extend([
                sig(p.objective),
                sig(p.budget_slack),
                p.budget_active.to_string(),
            ]);
            row
        })
        .collect();
    w.csv("sweep.csv", &header, &rows)
}

fn optimize(
    loaded: &Loaded,
    opts: &RunOptions,
    w: &mut Writer,
    command: Command,
) -> Result<String> {
    let problem = &loaded.problem;
    let result = allocator::solve(problem)?;
    let heuristics = heuristic_allocations(problem)?;
    let sweep = match opts.sweep_w {
        Some(k) => Some(sweep_disturbance(problem, k)?),
        None => None,
    };

    let bus_ids = ids(loaded);
    let mut header = vec![
        "bus_id".to_string(),
        "floor".into(),
        "cap".into(),
        "m_star".into(),
    ];
    header.extend(heuristics.keys().map(|h| h.to_string()));
    let rows: Vec<Vec<String>> = (0..problem.n())
        .map(|i| {
            let mut row = vec![
                bus_ids[i].to_string(),
                sig(problem.lower[i]),
                sig(problem.upper[i]),
                sig(result.m_star[i]),
            ];
            row.extend(heuristics.values().map(|a| sig(a.m[i])));
            row
        })
        .collect();
    w.csv("allocation.csv", &header, &rows)?;
    if let Some(points) = &sweep {
        write_sweep(loaded, points, w)?;
    }

    #[derive(Serialize)]
    struct Payload {
        result: AllocationSummary,
        heuristics: BTreeMap<Heuristic, allocator::HeuristicAllocation>,
        #[serde(skip_serializing_if = "Option::is_none")]
        sweep: Option<Vec<SweepPoint>>,
    }
    let summary = format!(
        "{}: objective {} (norm_sq {}), converged {}",
        result.variant.name(),
        sig(result.objective),
        sig(result.h2_norm_sq),
        result.diagnostics.converged
    );
    w.json(
        "results.json",
        &results(
            loaded,
            command,
            Payload {
                result: AllocationSummary::new(&result, bus_ids),
                heuristics,
                sweep,
            },
        ),
    )?;
    Ok(summary)
}

fn sweep_only(loaded: &Loaded, opts: &RunOptions, w: &mut Writer) -> Result<String> {
    let points = sweep_disturbance(
        &loaded.problem,
        opts.sweep_w.unwrap_or(DEFAULT_SWEEP_POINTS),
    )?;
    write_sweep(loaded, &points, w)?;
    #[derive(Serialize)]
    struct Payload<'a> {
        bus_ids: Vec<usize>,
        sweep: &'a [SweepPoint],
    }
    w.json(
        "results.json",
        &results(
            loaded,
            Command::Sweep,
            Payload {
                bus_ids: ids(loaded),
                sweep: &points,
            },
        ),
    )?;
    Ok(format!("{} sweep points", points.len()))
}

/// Optimal allocation first, then the requested heuristics.
fn compared_allocations(loaded: &Loaded) -> Result<Vec<(String, DVector<f64>)>> {
    let mut out = vec![(
        "optimal".to_string(),
        allocator::solve(&loaded.problem)?.m_star,
    )];
    out.extend(labelled_heuristics(&loaded.problem)?);
    Ok(out)
}

#[derive(Serialize)]
struct SimulationRecord {
    allocation: String,
    m: Vec<f64>,
    impulse_node: usize,
    dt: f64,
    horizon: f64,
    h2_lyapunov: f64,
    h2_impulse: f64,
    tail_ratio: f64,
    horizon_ok: bool,
    /// `Σ_i ∫ (m_i ω̇_i)² dt` for the replayed impulse.
    effort_energy: f64,
    /// `∫ ωᵀDω dt` for the replayed impulse.
    primary_effort_energy: f64,
}

fn simulate(loaded: &Loaded, w: &mut Writer) -> Result<String> {
    let sim = &loaded.scenario.simulation;
    let bus_ids = ids(loaded);
    let node_id = sim.impulse_node.unwrap_or(bus_ids[0]);
    let node = loaded
        .grid
        .reduced_index(node_id)
        .expect("validated at load");
    let mut records = Vec::new();
    for (label, m) in compared_allocations(loaded)? {
        let ss = assemble_state_space(&loaded.grid, &loaded.spec, &m)?;
        let dt = sim.dt.unwrap_or_else(|| 0.5 * simulator::max_step(&ss));
        let energy = match sim.horizon {
            Some(t) => simulator::h2_via_impulse(&ss, t, dt)?,
            None => simulator::h2_via_impulse_auto(&ss, dt)?,
        };
        let traj = simulator::impulse_response(&ss, node, sim.strength, energy.horizon, dt)?;
        let effort = simulator::control_effort(&ss, &traj);
        let effort_sq: Vec<f64> = (0..traj.len())
            .map(|k| effort.column(k).norm_squared())
            .collect();
        let primary: Vec<f64> = (0..traj.len())
            .map(|k| {
                traj.omega
                    .column(k)
                    .iter()
                    .zip(ss.damping.iter())
                    .map(|(o, d)| d * o * o)
                    .sum()
            })
            .collect();

        let stride = traj.len().div_ceil(MAX_TRAJECTORY_ROWS).max(1);
        let keep: Vec<usize> = (0..traj.len()).step_by(stride).collect();
        let thin = simulator::Trajectory {
            time: keep.iter().map(|&k| traj.time[k]).collect(),
            theta: traj.theta.select_columns(&keep),
            omega: traj.omega.select_columns(&keep),
            input: traj.input.clone(),
        };
        let path = w.dir.join(format!("trajectory_{label}.csv"));
        let file = std::fs::File::create(&path)?;
        simulator::write_trajectory_csv(file, &thin, Some(&effort.select_columns(&keep)))?;
        w.files.push(path);

        records.push(SimulationRecord {
            m: to_vec(&m),
            impulse_node: node_id,
            dt,
            horizon: energy.horizon,
            h2_lyapunov: h2::h2_norm_squared(&ss)?.norm_sq,
            h2_impulse: energy.value,
            tail_ratio: energy.tail_ratio,
            horizon_ok: energy.horizon_ok,
            effort_energy: simulator::simpson(&effort_sq, dt),
            primary_effort_energy: simulator::simpson(&primary, dt),
            allocation: label,
        });
    }
    #[derive(Serialize)]
    struct Payload {
        bus_ids: Vec<usize>,
        simulations: Vec<SimulationRecord>,
    }
    let summary = records
        .iter()
        .map(|r| format!("{}: effort {}", r.allocation, sig(r.effort_energy)))
        .collect::<Vec<_>>()
        .join("; ");
    w.json(
        "results.json",
        &results(
            loaded,
            Command::Simulate,
            Payload {
                bus_ids,
                simulations: records,
            },
        ),
    )?;
    Ok(summary)
}

fn spectrum(loaded: &Loaded, w: &mut Writer) -> Result<String> {
    let mut spectra: BTreeMap<String, Vec<Mode>> = BTreeMap::new();
    let mut order = Vec::new();
    for (label, m) in compared_allocations(loaded)? {
        let ss = assemble_state_space(&loaded.grid, &loaded.spec, &m)?;
        spectra.insert(label.clone(), simulator::eigen_spectrum(&ss));
        order.push(label);
    }
    let header = [
        "allocation",
        "re",
        "im",
        "modulus",
        "damping_ratio",
        "structural_zero",
    ]
    .map(String::from);
    let mut rows = Vec::new();
    for label in &order {
        for mode in &spectra[label] {
            rows.push(vec![
                label.clone(),
                sig(mode.re),
                sig(mode.im),
                sig(mode.modulus),
                mode.damping_ratio.map(sig).unwrap_or_default(),
                mode.structural_zero.to_string(),
            ]);
        }
    }
    w.csv("spectrum.csv", &header, &rows)?;
    #[derive(Serialize)]
    struct Payload {
        spectra: BTreeMap<String, Vec<Mode>>,
    }
    let worst = spectra
        .iter()
        .map(|(k, modes)| {
            let zeta = modes
                .iter()
                .filter_map(|m| m.damping_ratio)
                .fold(f64::INFINITY, f64::min);
            format!("{k}: min damping ratio {}", sig(zeta))
        })
        .collect::<Vec<_>>()
        .join("; ");
    w.json(
        "results.json",
        &results(loaded, Command::Spectrum, Payload { spectra }),
    )?;
    Ok(worst)
}

fn sparsity(loaded: &Loaded, opts: &RunOptions, w: &mut Writer) -> Result<String> {
    let grid = match &opts.gamma_grid {
        Some(g) => g.clone(),
        None => DEFAULT_GAMMA_GRID.parse()?,
    };
    let problem = loaded.problem.with_variant(Variant::General);
    let path = allocator::sparsity_path(&problem, &grid.0)?;
    let bus_ids = ids(loaded);
    let mut header = [
        "gamma",
        "support_size",
        "relative_loss_percent",
        "h2_norm_sq",
    ]
    .map(String::from)
    .to_vec();
    header.extend(bus_ids.iter().map(|id| format!("m_{id}")));
    let rows: Vec<Vec<String>> = path
        .iter()
        .map(|p| {
            let mut row = vec![
                sig(p.gamma),
                p.support_size.to_string(),
                sig(p.relative_loss_percent),
                sig(p.h2_norm_sq),
            ];
            row.extend(p.m.iter().map(|x| sig(*x)));
            row
        })
        .collect();
    w.csv("sparsity_path.csv", &header, &rows)?;
    #[derive(Serialize)]
    struct Payload<'a> {
        bus_ids: Vec<usize>,
        path: &'a [allocator::SparsityPoint],
    }
    let summary = format!(
        "support {} -> {} over {} gamma values",
        path.first().map_or(0, |p| p.support_size),
        path.last().map_or(0, |p| p.support_size),
        path.len()
    );
    w.json(
        "results.json",
        &results(
            loaded,
            Command::SparsityPath,
            Payload {
                bus_ids,
                path: &path,
            },
        ),
    )?;
    Ok(summary)
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_grids() {
        let g: GammaGrid = "log:1e-6:1e-3:4".parse().unwrap();
        let expect = [1e-6, 1e-5, 1e-4, 1e-3];
        for (a, b) in g.0.iter().zip(expect) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
        let g: GammaGrid = "lin:0:1:3".parse().unwrap();
        assert_eq!(g.0, vec![0.0, 0.5, 1.0]);
        let g: GammaGrid = "0.1, 0.2".parse().unwrap();
        assert_eq!(g.0, vec![0.1, 0.2]);
        assert!("log:0:1:3".parse::<GammaGrid>().is_err());
        assert!("abc".parse::<GammaGrid>().is_err());
    }

    #[test]
    fn commands_parse() {
        for c in [
            Command::Evaluate,
            Command::Optimize,
            Command::Sweep,
            Command::Simulate,
            Command::Spectrum,
            Command::SparsityPath,
            Command::Robust,
        ] {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
    }
}
