//! JSON scenario files.
//!
//! A scenario declares the network, the performance weights, the
//! allocation problem and the simulation settings. Loading validates every
//! field and resolves defaults; [`Scenario::normalized`] echoes the result
//! with every default written out, and saving that form then loading it
//! again is a fixed point.
//!
//! ```json
//! {
//!   "schema": "inertia-opt/1",
//!   "buses": [
//!     {"id": 1, "damping": 6.0, "inertia_floor": 0.1, "inertia_cap": 25.0},
//!     {"id": 2, "damping": 1.0, "inertia_floor": 0.1, "inertia_cap": 25.0}
//!   ],
//!   "lines": [{"from": 1, "to": 2, "susceptance": 1.0}],
//!   "performance": {"angle_penalty": "laplacian", "freq_penalty": "explicit",
//!                   "disturbance": "explicit"},
//!   "problem": {"variant": "general", "budget": 25.0}
//! }
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::allocator::{AllocationProblem, Heuristic, SolverOptions, Variant};
use crate::error::{Error, Result};
use crate::grid::{
    average_penalty, laplacian_unchecked, Bus, Edge, FrequencyPenalty, GridModel, PerformanceSpec,
};

pub const SCHEMA: &str = "inertia-opt/1";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusSpec {
    pub id: usize,
    #[serde(default, skip_serializing_if = "is_false")]
    pub passive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia_cap: Option<f64>,
    /// Disturbance variance `w_i`, used with `"disturbance": "explicit"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<f64>,
    /// Frequency penalty `s_i`, used with `"freq_penalty": "explicit"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq_penalty: Option<f64>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
}

/// Angle penalty `N`.
#[derive(Debug, Clone, PartialEq)]
pub enum AnglePenalty {
    /// `N = L` (reduced Laplacian): local error penalization.
    Laplacian,
    /// `N = I - 11ᵀ/n`: deviation from the network average.
    Average,
    /// `N = 0`.
    None,
    /// Laplacian of the listed edges over retained bus ids.
    Edges(Vec<LineSpec>),
}

/// Frequency penalty `S`.
#[derive(Debug, Clone, PartialEq)]
pub enum FreqPenaltyMode {
    /// Per-bus `freq_penalty` values.
    Explicit,
    /// `S = D`.
    Damping,
    /// `S = c·M`.
    CTimesM(f64),
}

/// Disturbance variances `W`.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceMode {
    Explicit,
    /// `W = I/n`.
    Uniform,
    /// Unit variance at one bus id, zero elsewhere.
    Localized(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Performance {
    #[serde(default = "default_angle")]
    pub angle_penalty: AnglePenalty,
    #[serde(default = "default_freq")]
    pub freq_penalty: FreqPenaltyMode,
    #[serde(default = "default_disturbance")]
    pub disturbance: DisturbanceMode,
}

fn default_angle() -> AnglePenalty {
    AnglePenalty::Laplacian
}

fn default_freq() -> FreqPenaltyMode {
    FreqPenaltyMode::Explicit
}

fn default_disturbance() -> DisturbanceMode {
    DisturbanceMode::Explicit
}

impl Default for Performance {
    fn default() -> Self {
        Performance {
            angle_penalty: default_angle(),
            freq_penalty: default_freq(),
            disturbance: default_disturbance(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    General,
    PrimaryEffort,
    UniformRatio,
    Sparse,
    Robust,
    RobustPrimary,
}

impl FromStr for VariantName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| Error::invalid("variant", format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default = "default_variant")]
    pub variant: VariantName,
    pub budget: f64,
    /// ℓ1 weight for the sparse variant.
    #[serde(default)]
    pub gamma: f64,
    /// Disturbance budget for the robust variants.
    #[serde(default = "one")]
    pub w_budget: f64,
    #[serde(default = "all_heuristics")]
    pub heuristics: Vec<Heuristic>,
}

fn default_variant() -> VariantName {
    VariantName::General
}

fn one() -> f64 {
    1.0
}

fn all_heuristics() -> Vec<Heuristic> {
    vec![Heuristic::NoAdd, Heuristic::Uniform, Heuristic::MaxCap]
}

impl ProblemSpec {
    pub fn variant(&self) -> Variant {
        match self.variant {
            VariantName::General => Variant::General,
            VariantName::PrimaryEffort => Variant::PrimaryEffort,
            VariantName::UniformRatio => Variant::UniformRatio,
            VariantName::Sparse => Variant::Sparse { gamma: self.gamma },
            VariantName::Robust => Variant::Robust {
                w_budget: self.w_budget,
            },
            VariantName::RobustPrimary => Variant::RobustPrimary {
                w_budget: self.w_budget,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    /// Bus id receiving the impulse; the first retained bus when absent.
    #[serde(default)]
    pub impulse_node: Option<usize>,
    #[serde(default = "one")]
    pub strength: f64,
    /// Seconds; chosen by the tail criterion when absent.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Seconds; half the largest admissible step when absent.
    #[serde(default)]
    pub dt: Option<f64>,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            impulse_node: None,
            strength: 1.0,
            horizon: None,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub buses: Vec<BusSpec>,
    #[serde(default)]
    pub lines: Vec<LineSpec>,
    #[serde(default)]
    pub performance: Performance,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// Validated scenario with its model objects built.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub grid: GridModel,
    pub spec: PerformanceSpec,
    pub problem: AllocationProblem,
}

impl Scenario {
    /// Parses JSON text. Syntax errors carry line and column; type errors
    /// carry the field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|err| {
            let path = err.path().to_string();
            let inner = err.into_inner();
            if inner.is_data() {
                Error::invalid(path, strip_position(&inner))
            } else {
                Error::Parse {
                    line: inner.line(),
                    column: inner.column(),
                    message: strip_position(&inner),
                }
            }
        })?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    /// Every default resolved and written out.
    pub fn normalized(&self) -> Scenario {
        let mut s = self.clone();
        for b in &mut s.buses {
            if b.passive {
                continue;
            }
            b.disturbance.get_or_insert(1.0);
            b.freq_penalty.get_or_insert(1.0);
        }
        s
    }

    fn bus_models(&self) -> Result<Vec<Bus>> {
        let mut out = Vec::with_capacity(self.buses.len());
        for (k, b) in self.buses.iter().enumerate() {
            let field = |name: &str| format!("buses[{k}].{name}");
            if b.passive {
                for (name, v) in [
                    ("damping", b.damping),
                    ("inertia_floor", b.inertia_floor),
                    ("inertia_cap", b.inertia_cap),
                    ("disturbance", b.disturbance),
                    ("freq_penalty", b.freq_penalty),
                ] {
                    if v.is_some() {
                        return Err(Error::invalid(field(name), "not allowed on a passive bus"));
                    }
                }
                out.push(Bus::passive(b.id));
                continue;
            }
            let required = |name: &str, v: Option<f64>| {
                v.ok_or_else(|| Error::invalid(field(name), "required for a non-passive bus"))
            };
            out.push(Bus {
                id: b.id,
                damping: required("damping", b.damping)?,
                inertia_floor: required("inertia_floor", b.inertia_floor)?,
                inertia_cap: required("inertia_cap", b.inertia_cap)?,
                disturbance_weight: b.disturbance.unwrap_or(1.0),
                freq_penalty: b.freq_penalty.unwrap_or(1.0),
                passive: false,
            });
        }
        Ok(out)
    }

    pub fn grid(&self) -> Result<GridModel> {
        if self.schema != SCHEMA {
            return Err(Error::invalid(
                "schema",
                format!("expected `{SCHEMA}`, found `{}`", self.schema),
            ));
        }
        let lines = self
            .lines
            .iter()
            .map(|l| Edge::new(l.from, l.to, l.susceptance))
            .collect();
        GridModel::new(self.bus_models()?, lines)
    }

    pub fn performance_spec(&self, grid: &GridModel) -> Result<PerformanceSpec> {
        let n = grid.n();
        let ids = grid.retained_ids();
        let angle = match &self.performance.angle_penalty {
            AnglePenalty::Laplacian => grid.laplacian().clone(),
            AnglePenalty::Average => average_penalty(n),
            AnglePenalty::None => DMatrix::zeros(n, n),
            AnglePenalty::Edges(edges) => {
                let mut positional = Vec::with_capacity(edges.len());
                for (k, e) in edges.iter().enumerate() {
                    let lookup = |id: usize, end: &str| {
                        grid.reduced_index(id).ok_or_else(|| {
                            Error::invalid(
                                format!("performance.angle_penalty.edges[{k}].{end}"),
                                format!("{id} is not a retained bus id"),
                            )
                        })
                    };
                    positional.push(Edge::new(
                        lookup(e.from, "from")?,
                        lookup(e.to, "to")?,
                        e.susceptance,
                    ));
                }
                laplacian_unchecked(&positional, n).map_err(|err| match err {
                    Error::InvalidInput { field, reason } => Error::InvalidInput {
                        field: format!(
                            "performance.angle_penalty.{}",
                            field.replace(".weight", ".susceptance")
                        ),
                        reason,
                    },
                    other => other,
                })?
            }
        };
        let retained: Vec<&Bus> = grid.retained_buses().collect();
        let freq = match self.performance.freq_penalty {
            FreqPenaltyMode::Explicit => FrequencyPenalty::Diagonal(grid.freq_penalty()),
            FreqPenaltyMode::Damping => FrequencyPenalty::Diagonal(grid.damping()),
            FreqPenaltyMode::CTimesM(c) => FrequencyPenalty::KineticEnergy(c),
        };
        let w = match self.performance.disturbance {
            DisturbanceMode::Explicit => {
                DVector::from_iterator(n, retained.iter().map(|b| b.disturbance_weight))
            }
            DisturbanceMode::Uniform => DVector::from_element(n, 1.0 / n as f64),
            DisturbanceMode::Localized(id) => {
                let k = grid.reduced_index(id).ok_or_else(|| {
                    Error::invalid(
                        "performance.disturbance",
                        format!("localized bus {id} is not a retained bus id (retained: {ids:?})"),
                    )
                })?;
                DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 })
            }
        };
        PerformanceSpec::new(angle, freq, w).map_err(|err| match err {
            Error::InvalidInput { field, reason } if !field.starts_with("performance") => {
                Error::InvalidInput {
                    field: format!("performance.{field}"),
                    reason,
                }
            }
            other => other,
        })
    }

    /// Builds and validates the full model.
    pub fn load(&self) -> Result<Loaded> {
        let grid = self.grid()?;
        let spec = self.performance_spec(&grid)?;
        let mut seen = BTreeSet::new();
        for (k, h) in self.problem.heuristics.iter().enumerate() {
            if !seen.insert(*h) {
                return Err(Error::invalid(
                    format!("problem.heuristics[{k}]"),
                    format!("duplicate heuristic `{h}`"),
                ));
            }
        }
        if let Some(id) = self.simulation.impulse_node {
            if grid.reduced_index(id).is_none() {
                return Err(Error::invalid(
                    "simulation.impulse_node",
                    format!("{id} is not a retained bus id"),
                ));
            }
        }
        let mut problem = AllocationProblem::new(
            grid.clone(),
            spec.clone(),
            self.problem.budget,
            self.problem.variant(),
        )
        .map_err(|err| match err {
            Error::InvalidInput { field, reason } if !field.starts_with("problem") => {
                Error::InvalidInput {
                    field: format!("problem.{field}"),
                    reason,
                }
            }
            other => other,
        })?;
        problem.heuristics = self.problem.heuristics.clone();
        problem.options = SolverOptions {
            seed: self.seed,
            ..SolverOptions::from_env()?
        };
        Ok(Loaded {
            scenario: self.normalized(),
            grid,
            spec,
            problem,
        })
    }
}

/// serde_json appends " at line L column C" to its messages.
fn strip_position(err: &serde_json::Error) -> String {
    let msg = err.to_string();
    match msg.rfind(" at line ") {
        Some(pos) => msg[..pos].to_string(),
        None => msg,
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Loaded> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_json(&text)?.load()
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, scenario.to_json())?;
    Ok(())
}

impl Serialize for AnglePenalty {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Edges<'a> {
            edges: &'a [LineSpec],
        }
        match self {
            AnglePenalty::Laplacian => s.serialize_str("laplacian"),
            AnglePenalty::Average => s.serialize_str("average"),
            AnglePenalty::None => s.serialize_str("none"),
            AnglePenalty::Edges(edges) => Edges { edges }.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for AnglePenalty {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Mode(String),
            Edges { edges: Vec<LineSpec> },
        }
        match Raw::deserialize(d)? {
            Raw::Mode(m) => match m.as_str() {
                "laplacian" => Ok(AnglePenalty::Laplacian),
                "average" => Ok(AnglePenalty::Average),
                "none" => Ok(AnglePenalty::None),
                other => Err(de::Error::custom(format!(
                    "unknown angle penalty `{other}`; expected laplacian, average, none or {{\"edges\": [...]}}"
                ))),
            },
            Raw::Edges { edges } => Ok(AnglePenalty::Edges(edges)),
        }
    }
}

impl Serialize for FreqPenaltyMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Kinetic {
            c_times_m: f64,
        }
        match self {
            FreqPenaltyMode::Explicit => s.serialize_str("explicit"),
            FreqPenaltyMode::Damping => s.serialize_str("damping"),
            FreqPenaltyMode::CTimesM(c) => Kinetic { c_times_m: *c }.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for FreqPenaltyMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Mode(String),
            Kinetic { c_times_m: f64 },
        }
        match Raw::deserialize(d)? {
            Raw::Mode(m) => match m.as_str() {
                "explicit" => Ok(FreqPenaltyMode::Explicit),
                "damping" => Ok(FreqPenaltyMode::Damping),
                other => Err(de::Error::custom(format!(
                    "unknown frequency penalty `{other}`; expected explicit, damping or {{\"c_times_m\": c}}"
                ))),
            },
            Raw::Kinetic { c_times_m } => Ok(FreqPenaltyMode::CTimesM(c_times_m)),
        }
    }
}

impl fmt::Display for DisturbanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DisturbanceMode::Explicit => f.write_str("explicit"),
            DisturbanceMode::Uniform => f.write_str("uniform"),
            DisturbanceMode::Localized(id) => write!(f, "localized:{id}"),
        }
    }
}

impl FromStr for DisturbanceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "explicit" => Ok(DisturbanceMode::Explicit),
            "uniform" => Ok(DisturbanceMode::Uniform),
            _ => s
                .strip_prefix("localized:")
                .and_then(|id| id.trim().parse().ok())
                .map(DisturbanceMode::Localized)
                .ok_or_else(|| {
                    format!("unknown disturbance `{s}`; expected explicit, uniform or localized:<bus id>")
                }),
        }
    }
}

impl Serialize for DisturbanceMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DisturbanceMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(de::Error::custom)
    }
}
