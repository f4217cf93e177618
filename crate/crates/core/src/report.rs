//! Result files: `results.json` and plain CSV plot data.
//!
//! Every float leaves the program rounded to 12 significant digits, so
//! output is byte-stable across platforms with identical inputs.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::allocator::{AllocationResult, Diagnostics, Extras};
use crate::error::Result;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// `x` rounded to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

/// Shortest text for `round_sig(x)`.
pub fn sig(x: f64) -> String {
    let r = round_sig(x);
    if r == 0.0 {
        // drop the sign of negative zero
        return "0".to_string();
    }
    format!("{r}")
}

/// Rounds every float inside a JSON value in place.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let r = round_sig(n.as_f64().unwrap_or(0.0));
            *v = serde_json::Number::from_f64(if r == 0.0 { 0.0 } else { r })
                .map(Value::Number)
                .unwrap_or(Value::Null);
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with rounded floats and a trailing newline.
pub fn to_rounded_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(std::io::Error::other)?;
    round_json(&mut v);
    let mut text = serde_json::to_string_pretty(&v).map_err(std::io::Error::other)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    fs::write(path, to_rounded_json(value)?)?;
    Ok(())
}

/// Writes a CSV whose cells are already formatted.
pub fn write_csv(path: impl AsRef<Path>, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(std::io::Error::from)?;
    w.write_record(header).map_err(std::io::Error::from)?;
    for row in rows {
        w.write_record(row).map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

/// Serializable view of an allocation, with bus ids attached.
#[derive(Debug, Clone, Serialize)]
pub struct AllocationSummary {
    pub variant: &'static str,
    pub bus_ids: Vec<usize>,
    pub m_star: Vec<f64>,
    pub objective: f64,
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

impl AllocationSummary {
    pub fn new(result: &AllocationResult, bus_ids: Vec<usize>) -> Self {
        AllocationSummary {
            variant: result.variant.name(),
            bus_ids,
            m_star: result.m_star.iter().copied().collect(),
            objective: result.objective,
            h2_norm_sq: result.h2_norm_sq,
            lower_bound: result.lower_bound,
            upper_bound: result.upper_bound,
            budget_slack: result.budget_slack,
            budget_active: result.budget_active,
            at_lower: result.at_lower.clone(),
            at_upper: result.at_upper.clone(),
            extras: result.extras.clone(),
            diagnostics: result.diagnostics.clone(),
        }
    }
}
