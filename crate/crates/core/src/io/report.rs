//! JSON reports.
//!
//! Field order follows the struct definitions. Floating point numbers are
//! rounded to 10 significant digits and written in shortest form, so 0.5 is
//! written as `0.5`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use crate::combine::{FisherResult, PooledResult};
use crate::diagnostics::DiagnosticReport;
use crate::error::{Error, Result};
use crate::robustness::{BreakdownReport, InfluenceRecord, Method};
use crate::searchspace::{SearchSpaceRecord, SpaceSummary};
use crate::simulate::{SimulationConfig, SimulationResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const SIGNIFICANT_DIGITS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema: u32,
    pub dataset_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fisher: Option<FisherResult<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dl: Option<PooledResult<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticReport<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub influence: Option<Vec<InfluenceRecord<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_flip_pvalue: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<BreakdownReport<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub searchspace: Option<Vec<SearchSpaceRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub searchspace_summary: Option<SpaceSummary>,
    pub warnings: Vec<String>,
}

impl AuditReport {
    pub fn new(dataset_label: impl Into<String>) -> Self {
        AuditReport {
            schema: SCHEMA_VERSION,
            dataset_label: dataset_label.into(),
            method: None,
            alpha: None,
            fisher: None,
            dl: None,
            diagnostics: None,
            influence: None,
            min_flip_pvalue: None,
            breakdown: None,
            searchspace: None,
            searchspace_summary: None,
            warnings: Vec::new(),
        }
    }

    /// Adds a warning unless the same text is already present.
    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        if !self.warnings.contains(&msg) {
            self.warnings.push(msg);
        }
    }

    pub fn has_analysis(&self) -> bool {
        self.fisher.is_some()
            || self.dl.is_some()
            || self.diagnostics.is_some()
            || self.influence.is_some()
            || self.breakdown.is_some()
            || self.searchspace_summary.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema: u32,
    pub config: SimulationConfig,
    pub result: SimulationResult,
}

/// Rounds `x` to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_significant(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_significant).and_then(Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with rounded numbers and a trailing newline.
pub fn to_json_string<S: Serialize>(report: &S) -> Result<String> {
    let mut value = serde_json::to_value(report)?;
    round_value(&mut value);
    let mut s = serde_json::to_string_pretty(&value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<S: Serialize>(report: &S, path: &Path) -> Result<()> {
    let text = to_json_string(report)?;
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_report_json(report: &AuditReport, path: &Path) -> Result<()> {
    write_json(report, path)
}

pub fn read_report_json(path: &Path) -> Result<AuditReport> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combine::fisher_combine;

    #[test]
    fn fisher_only_shape() {
        let mut r = AuditReport::new("demo");
        r.fisher = Some(fisher_combine(&[0.5]).unwrap());
        let v: Value = serde_json::from_str(&to_json_string(&r).unwrap()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["schema", "dataset_label", "fisher", "warnings"]);
        assert_eq!(v["schema"], 1);
    }

    #[test]
    fn half_serializes_exactly() {
        let mut r = AuditReport::new("demo");
        let mut f = fisher_combine(&[0.5]).unwrap();
        f.combined_p = 0.5000000000001;
        r.fisher = Some(f);
        let s = to_json_string(&r).unwrap();
        assert!(s.contains("\"combined_p\": 0.5\n") || s.contains("\"combined_p\": 0.5,"), "{s}");
    }

    #[test]
    fn rounding() {
        assert_eq!(round_significant(0.1 + 0.2), 0.3);
        assert_eq!(round_significant(1234567890123.0), 1234567890000.0);
        assert_eq!(round_significant(-2.0e-310), -2.0e-310);
        assert!(round_significant(f64::NAN).is_nan());
    }

    #[test]
    fn warnings_are_deduplicated() {
        let mut r = AuditReport::new("x");
        r.warn("a");
        r.warn("b");
        r.warn("a");
        assert_eq!(r.warnings, ["a", "b"]);
    }
}
