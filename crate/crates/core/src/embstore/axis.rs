use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;

/// Allowed deviation of an axis vector's Euclidean norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisMethod {
    Ridge,
    SgdLinear,
    Extremes,
    ZeroShotSingle,
    ZeroShotDiff,
    Raw,
}

impl fmt::Display for AxisMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AxisMethod::Ridge => "ridge",
            AxisMethod::SgdLinear => "sgd_linear",
            AxisMethod::Extremes => "extremes",
            AxisMethod::ZeroShotSingle => "zero_shot_single",
            AxisMethod::ZeroShotDiff => "zero_shot_diff",
            AxisMethod::Raw => "raw",
        })
    }
}

/// A unit direction in embedding space plus the metadata needed to trace
/// where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisRecord {
    pub axis_id: String,
    pub attribute_name: String,
    pub dim: usize,
    pub vector: Vec<f64>,
    /// Intercept added to projections; irrelevant to the ordering.
    #[serde(default)]
    pub offset: f64,
    pub method: AxisMethod,
    #[serde(default)]
    pub provenance: BTreeMap<String, serde_json::Value>,
    pub created_at: DateTime<Utc>,
}

impl AxisRecord {
    /// Builds a record from an already-unit vector.
    pub fn new(vector: Vec<f64>, offset: f64, method: AxisMethod) -> Result<Self> {
        let record = Self {
            axis_id: String::new(),
            attribute_name: String::new(),
            dim: vector.len(),
            vector,
            offset,
            method,
            provenance: BTreeMap::new(),
            created_at: axis_timestamp(),
        };
        record.validate()?;
        Ok(record)
    }

    /// Normalises `direction` to unit length.
    pub fn from_direction(direction: &[f64], offset: f64, method: AxisMethod) -> Result<Self> {
        if direction.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("axis direction is not finite".into()));
        }
        let n = norm(direction);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateAxis(format!(
                "direction has norm {n}, cannot normalise"
            )));
        }
        Self::new(direction.iter().map(|v| v / n).collect(), offset, method)
    }

    pub fn with_id(mut self, axis_id: impl Into<String>) -> Self {
        self.axis_id = axis_id.into();
        self
    }

    pub fn with_attribute(mut self, name: impl Into<String>) -> Self {
        self.attribute_name = name.into();
        self
    }

    pub fn with_provenance(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.provenance.insert(key.to_string(), value.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != self.vector.len() {
            return Err(Error::Invariant(format!(
                "axis declares dim {} but has {} coordinates",
                self.dim,
                self.vector.len()
            )));
        }
        if !self.offset.is_finite() {
            return Err(Error::Invariant(format!("axis offset is {}", self.offset)));
        }
        let n = norm(&self.vector);
        if !((n - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
            return Err(Error::Invariant(format!(
                "axis vector has norm {n}, expected 1 within {UNIT_NORM_TOLERANCE:e}"
            )));
        }
        Ok(())
    }

    /// `vector · row + offset`.
    pub fn project(&self, row: &[f64]) -> f64 {
        crate::linalg::dot(&self.vector, row) + self.offset
    }

    /// Same axis pointing the other way.
    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        out.vector.iter_mut().for_each(|v| *v = -*v);
        out.offset = -out.offset;
        out
    }
}

/// Creation time for new axes. Honours `SOURCE_DATE_EPOCH` so that reruns
/// can produce byte-identical axis files.
pub fn axis_timestamp() -> DateTime<Utc> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| Utc.timestamp_opt(secs, 0).single())
        .unwrap_or_else(Utc::now)
}

pub fn save_axis(record: &AxisRecord, path: &Path) -> Result<()> {
    record.validate()?;
    let mut json = serde_json::to_string_pretty(record)
        .map_err(|e| Error::Format(format!("cannot serialise axis: {e}")))?;
    json.push('\n');
    crate::write_atomic(path, json.as_bytes())
}

pub fn load_axis(path: &Path) -> Result<AxisRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_axis(&text)
}

pub fn parse_axis(text: &str) -> Result<AxisRecord> {
    let record: AxisRecord = serde_json::from_str(text)
        .map_err(|e| Error::Format(format!("axis file: {e}")))?;
    if record.dim != record.vector.len() {
        return Err(Error::Format(format!(
            "axis declares dim {} but lists {} coordinates",
            record.dim,
            record.vector.len()
        )));
    }
    record.validate()?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("axis.json");
        let rec = AxisRecord::new(vec![0.6, 0.8], 0.0, AxisMethod::Raw)
            .unwrap()
            .with_id("a1");
        save_axis(&rec, &path).unwrap();
        let back = load_axis(&path).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.vector[0].to_bits(), 0.6_f64.to_bits());
    }

    #[test]
    fn dim_mismatch_on_load() {
        let text = r#"{"axis_id":"x","attribute_name":"","dim":3,"vector":[0.6,0.8],
            "offset":0.0,"method":"raw","provenance":{},"created_at":"2024-01-01T00:00:00Z"}"#;
        assert_eq!(parse_axis(text).unwrap_err().code(), "FormatError");
    }

    #[test]
    fn non_unit_rejected_before_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("axis.json");
        let mut rec = AxisRecord::new(vec![0.6, 0.8], 0.0, AxisMethod::Raw).unwrap();
        rec.vector = vec![0.3, 0.4];
        assert_eq!(save_axis(&rec, &path).unwrap_err().code(), "InvariantError");
        assert!(!path.exists());
    }

    #[test]
    fn from_direction_normalises() {
        let rec = AxisRecord::from_direction(&[3.0, 4.0], 7.0, AxisMethod::Ridge).unwrap();
        assert_eq!(rec.vector, vec![0.6, 0.8]);
        assert_eq!(rec.offset, 7.0);
        assert_eq!(
            AxisRecord::from_direction(&[0.0, 0.0], 0.0, AxisMethod::Ridge)
                .unwrap_err()
                .code(),
            "DegenerateAxis"
        );
    }

    #[test]
    fn method_tags_serialise_snake_case() {
        let s = serde_json::to_string(&AxisMethod::ZeroShotDiff).unwrap();
        assert_eq!(s, "\"zero_shot_diff\"");
        assert_eq!(AxisMethod::SgdLinear.to_string(), "sgd_linear");
    }
}
