//! JSON run reports written by the command-line tool.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{KseError, Result};
use crate::io::write_atomic;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    /// Command line as invoked.
    pub command: Vec<String>,
    /// Every resolved parameter, including seeds and bandwidths.
    pub config: BTreeMap<String, Value>,
    pub metrics: BTreeMap<String, f64>,
    pub replicates: Vec<Value>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command,
            config: BTreeMap::new(),
            metrics: BTreeMap::new(),
            replicates: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn set_config(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.config.insert(key.to_string(), v);
    }

    /// Records a metric. Non-finite values are dropped so the report stays valid JSON.
    pub fn set_metric(&mut self, key: &str, value: f64) {
        if value.is_finite() {
            self.metrics.insert(key.to_string(), value);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| KseError::Numerical(format!("report serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| KseError::input(format!("invalid report: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut r = RunReport::new(vec!["kse".into(), "embed".into()]);
        r.set_config("omega", 0.5);
        r.set_config("seed", 42u64);
        r.set_config("dims", vec![1, 2]);
        r.set_metric("h_n", 0.1 + 0.2);
        r.set_metric("bad", f64::NAN);
        r.replicates.push(serde_json::json!({"n": 500, "error": 1.0 / 3.0}));
        r.wall_clock_seconds = 1.25;
        let back = RunReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.schema_version, 1);
        assert!(!back.metrics.contains_key("bad"));
    }
}
