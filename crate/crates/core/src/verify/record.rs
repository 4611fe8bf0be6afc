use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Outside the regime where the statement applies; values are recorded only.
    ReportOnly,
}

/// One check: the worst normalized violation over its samples, the input
/// that produced it, and any fitted constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckRecord {
    pub name: String,
    pub params: BTreeMap<String, Value>,
    pub worst_violation: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub fitted: BTreeMap<String, f64>,
    pub witness: Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params: BTreeMap::new(),
            worst_violation: f64::NEG_INFINITY,
            tolerance: 0.0,
            verdict: Verdict::ReportOnly,
            fitted: BTreeMap::new(),
            witness: Value::Null,
            notes: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.params
            .insert(key.to_owned(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    pub fn fit(mut self, key: &str, value: f64) -> Self {
        self.fitted.insert(key.to_owned(), value);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Pass iff `worst <= tolerance`; a NaN violation fails.
    pub fn judge(mut self, worst: f64, tolerance: f64, witness: Value) -> Self {
        self.worst_violation = worst;
        self.tolerance = tolerance;
        self.witness = witness;
        self.verdict = if worst <= tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        self
    }

    pub fn report_only(mut self, reason: impl Into<String>) -> Self {
        self.verdict = Verdict::ReportOnly;
        self.notes.push(reason.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Fail
    }
}

/// `{"checks": [...], "config_hash": .., "mesh_h": ..}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<CheckRecord>,
    pub config_hash: String,
    pub mesh_h: f64,
}

impl Report {
    pub fn any_failed(&self) -> bool {
        self.checks.iter().any(CheckRecord::failed)
    }
}

/// Running maximum that keeps the first input attaining it.
#[derive(Debug, Clone)]
pub(crate) struct Worst {
    pub value: f64,
    pub witness: Value,
}

impl Worst {
    pub fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            witness: Value::Null,
        }
    }

    pub fn offer(&mut self, value: f64, witness: impl FnOnce() -> Value) {
        if value > self.value || (value.is_nan() && !self.value.is_nan()) {
            self.value = value;
            self.witness = witness();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_serializes_kebab_case() {
        let r = CheckRecord::new("x").judge(0.5, 1.0, Value::Null);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["verdict"], "pass");
        assert_eq!(v["worstViolation"], 0.5);
        let r = CheckRecord::new("x").report_only("outside");
        assert_eq!(serde_json::to_value(&r).unwrap()["verdict"], "report-only");
    }

    #[test]
    fn nan_violation_fails() {
        assert_eq!(
            CheckRecord::new("x").judge(f64::NAN, 1.0, Value::Null).verdict,
            Verdict::Fail
        );
    }

    #[test]
    fn worst_keeps_first_maximum() {
        let mut w = Worst::new();
        w.offer(1.0, || Value::from(0));
        w.offer(1.0, || Value::from(1));
        w.offer(0.5, || Value::from(2));
        assert_eq!(w.witness, Value::from(0));
    }
}
