//! Experiment reports: metrics, verdicts and tables, serialised as JSON or
//! as a long-format CSV.

use std::fmt::Write as _;

use fvre_core::Estimate;
use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MetricValue {
    Estimate(Estimate),
    Number(f64),
    Count(u64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: MetricValue,
}

/// A pass/fail check of `observed` against `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub threshold: f64,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub metrics: Vec<Metric>,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<Table>,
    /// Excluded from reproducibility comparisons.
    pub wall_time_seconds: f64,
}

impl Report {
    pub fn new(experiment: &str, config: &ExperimentConfig) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed: config.seed,
            config: config.clone(),
            metrics: Vec::new(),
            verdicts: Vec::new(),
            tables: Vec::new(),
            wall_time_seconds: 0.0,
        }
    }

    pub fn estimate(&mut self, name: impl Into<String>, e: Estimate) {
        self.metrics.push(Metric { name: name.into(), value: MetricValue::Estimate(e) });
    }

    pub fn number(&mut self, name: impl Into<String>, x: f64) {
        self.metrics.push(Metric { name: name.into(), value: MetricValue::Number(x) });
    }

    pub fn count(&mut self, name: impl Into<String>, n: u64) {
        self.metrics.push(Metric { name: name.into(), value: MetricValue::Count(n) });
    }

    pub fn text(&mut self, name: impl Into<String>, s: impl Into<String>) {
        self.metrics.push(Metric { name: name.into(), value: MetricValue::Text(s.into()) });
    }

    /// Records `observed <= threshold`.
    pub fn at_most(&mut self, name: impl Into<String>, observed: f64, threshold: f64, rule: impl Into<String>) {
        self.verdicts.push(Verdict {
            name: name.into(),
            passed: observed <= threshold,
            observed,
            threshold,
            rule: rule.into(),
        });
    }

    /// Records `lo <= observed <= hi`; the threshold field holds the bound
    /// that was violated, or `hi` on success.
    pub fn within(&mut self, name: impl Into<String>, observed: f64, lo: f64, hi: f64, rule: impl Into<String>) {
        let passed = observed >= lo && observed <= hi;
        let threshold = if observed < lo { lo } else { hi };
        self.verdicts.push(Verdict { name: name.into(), passed, observed, threshold, rule: rule.into() });
    }

    pub fn table(&mut self, name: impl Into<String>, columns: &[&str], rows: Vec<Vec<f64>>) {
        self.tables.push(Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
        });
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn metric(&self, name: &str) -> Option<&MetricValue> {
        self.metrics.iter().find(|m| m.name == name).map(|m| &m.value)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    /// Copy with the timing field zeroed.
    pub fn without_timing(&self) -> Self {
        Self { wall_time_seconds: 0.0, ..self.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    /// Long format: `section,name,field,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,name,field,value\n");
        let mut row = |section: &str, name: &str, field: &str, value: String| {
            let _ = writeln!(out, "{},{},{},{}", section, quote(name), field, quote(&value));
        };
        row("report", "experiment", "value", self.experiment.clone());
        row("report", "seed", "value", self.seed.to_string());
        for m in &self.metrics {
            match &m.value {
                MetricValue::Estimate(e) => {
                    row("metric", &m.name, "mean", e.mean.to_string());
                    row("metric", &m.name, "variance", e.variance.to_string());
                    row("metric", &m.name, "count", e.count.to_string());
                    row("metric", &m.name, "ci99", e.ci99.to_string());
                }
                MetricValue::Number(x) => row("metric", &m.name, "value", x.to_string()),
                MetricValue::Count(n) => row("metric", &m.name, "value", n.to_string()),
                MetricValue::Text(s) => row("metric", &m.name, "value", s.clone()),
            }
        }
        for v in &self.verdicts {
            row("verdict", &v.name, "passed", v.passed.to_string());
            row("verdict", &v.name, "observed", v.observed.to_string());
            row("verdict", &v.name, "threshold", v.threshold.to_string());
            row("verdict", &v.name, "rule", v.rule.clone());
        }
        for t in &self.tables {
            for (i, r) in t.rows.iter().enumerate() {
                for (c, x) in t.columns.iter().zip(r) {
                    row(&format!("table:{}", t.name), &i.to_string(), c, x.to_string());
                }
            }
        }
        row("report", "wall_time_seconds", "value", self.wall_time_seconds.to_string());
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }

    /// One line per verdict.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            let _ = writeln!(
                out,
                "[{}] {}: observed {:.6e}, threshold {:.6e} ({})",
                if v.passed { "PASS" } else { "FAIL" },
                v.name,
                v.observed,
                v.threshold,
                v.rule
            );
        }
        out
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
