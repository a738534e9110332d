//! Report document and CSV summaries.

use serde::{Deserialize, Serialize};

use crate::dispatch::DatasetMeta;
use crate::scenario1::{GeneratorOutcome, Scenario1Result};
use crate::scenario2::Scenario2Report;

use super::metrics::{Scenario1Metrics, Scenario2Metrics};
use super::{ConfigEcho, HarnessError};

pub const SUMMARY_HEADER: &str = "grid,sample_range,n_iter,mse_a,mse_b,converged";
pub const SCENARIO1_HEADER: &str =
    "generator_id,status,a_hat,b_hat,residual_max,p_max_hat,p_min_hat,upper_count,lower_count,interior_count";

pub const MSE_CONVENTION: &str =
    "mean over recovered generators only, against the parsed case coefficients; excluded generators are listed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub convention: String,
    pub scenario1: Option<Scenario1Metrics>,
    pub scenario2: Option<Scenario2Metrics>,
}

/// Wall-clock milliseconds per stage. Not reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub dataset_ms: f64,
    pub scenario1_ms: f64,
    pub scenario2_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub grid: String,
    pub config: ConfigEcho,
    pub dataset: DatasetMeta,
    pub scenario1: Option<Scenario1Result>,
    pub scenario2: Option<Scenario2Report>,
    /// Present when the case (ground truth) was available.
    pub metrics: Option<Metrics>,
    pub timings: Timings,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Report(e.to_string()))
    }

    /// `mse_a` comes from the aggregate attack when it ran, otherwise from the
    /// per-generator attack; `mse_b` only exists for the latter.
    pub fn summary_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        let m = self.metrics.as_ref();
        let s1 = m.and_then(|m| m.scenario1.as_ref());
        let s2 = m.and_then(|m| m.scenario2.as_ref());
        let ran2 = self.scenario2.as_ref().is_some_and(|r| r.ran);
        let n_iter = self
            .scenario2
            .as_ref()
            .and_then(|r| r.result.as_ref())
            .map(|r| r.iterations.to_string())
            .unwrap_or_default();
        let mse_a = if ran2 {
            s2.and_then(|s| s.mse_a)
        } else {
            s1.and_then(|s| s.mse_a)
        };
        let converged = match &self.scenario2 {
            Some(r) => r.result.as_ref().is_some_and(|x| x.converged).to_string(),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{},{}",
            csv_field(&self.grid),
            fmt_num(self.dataset.range_fraction),
            n_iter,
            opt(mse_a),
            opt(s1.and_then(|s| s.mse_b)),
            converged
        )
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Table-style CSV with one row per report.
pub fn summary_csv(reports: &[ExperimentReport]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.summary_row());
        out.push('\n');
    }
    out
}

/// One row per generator of the per-generator attack.
pub fn scenario1_csv(result: &Scenario1Result) -> String {
    let mut out = String::from(SCENARIO1_HEADER);
    out.push('\n');
    for g in &result.generators {
        let row = match &g.outcome {
            GeneratorOutcome::Recovered(r) => {
                let cap = |e: &Option<crate::scenario1::CapacityEstimate>| {
                    e.as_ref().map(|e| fmt_num(e.value)).unwrap_or_default()
                };
                format!(
                    "{},recovered,{},{},{},{},{},{},{},{}",
                    g.generator_id,
                    fmt_num(r.a_hat),
                    fmt_num(r.b_hat),
                    fmt_num(r.residual_max),
                    cap(&r.capacity.p_max_hat),
                    cap(&r.capacity.p_min_hat),
                    r.capacity.upper_count,
                    r.capacity.lower_count,
                    r.capacity.interior_count
                )
            }
            GeneratorOutcome::NotRecovered { .. } => format!("{},not_recovered,,,,,,,,", g.generator_id),
        };
        out.push_str(&row);
        out.push('\n');
    }
    out
}
