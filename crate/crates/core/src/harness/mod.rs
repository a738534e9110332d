//! Experiment orchestration: case → dataset → attacks → metrics → files.

mod metrics;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{parse_matpower_case, parse_native_case, GridCase};
use crate::dispatch::{generate_dataset, read_dataset, write_dataset, Dataset, DatasetOptions, SolverKind};
use crate::par::Execution;
use crate::scenario1::{attack_all_generators, Scenario1Params};
use crate::scenario2::{attack_aggregate, Scenario2Params};
use crate::{Error, Result};

pub use metrics::{compute_mse, scenario1_metrics, scenario2_metrics, CapacityError, Scenario1Metrics, Scenario2Metrics};
pub use report::{
    scenario1_csv, summary_csv, ExperimentReport, Metrics, Timings, MSE_CONVENTION, SCENARIO1_HEADER,
    SUMMARY_HEADER,
};

pub const DATASET_CSV: &str = "dataset.csv";
pub const DATASET_META: &str = "dataset.meta.json";
pub const SCENARIO1_JSON: &str = "scenario1.json";
pub const SCENARIO1_CSV: &str = "scenario1.csv";
pub const SCENARIO2_JSON: &str = "scenario2.json";
pub const REPORT_JSON: &str = "report.json";
pub const SUMMARY_CSV: &str = "summary.csv";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("empty mask: no recovered generator to average over")]
    EmptyMask,
    #[error("length mismatch: {estimates} estimates, {truth} truth values, {mask} mask entries")]
    LengthMismatch { estimates: usize, truth: usize, mask: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset was generated from case {found}, but the given case is {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("report: {0}")]
    Report(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseFormat {
    Matpower,
    Native,
}

impl CaseFormat {
    /// `.m` files are MATPOWER, everything else native.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("m") => CaseFormat::Matpower,
            _ => CaseFormat::Native,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioSelector {
    Individual,
    Aggregate,
    Both,
}

impl ScenarioSelector {
    fn individual(self) -> bool {
        matches!(self, ScenarioSelector::Individual | ScenarioSelector::Both)
    }

    fn aggregate(self) -> bool {
        matches!(self, ScenarioSelector::Aggregate | ScenarioSelector::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub case_path: Option<PathBuf>,
    pub case_format: Option<CaseFormat>,
    /// Existing dataset CSV; its metadata is read from the sibling
    /// `*.meta.json`. When absent a dataset is generated.
    pub dataset_path: Option<PathBuf>,
    pub solver: SolverKind,
    pub n_points: usize,
    pub range_fraction: f64,
    pub seed: u64,
    pub scenario: ScenarioSelector,
    pub scenario1: Scenario1Params,
    pub scenario2: Scenario2Params,
    pub out_dir: PathBuf,
    pub execution: Execution,
}

impl ExperimentConfig {
    pub fn new(case_path: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            case_path: Some(case_path.into()),
            case_format: None,
            dataset_path: None,
            solver: SolverKind::EconomicDispatch,
            n_points: 200,
            range_fraction: 0.2,
            seed: 0,
            scenario: ScenarioSelector::Both,
            scenario1: Scenario1Params::default(),
            scenario2: Scenario2Params::default(),
            out_dir: out_dir.into(),
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if self.case_path.is_none() && self.dataset_path.is_none() {
            return bad("need a case or an existing dataset".into());
        }
        if self.dataset_path.is_none() {
            if self.n_points == 0 {
                return bad("points must be at least 1".into());
            }
            if !(0.0..1.0).contains(&self.range_fraction) {
                return bad(format!("range {} outside [0, 1)", self.range_fraction));
            }
        }
        let s1 = &self.scenario1;
        if !(s1.margin_pu >= 0.0 && s1.margin_pu.is_finite()) {
            return bad(format!("margin-pu {} must be non-negative", s1.margin_pu));
        }
        if !(s1.min_gap_pu > 0.0 && s1.min_gap_pu.is_finite()) {
            return bad(format!("min-gap-pu {} must be positive", s1.min_gap_pu));
        }
        if !(s1.bind_tol > 0.0 && s1.bind_tol.is_finite()) {
            return bad(format!("bind-tol {} must be positive", s1.bind_tol));
        }
        self.scenario2
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))
    }

    fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            case: self.case_path.as_ref().map(|p| p.display().to_string()),
            case_format: self.case_format,
            dataset: self.dataset_path.as_ref().map(|p| p.display().to_string()),
            solver: self.solver,
            n_points: self.n_points,
            range_fraction: self.range_fraction,
            seed: self.seed,
            scenario: self.scenario,
            scenario1: self.scenario1.clone(),
            scenario2: self.scenario2.clone(),
        }
    }
}

/// The configuration as recorded in a report (output directory and
/// execution strategy omitted: neither affects any result).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub case: Option<String>,
    pub case_format: Option<CaseFormat>,
    pub dataset: Option<String>,
    pub solver: SolverKind,
    pub n_points: usize,
    pub range_fraction: f64,
    pub seed: u64,
    pub scenario: ScenarioSelector,
    pub scenario1: Scenario1Params,
    pub scenario2: Scenario2Params,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads and validates a case file.
pub fn load_case(path: &Path, format: Option<CaseFormat>) -> Result<GridCase> {
    let text = read(path)?;
    let case = match format.unwrap_or_else(|| CaseFormat::from_path(path)) {
        CaseFormat::Matpower => parse_matpower_case(&text)?,
        CaseFormat::Native => parse_native_case(&text)?,
    };
    case.ensure_valid()?;
    Ok(case)
}

/// `data.csv` → `data.meta.json`
pub fn meta_path_for(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn load_dataset(csv_path: &Path) -> Result<Dataset> {
    let csv = read(csv_path)?;
    let meta = read(&meta_path_for(csv_path))?;
    Ok(read_dataset(&csv, &meta)?)
}

/// Tracks files written by one run so they can be removed on failure.
#[derive(Default)]
struct Outputs {
    written: Vec<PathBuf>,
    created_dir: Option<PathBuf>,
}

impl Outputs {
    fn prepare(dir: &Path) -> Result<Self> {
        let mut out = Outputs::default();
        if !dir.exists() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            out.created_dir = Some(dir.to_path_buf());
        }
        Ok(out)
    }

    fn write(&mut self, path: PathBuf, contents: &str) -> Result<()> {
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    fn rollback(self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if let Some(d) = &self.created_dir {
            let _ = fs::remove_dir(d);
        }
    }
}

/// Writes `dataset.csv` and `dataset.meta.json` into `dir`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf> {
    let mut out = Outputs::prepare(dir)?;
    let res = write_dataset_files(ds, dir, &mut out);
    if res.is_err() {
        out.rollback();
    }
    res
}

fn write_dataset_files(ds: &Dataset, dir: &Path, out: &mut Outputs) -> Result<PathBuf> {
    let (csv, meta) = write_dataset(ds);
    let csv_path = dir.join(DATASET_CSV);
    out.write(csv_path.clone(), &csv)?;
    out.write(dir.join(DATASET_META), &meta)?;
    Ok(csv_path)
}

fn grid_name(config: &ExperimentConfig) -> String {
    let path = config.case_path.as_ref().or(config.dataset_path.as_ref());
    path.and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs the configured pipeline and writes its artifacts into
/// `config.out_dir`. On error every file written by this call is removed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut out = Outputs::prepare(&config.out_dir)?;
    match pipeline(config, &mut out) {
        Ok(r) => Ok(r),
        Err(e) => {
            out.rollback();
            Err(e)
        }
    }
}

fn pipeline(config: &ExperimentConfig, out: &mut Outputs) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut timings = Timings::default();
    let case = match &config.case_path {
        Some(p) => Some(load_case(p, config.case_format)?),
        None => None,
    };

    let t = Instant::now();
    let dataset = match (&config.dataset_path, &case) {
        (Some(p), _) => {
            let ds = load_dataset(p)?;
            if let Some(c) = &case {
                let expected = c.fingerprint();
                if ds.meta.case_fingerprint != expected {
                    return Err(HarnessError::FingerprintMismatch {
                        expected,
                        found: ds.meta.case_fingerprint.clone(),
                    }
                    .into());
                }
            }
            ds
        }
        (None, Some(c)) => {
            let opts = DatasetOptions::new(config.n_points, config.range_fraction, config.seed, config.solver)
                .with_execution(config.execution);
            let ds = generate_dataset(c, &opts)?;
            write_dataset_files(&ds, &config.out_dir, out)?;
            ds
        }
        (None, None) => unreachable!("validated"),
    };
    timings.dataset_ms = ms(t);

    let t = Instant::now();
    let scenario1 = config
        .scenario
        .individual()
        .then(|| attack_all_generators(&dataset, &config.scenario1, config.execution));
    timings.scenario1_ms = ms(t);
    if let Some(r) = &scenario1 {
        out.write(config.out_dir.join(SCENARIO1_JSON), &pretty(r))?;
        out.write(config.out_dir.join(SCENARIO1_CSV), &scenario1_csv(r))?;
    }

    let t = Instant::now();
    let scenario2 = if config.scenario.aggregate() {
        Some(attack_aggregate(&dataset, case.as_ref(), &config.scenario2, config.execution)?)
    } else {
        None
    };
    timings.scenario2_ms = ms(t);
    if let Some(r) = &scenario2 {
        out.write(config.out_dir.join(SCENARIO2_JSON), &pretty(r))?;
    }

    let metrics = case.as_ref().map(|c| Metrics {
        convention: MSE_CONVENTION.to_string(),
        scenario1: scenario1.as_ref().map(|r| scenario1_metrics(c, r)),
        scenario2: scenario2.as_ref().map(|r| scenario2_metrics(c, r)),
    });
    timings.total_ms = ms(start);

    let report = ExperimentReport {
        grid: grid_name(config),
        config: config.echo(),
        dataset: dataset.meta.clone(),
        scenario1,
        scenario2,
        metrics,
        timings,
    };
    out.write(config.out_dir.join(REPORT_JSON), &report.to_json())?;
    out.write(
        config.out_dir.join(SUMMARY_CSV),
        &summary_csv(std::slice::from_ref(&report)),
    )?;
    Ok(report)
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// Merges report files (or directories containing `report.json`) into one
/// summary CSV, in the order given.
pub fn merge_reports(paths: &[PathBuf]) -> Result<String> {
    let mut reports = Vec::with_capacity(paths.len());
    for p in paths {
        let file = if p.is_dir() { p.join(REPORT_JSON) } else { p.clone() };
        let text = read(&file)?;
        let r = ExperimentReport::from_json(&text)
            .map_err(|e| HarnessError::Report(format!("{}: {e}", file.display())))?;
        reports.push(r);
    }
    Ok(summary_csv(&reports))
}
