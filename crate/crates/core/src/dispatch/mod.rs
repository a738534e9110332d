//! Market-clearing solvers and dataset synthesis.
//!
//! Both solvers return a [`DispatchSolution`] that satisfies generator
//! stationarity `2aP + b − λ_bus + ν⁺ − ν⁻ = 0` and complementary slackness,
//! which is exactly the structure the attacks in [`crate::scenario1`] and
//! [`crate::scenario2`] consume.

mod dataset;
mod dcopf;
mod economic;
pub mod qp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{CaseError, GridCase};

pub use dataset::{
    generate_dataset, read_dataset, sample_loads, write_dataset, DataPoint, Dataset, DatasetMeta,
    DatasetOptions, GeneratorInfo, sample_stream, SampleStream, MAX_RETRIES,
};
pub use dcopf::{dc_opf, DcOpf};
pub use economic::{economic_dispatch, EconomicDispatch};

/// Default tolerance for [`verify_kkt`] ($/MWh, MW).
pub const KKT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    EconomicDispatch,
    DcOpf,
}

impl SolverKind {
    pub fn short_name(self) -> &'static str {
        match self {
            SolverKind::EconomicDispatch => "ed",
            SolverKind::DcOpf => "dcopf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

/// Optimal dispatch with its dual certificate.
///
/// Generator-indexed vectors follow `case.generators` order; out-of-service
/// units carry zeros everywhere. `mu_line` and `line_flow` are indexed like
/// `case.lines`, with zero congestion price on unlimited lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub p_gen: Vec<f64>,
    /// $/MWh per bus, dense bus order.
    pub lmp: Vec<f64>,
    pub nu_plus: Vec<f64>,
    pub nu_minus: Vec<f64>,
    pub mu_line: Vec<f64>,
    pub line_flow: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("demand {demand} MW outside aggregate capacity [{min}, {max}] MW")]
    InfeasibleDemand { demand: f64, min: f64, max: f64 },
    #[error("dispatch problem is infeasible")]
    Infeasible,
    #[error("active-set solver exceeded {0} iterations")]
    MaxActiveSetIterations(usize),
    #[error("singular system in active-set solver")]
    Singular,
    #[error("expected {expected} bus loads, got {found}")]
    LoadLength { expected: usize, found: usize },
    #[error("range fraction {0} outside [0, 1)")]
    RangeFraction(f64),
    #[error("sample {point} failed after {retries} redraws: {last}")]
    GenerationFailure {
        point: usize,
        retries: usize,
        last: String,
    },
    #[error("point {point} fails KKT verification: {report:?}")]
    KktViolation { point: usize, report: KktReport },
    #[error("need at least one point")]
    EmptyRequest,
    #[error("dataset file: {0}")]
    Format(String),
    #[error(transparent)]
    Case(#[from] CaseError),
}

/// Maximum KKT residuals of a dispatch solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// max |2aP + b − λ + ν⁺ − ν⁻| over in-service generators.
    pub stationarity: f64,
    /// max complementary-slackness product (generator bounds and lines).
    pub complementarity: f64,
    /// |Σ P − Σ loads|
    pub balance: f64,
    /// Most negative dual, as a positive number (0 when all duals ≥ 0).
    pub dual_infeasibility: f64,
    /// Largest bound or flow-limit violation.
    pub primal_infeasibility: f64,
    pub passed: bool,
}

/// Evaluates stationarity, complementary slackness, dual feasibility and
/// power balance of `sol` for `case` at `loads`.
pub fn verify_kkt(case: &GridCase, loads: &[f64], sol: &DispatchSolution, kkt_tol: f64) -> KktReport {
    let bus = case.bus_index_map();
    let mut stationarity = 0.0_f64;
    let mut complementarity = 0.0_f64;
    let mut dual_inf = 0.0_f64;
    let mut primal_inf = 0.0_f64;

    for (k, g) in case.generators.iter().enumerate() {
        if !g.in_service {
            continue;
        }
        let p = sol.p_gen[k];
        let lmp = sol.lmp[bus[&g.bus]];
        let (np, nm) = (sol.nu_plus[k], sol.nu_minus[k]);
        stationarity = stationarity.max((g.cost.marginal(p) - lmp + np - nm).abs());
        complementarity = complementarity
            .max((np * (g.p_max - p)).abs())
            .max((nm * (p - g.p_min)).abs());
        dual_inf = dual_inf.max(-np).max(-nm);
        primal_inf = primal_inf.max(p - g.p_max).max(g.p_min - p);
    }
    for (l, line) in case.lines.iter().enumerate() {
        let mu = sol.mu_line.get(l).copied().unwrap_or(0.0);
        dual_inf = dual_inf.max(-mu);
        match line.flow_limit {
            Some(limit) => {
                let flow = sol.line_flow.get(l).copied().unwrap_or(0.0);
                complementarity = complementarity.max((mu * (limit - flow.abs())).abs());
                primal_inf = primal_inf.max(flow.abs() - limit);
            }
            None => complementarity = complementarity.max(mu.abs()),
        }
    }

    let gen_total: f64 = sol.p_gen.iter().sum();
    let load_total: f64 = loads.iter().sum();
    let balance = (gen_total - load_total).abs();

    let passed = sol.status == SolveStatus::Optimal
        && stationarity <= kkt_tol
        && complementarity <= kkt_tol
        && balance <= kkt_tol
        && dual_inf <= kkt_tol
        && primal_inf <= kkt_tol;
    KktReport {
        stationarity,
        complementarity,
        balance,
        dual_infeasibility: dual_inf.max(0.0),
        primal_infeasibility: primal_inf.max(0.0),
        passed,
    }
}

/// A solver prepared once for a case and reused across load samples.
pub enum Dispatcher {
    Economic(EconomicDispatch),
    DcOpf(DcOpf),
}

impl Dispatcher {
    pub fn new(case: &GridCase, kind: SolverKind) -> Result<Self, DispatchError> {
        Ok(match kind {
            SolverKind::EconomicDispatch => Dispatcher::Economic(EconomicDispatch::new(case)?),
            SolverKind::DcOpf => Dispatcher::DcOpf(DcOpf::new(case)?),
        })
    }

    pub fn solve(&self, loads: &[f64]) -> Result<DispatchSolution, DispatchError> {
        match self {
            Dispatcher::Economic(s) => s.solve(loads),
            Dispatcher::DcOpf(s) => s.solve(loads),
        }
    }
}
