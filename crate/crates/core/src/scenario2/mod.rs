//! Coefficient recovery from aggregate generation (MFPI).
//!
//! The attacker sees only total output `P_A` and the LMPs at generator buses.
//! For every target generator `i` a pair of observations (base `β_i`,
//! auxiliary `α_i`) eliminates the linear coefficients and yields
//!
//! ```text
//!   a_i = Δλ_i / (2 (ΔP_A + Σ_{g≠i} (λ_g^α − λ_g^β) / (2 a_g)))
//! ```
//!
//! with `Δλ_i = λ_i^β − λ_i^α` and `ΔP_A = P_A^β − P_A^α`. Stacking these gives
//! a map `F` whose fixed point is the true coefficient vector; [`run_mfpi`]
//! iterates it and [`check_conditions`] evaluates the sufficient conditions
//! for convergence.

mod conditions;
mod mfpi;
mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::GridCase;
use crate::dispatch::Dataset;
use crate::par::Execution;

pub use conditions::{a_min_bound, a_min_term, check_conditions, ConditionReport, GeneratorConditions};
pub use mfpi::{
    contraction_bound, mfpi_component, mfpi_jacobian, mfpi_step, run_mfpi, MfpiConfig, MfpiResult,
};
pub use search::{search_point_pairs, SearchOutcome, SearchStream};

/// Relative threshold below which an MFPI denominator counts as singular.
pub const SINGULAR_TOL: f64 = 1e-12;
/// Points with any generator this close (MW) to a limit are dropped.
pub const INTERIOR_TOL: f64 = 1e-6;

pub const DEFAULT_A_MAX: f64 = 0.5;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_BUDGET: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MfpiError {
    #[error("singular denominator for generator {generator}")]
    SingularDenominator { generator: usize },
    #[error("non-finite iterate at step {iteration}")]
    NonFinite { iteration: usize },
    #[error("a_min bound undefined: non-positive denominator for generator {generator}")]
    BoundUndefined { generator: usize },
    #[error("no pair satisfying conditions 1-2 for generator {generator} within budget {budget}")]
    SearchExhausted { generator: usize, budget: usize },
    #[error("iteration aborted after {} steps: {cause}", partial.iterations)]
    Aborted { cause: Box<MfpiError>, partial: Box<MfpiResult> },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Aggregate observation: total output and the LMP at each target
/// generator's bus, in target order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    /// Row index in the source dataset.
    pub index: usize,
    pub p_agg: f64,
    pub lmp: Vec<f64>,
}

/// The part of a dataset visible in the aggregate setting.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateView {
    /// Case-order positions of the target (in-service) generators.
    pub targets: Vec<usize>,
    pub generator_ids: Vec<usize>,
    pub points: Vec<AggregatePoint>,
    /// Rows removed because some generator sat at a limit.
    pub dropped: usize,
}

impl AggregateView {
    /// Builds the view. With `case`, rows where any in-service generator is
    /// within [`INTERIOR_TOL`] of a limit are removed first.
    pub fn from_dataset(ds: &Dataset, case: Option<&GridCase>) -> Self {
        let targets = ds.in_service();
        let buses: Vec<usize> = targets.iter().map(|&k| ds.generator_bus_index(k)).collect();
        let mut points = Vec::with_capacity(ds.points.len());
        let mut dropped = 0;
        for (index, p) in ds.points.iter().enumerate() {
            let interior = case.map_or(true, |c| {
                targets.iter().all(|&k| {
                    let g = &c.generators[k];
                    p.p_gen[k] > g.p_min + INTERIOR_TOL && p.p_gen[k] < g.p_max - INTERIOR_TOL
                })
            });
            if !interior {
                dropped += 1;
                continue;
            }
            points.push(AggregatePoint {
                index,
                p_agg: p.p_agg,
                lmp: buses.iter().map(|&b| p.lmp[b]).collect(),
            });
        }
        Self {
            generator_ids: targets.iter().map(|&k| ds.meta.generators[k].id).collect(),
            targets,
            points,
            dropped,
        }
    }

    pub fn n_generators(&self) -> usize {
        self.targets.len()
    }
}

/// Base and auxiliary observation for one target generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    /// Target position `i` (0-based, target order).
    pub generator: usize,
    pub base: AggregatePoint,
    pub aux: AggregatePoint,
}

impl PointPair {
    pub fn new(generator: usize, base: AggregatePoint, aux: AggregatePoint) -> Self {
        Self { generator, base, aux }
    }

    /// `λ_i^β − λ_i^α`
    pub fn delta_lmp(&self) -> f64 {
        self.base.lmp[self.generator] - self.aux.lmp[self.generator]
    }

    /// `P_A^β − P_A^α`
    pub fn delta_pagg(&self) -> f64 {
        self.base.p_agg - self.aux.p_agg
    }

    /// `λ_g^α − λ_g^β` (the coupling coefficient of generator `g`).
    pub fn coupling(&self, g: usize) -> f64 {
        self.aux.lmp[g] - self.base.lmp[g]
    }
}

/// One pair per target generator, `pairs[i].generator == i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<PointPair>,
}

impl PairSet {
    pub fn new(pairs: Vec<PointPair>) -> Result<Self, MfpiError> {
        let n = pairs.len();
        for (i, p) in pairs.iter().enumerate() {
            if p.generator != i {
                return Err(MfpiError::Parameter(format!("pair {i} targets generator {}", p.generator)));
            }
            for pt in [&p.base, &p.aux] {
                if pt.lmp.len() != n {
                    return Err(MfpiError::Dimension {
                        expected: n,
                        found: pt.lmp.len(),
                    });
                }
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario2Params {
    pub a_max: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub budget: usize,
    pub seed: u64,
    /// Run the iteration even when the convergence conditions fail.
    pub force: bool,
    pub init: Option<Vec<f64>>,
}

impl Default for Scenario2Params {
    fn default() -> Self {
        Self {
            a_max: DEFAULT_A_MAX,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            budget: DEFAULT_BUDGET,
            seed: 0,
            force: false,
            init: None,
        }
    }
}

impl Scenario2Params {
    pub fn validate(&self) -> Result<(), MfpiError> {
        if !(self.a_max > 0.0 && self.a_max.is_finite()) {
            return Err(MfpiError::Parameter(format!("a_max must be positive, got {}", self.a_max)));
        }
        if !(self.tol > 0.0) {
            return Err(MfpiError::Parameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(MfpiError::Parameter("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn mfpi_config(&self) -> MfpiConfig {
        MfpiConfig {
            a_max: self.a_max,
            tol: self.tol,
            max_iter: self.max_iter,
            init: self.init.clone(),
        }
    }
}

/// Result of the aggregate attack on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario2Report {
    pub generator_ids: Vec<usize>,
    pub points_used: usize,
    pub points_dropped: usize,
    pub candidates_evaluated: usize,
    /// `(base, aux)` dataset row indices per target generator.
    pub pairs: Vec<(usize, usize)>,
    pub conditions: ConditionReport,
    /// Whether the iteration was run.
    pub ran: bool,
    /// The conditions held, so convergence to the unique solution is certified.
    pub guaranteed: bool,
    pub result: Option<MfpiResult>,
    pub error: Option<String>,
}

/// Pair search, condition check and (if allowed) the iteration.
///
/// A failure inside the iteration is recorded in the report with the partial
/// history rather than returned as an error; search exhaustion is an error.
pub fn attack_aggregate(
    ds: &Dataset,
    case: Option<&GridCase>,
    params: &Scenario2Params,
    exec: Execution,
) -> Result<Scenario2Report, MfpiError> {
    params.validate()?;
    let view = AggregateView::from_dataset(ds, case);
    let mut stream = search::search_stream(params.seed);
    let found = search_point_pairs(&view, params.a_max, params.budget, &mut stream, exec)?;
    let pairs = found
        .pairs
        .pairs
        .iter()
        .map(|p| (p.base.index, p.aux.index))
        .collect();

    let guaranteed = found.report.overall;
    let ran = guaranteed || params.force;
    let (result, error) = if ran {
        match run_mfpi(&found.pairs, &params.mfpi_config()) {
            Ok(r) => (Some(r), None),
            Err(MfpiError::Aborted { cause, partial }) => (Some(*partial), Some(cause.to_string())),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };

    Ok(Scenario2Report {
        generator_ids: view.generator_ids.clone(),
        points_used: view.points.len(),
        points_dropped: view.dropped,
        candidates_evaluated: found.evaluated,
        pairs,
        conditions: found.report,
        ran,
        guaranteed,
        result,
        error,
    })
}
