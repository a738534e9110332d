//! Closed-form recovery from per-generator outputs and bus LMPs.
//!
//! At a point where generator `i` is strictly inside its limits, its output
//! and bus price satisfy `2·a·P + b = λ`. Two such points determine `(a, b)`.
//! Once `(a, b)` is known, points that fall off that line reveal a binding
//! capacity: below it (`λ > 2aP + b`) the unit is at `p_max`, above it at
//! `p_min`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::Dataset;
use crate::par::{self, Execution};

/// Default slack tolerance for classifying binding points ($/MWh).
pub const BIND_TOL: f64 = 1e-6;
/// Default interior margin in per unit.
pub const MARGIN_PU: f64 = 0.1;
/// Default minimum output difference between the two points, per unit.
pub const MIN_GAP_PU: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Scenario1Error {
    #[error("no qualifying interior pair (margin {margin} MW, min gap {min_gap} MW)")]
    NoQualifyingPair { margin: f64, min_gap: f64 },
    #[error("degenerate pair: both observations have P = {0}")]
    DegeneratePair(f64),
    #[error("empty series")]
    EmptySeries,
}

/// One `(P, λ)` observation at a generator's bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub p: f64,
    pub lmp: f64,
}

impl From<(f64, f64)> for Observation {
    fn from((p, lmp): (f64, f64)) -> Self {
        Self { p, lmp }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSeries {
    pub generator_id: usize,
    pub observations: Vec<Observation>,
}

impl GenSeries {
    /// Series for generator at position `k` (case order) of `dataset`.
    pub fn from_dataset(dataset: &Dataset, k: usize) -> Self {
        let bus = dataset.generator_bus_index(k);
        Self {
            generator_id: dataset.meta.generators[k].id,
            observations: dataset
                .points
                .iter()
                .map(|p| Observation {
                    p: p.p_gen[k],
                    lmp: p.lmp[bus],
                })
                .collect(),
        }
    }
}

/// How the two points are chosen among qualifying observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSelection {
    /// Widest separation; ties go to the lowest indices.
    Widest,
    /// Uniformly random qualifying pair from a seeded stream.
    Random { seed: u64 },
}

/// Indices `(alpha, beta)` into `series.observations`, `alpha < beta`.
pub fn select_interior_points(
    series: &GenSeries,
    margin: f64,
    min_gap: f64,
    selection: PairSelection,
) -> Result<(usize, usize), Scenario1Error> {
    let obs = &series.observations;
    if obs.is_empty() {
        return Err(Scenario1Error::EmptySeries);
    }
    let lo = obs.iter().map(|o| o.p).fold(f64::INFINITY, f64::min);
    let hi = obs.iter().map(|o| o.p).fold(f64::NEG_INFINITY, f64::max);
    let candidates: Vec<usize> = (0..obs.len())
        .filter(|&i| obs[i].p >= lo + margin && obs[i].p <= hi - margin)
        .collect();
    let none = || Scenario1Error::NoQualifyingPair { margin, min_gap };
    if candidates.len() < 2 {
        return Err(none());
    }

    let order = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    match selection {
        PairSelection::Widest => {
            // First index attaining the min and the max.
            let mut imin = candidates[0];
            let mut imax = candidates[0];
            for &i in &candidates {
                if obs[i].p < obs[imin].p {
                    imin = i;
                }
                if obs[i].p > obs[imax].p {
                    imax = i;
                }
            }
            if obs[imax].p - obs[imin].p >= min_gap && obs[imax].p > obs[imin].p {
                Ok(order(imin, imax))
            } else {
                Err(none())
            }
        }
        PairSelection::Random { seed } => {
            let cmin = candidates.iter().map(|&i| obs[i].p).fold(f64::INFINITY, f64::min);
            let cmax = candidates.iter().map(|&i| obs[i].p).fold(f64::NEG_INFINITY, f64::max);
            let has_partner = |i: usize| obs[i].p - cmin >= min_gap || cmax - obs[i].p >= min_gap;
            let firsts: Vec<usize> = candidates.iter().copied().filter(|&i| has_partner(i)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let &first = firsts.choose(&mut rng).ok_or_else(none)?;
            let partners: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&j| j != first && (obs[j].p - obs[first].p).abs() >= min_gap && obs[j].p != obs[first].p)
                .collect();
            let second = partners[rng.gen_range(0..partners.len())];
            Ok(order(first, second))
        }
    }
}

/// Solves `2aP + b = λ` through two observations.
pub fn recover_coeffs_closed_form(alpha: Observation, beta: Observation) -> Result<(f64, f64), Scenario1Error> {
    let dp = alpha.p - beta.p;
    if dp == 0.0 {
        return Err(Scenario1Error::DegeneratePair(alpha.p));
    }
    let dl = alpha.lmp - beta.lmp;
    let a = dl / (2.0 * dp);
    let b = alpha.lmp - alpha.p * dl / dp;
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    Interior,
    /// Upper limit binding (ν⁺ > 0).
    UpperBinding,
    /// Lower limit binding (ν⁻ > 0).
    LowerBinding,
}

/// Classifies one observation by the sign of `s = λ − (2aP + b)`.
pub fn classify(obs: Observation, a: f64, b: f64, bind_tol: f64) -> PointClass {
    let s = obs.lmp - (2.0 * a * obs.p + b);
    if s > bind_tol {
        PointClass::UpperBinding
    } else if s < -bind_tol {
        PointClass::LowerBinding
    } else {
        PointClass::Interior
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub value: f64,
    pub support: usize,
    pub candidates: usize,
    /// Candidate values disagreed; `value` is the modal one.
    pub disagreement: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityInference {
    pub p_max_hat: Option<CapacityEstimate>,
    pub p_min_hat: Option<CapacityEstimate>,
    pub upper_count: usize,
    pub lower_count: usize,
    pub interior_count: usize,
}

/// Candidate values within this many MW of each other count as one limit.
pub const CAPACITY_AGREE_TOL: f64 = 1e-6;

fn modal(values: &[f64]) -> Option<CapacityEstimate> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (sorted[0], 0usize);
    let mut groups = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] - sorted[i] <= CAPACITY_AGREE_TOL {
            j += 1;
        }
        groups += 1;
        if j - i + 1 > best.1 {
            best = (sorted[i], j - i + 1);
        }
        i = j + 1;
    }
    Some(CapacityEstimate {
        value: best.0,
        support: best.1,
        candidates: values.len(),
        disagreement: groups > 1,
    })
}

/// Finds capacity limits revealed by points off the stationarity line.
pub fn infer_capacity(series: &GenSeries, a_hat: f64, b_hat: f64, bind_tol: f64) -> CapacityInference {
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    let mut interior = 0;
    for &o in &series.observations {
        match classify(o, a_hat, b_hat, bind_tol) {
            PointClass::UpperBinding => upper.push(o.p),
            PointClass::LowerBinding => lower.push(o.p),
            PointClass::Interior => interior += 1,
        }
    }
    CapacityInference {
        p_max_hat: modal(&upper),
        p_min_hat: modal(&lower),
        upper_count: upper.len(),
        lower_count: lower.len(),
        interior_count: interior,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario1Params {
    pub margin_pu: f64,
    pub min_gap_pu: f64,
    pub bind_tol: f64,
    pub selection: PairSelection,
}

impl Default for Scenario1Params {
    fn default() -> Self {
        Self {
            margin_pu: MARGIN_PU,
            min_gap_pu: MIN_GAP_PU,
            bind_tol: BIND_TOL,
            selection: PairSelection::Widest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovered {
    pub a_hat: f64,
    pub b_hat: f64,
    pub alpha_index: usize,
    pub beta_index: usize,
    /// max |λ − 2âP − b̂| over points inside the margin band.
    pub residual_max: f64,
    pub residual_rms: f64,
    pub capacity: CapacityInference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GeneratorOutcome {
    Recovered(Recovered),
    NotRecovered { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorResult {
    pub generator_id: usize,
    pub in_service: bool,
    #[serde(flatten)]
    pub outcome: GeneratorOutcome,
}

impl GeneratorResult {
    pub fn recovered(&self) -> Option<&Recovered> {
        match &self.outcome {
            GeneratorOutcome::Recovered(r) => Some(r),
            GeneratorOutcome::NotRecovered { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario1Result {
    pub margin_mw: f64,
    pub min_gap_mw: f64,
    pub bind_tol: f64,
    pub generators: Vec<GeneratorResult>,
}

fn attack_one(series: &GenSeries, margin: f64, min_gap: f64, params: &Scenario1Params) -> GeneratorOutcome {
    let (ia, ib) = match select_interior_points(series, margin, min_gap, params.selection) {
        Ok(p) => p,
        Err(e) => return GeneratorOutcome::NotRecovered { reason: e.to_string() },
    };
    let obs = &series.observations;
    let (a_hat, b_hat) = match recover_coeffs_closed_form(obs[ia], obs[ib]) {
        Ok(c) => c,
        Err(e) => return GeneratorOutcome::NotRecovered { reason: e.to_string() },
    };
    if !(a_hat > 0.0) {
        return GeneratorOutcome::NotRecovered {
            reason: format!("recovered a = {a_hat} is not positive"),
        };
    }

    let lo = obs.iter().map(|o| o.p).fold(f64::INFINITY, f64::min);
    let hi = obs.iter().map(|o| o.p).fold(f64::NEG_INFINITY, f64::max);
    let (mut rmax, mut rsq, mut count) = (0.0_f64, 0.0, 0usize);
    for o in obs.iter().filter(|o| o.p >= lo + margin && o.p <= hi - margin) {
        let r = (o.lmp - 2.0 * a_hat * o.p - b_hat).abs();
        rmax = rmax.max(r);
        rsq += r * r;
        count += 1;
    }

    GeneratorOutcome::Recovered(Recovered {
        a_hat,
        b_hat,
        alpha_index: ia,
        beta_index: ib,
        residual_max: rmax,
        residual_rms: (rsq / count.max(1) as f64).sqrt(),
        capacity: infer_capacity(series, a_hat, b_hat, params.bind_tol),
    })
}

/// Runs selection, recovery and capacity inference for every generator.
/// Each generator only looks at its own output column and its bus price.
pub fn attack_all_generators(dataset: &Dataset, params: &Scenario1Params, exec: Execution) -> Scenario1Result {
    let margin = params.margin_pu * dataset.meta.base_mva;
    let min_gap = params.min_gap_pu * dataset.meta.base_mva;
    let indices: Vec<usize> = (0..dataset.meta.generators.len()).collect();

    let generators = par::map_slice(&indices, exec, |&k| {
        let info = &dataset.meta.generators[k];
        let outcome = if !info.in_service {
            GeneratorOutcome::NotRecovered {
                reason: "generator is out of service".into(),
            }
        } else {
            attack_one(&GenSeries::from_dataset(dataset, k), margin, min_gap, params)
        };
        GeneratorResult {
            generator_id: info.id,
            in_service: info.in_service,
            outcome,
        }
    });

    Scenario1Result {
        margin_mw: margin,
        min_gap_mw: min_gap,
        bind_tol: params.bind_tol,
        generators,
    }
}
