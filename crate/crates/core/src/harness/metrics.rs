//! Error metrics against the case's own cost data.

use serde::{Deserialize, Serialize};

use crate::case::GridCase;
use crate::scenario1::Scenario1Result;
use crate::scenario2::Scenario2Report;

use super::HarnessError;

/// Mean of `(est − truth)²` over entries where `mask` is set.
pub fn compute_mse(estimates: &[f64], truth: &[f64], mask: &[bool]) -> Result<f64, HarnessError> {
    if estimates.len() != truth.len() || estimates.len() != mask.len() {
        return Err(HarnessError::LengthMismatch {
            estimates: estimates.len(),
            truth: truth.len(),
            mask: mask.len(),
        });
    }
    let (sum, count) = estimates
        .iter()
        .zip(truth)
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), ((e, t), _)| (s + (e - t) * (e - t), c + 1));
    if count == 0 {
        return Err(HarnessError::EmptyMask);
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityError {
    pub generator_id: usize,
    /// `p_max_hat − p_max` when an upper limit was inferred.
    pub p_max_error: Option<f64>,
    pub p_min_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario1Metrics {
    /// `None` when no generator was recovered.
    pub mse_a: Option<f64>,
    pub mse_b: Option<f64>,
    pub max_abs_error_a: Option<f64>,
    pub max_abs_error_b: Option<f64>,
    pub recovered: Vec<usize>,
    pub excluded: Vec<usize>,
    pub capacity: Vec<CapacityError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario2Metrics {
    pub mse_a: Option<f64>,
    pub max_abs_error_a: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub guaranteed: bool,
    pub recovered: Vec<usize>,
    pub excluded: Vec<usize>,
}

fn max_abs(est: &[f64], truth: &[f64]) -> Option<f64> {
    est.iter()
        .zip(truth)
        .map(|(e, t)| (e - t).abs())
        .reduce(f64::max)
}

fn generator_position(case: &GridCase, id: usize) -> Option<usize> {
    case.generators.iter().position(|g| g.id == id)
}

pub fn scenario1_metrics(case: &GridCase, result: &Scenario1Result) -> Scenario1Metrics {
    let mut recovered = Vec::new();
    let mut excluded = Vec::new();
    let (mut ea, mut ta, mut eb, mut tb) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut capacity = Vec::new();
    for g in &result.generators {
        match (g.recovered(), generator_position(case, g.generator_id)) {
            (Some(r), Some(k)) => {
                let truth = &case.generators[k];
                recovered.push(g.generator_id);
                ea.push(r.a_hat);
                ta.push(truth.cost.a);
                eb.push(r.b_hat);
                tb.push(truth.cost.b);
                capacity.push(CapacityError {
                    generator_id: g.generator_id,
                    p_max_error: r.capacity.p_max_hat.as_ref().map(|e| e.value - truth.p_max),
                    p_min_error: r.capacity.p_min_hat.as_ref().map(|e| e.value - truth.p_min),
                });
            }
            _ => excluded.push(g.generator_id),
        }
    }
    let mask = vec![true; ea.len()];
    Scenario1Metrics {
        mse_a: compute_mse(&ea, &ta, &mask).ok(),
        mse_b: compute_mse(&eb, &tb, &mask).ok(),
        max_abs_error_a: max_abs(&ea, &ta),
        max_abs_error_b: max_abs(&eb, &tb),
        recovered,
        excluded,
        capacity,
    }
}

/// Only a converged run counts as a recovery.
pub fn scenario2_metrics(case: &GridCase, report: &Scenario2Report) -> Scenario2Metrics {
    let result = report.result.as_ref();
    let converged = result.is_some_and(|r| r.converged);
    let truth: Vec<Option<f64>> = report
        .generator_ids
        .iter()
        .map(|&id| generator_position(case, id).map(|k| case.generators[k].cost.a))
        .collect();
    let mut excluded: Vec<usize> = case
        .generators
        .iter()
        .filter(|g| !report.generator_ids.contains(&g.id))
        .map(|g| g.id)
        .collect();

    let (mut est, mut tru, mut recovered) = (Vec::new(), Vec::new(), Vec::new());
    match result {
        Some(r) if converged => {
            for ((&id, t), &e) in report.generator_ids.iter().zip(&truth).zip(&r.a_hat) {
                match t {
                    Some(t) => {
                        recovered.push(id);
                        est.push(e);
                        tru.push(*t);
                    }
                    None => excluded.push(id),
                }
            }
        }
        _ => excluded.extend(&report.generator_ids),
    }
    excluded.sort_unstable();
    let mask = vec![true; est.len()];
    Scenario2Metrics {
        mse_a: compute_mse(&est, &tru, &mask).ok(),
        max_abs_error_a: max_abs(&est, &tru),
        iterations: result.map(|r| r.iterations),
        converged,
        guaranteed: report.guaranteed,
        recovered,
        excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_estimates_have_zero_mse() {
        assert_eq!(compute_mse(&[0.1, 0.2], &[0.1, 0.2], &[true, true]).unwrap(), 0.0);
    }

    #[test]
    fn single_offset_entry() {
        let mse = compute_mse(&[0.101], &[0.1], &[true]).unwrap();
        assert!((mse - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn mask_selects_entries() {
        let mse = compute_mse(&[1.0, 5.0], &[0.0, 0.0], &[true, false]).unwrap();
        assert_eq!(mse, 1.0);
    }

    #[test]
    fn empty_mask_is_an_error() {
        assert!(matches!(compute_mse(&[1.0], &[1.0], &[false]), Err(HarnessError::EmptyMask)));
        assert!(matches!(compute_mse(&[], &[], &[]), Err(HarnessError::EmptyMask)));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            compute_mse(&[1.0, 2.0], &[1.0], &[true]),
            Err(HarnessError::LengthMismatch { .. })
        ));
    }
}
