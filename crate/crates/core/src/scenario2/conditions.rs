//! Sufficient conditions for convergence and the identifiability check.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{MfpiError, PairSet, PointPair};

/// Relative tolerance for "all prices in a point are equal".
pub const UNIFORM_PRICE_TOL: f64 = 1e-9;
/// Smallest-to-largest singular value ratio below which the pair equations
/// are treated as rank deficient.
pub const RANK_TOL: f64 = 1e-9;

/// Lower-bound contribution of one pair:
///
/// ```text
///   [√(Δλ_i Σ_{g≠i} |c_g|) − Σ_{c_g<0} c_g] / [2ΔP_A + Σ_{c_g>0} c_g / a_max]
/// ```
///
/// with `c_g = λ_g^α − λ_g^β`.
pub fn a_min_term(pair: &PointPair, a_max: f64) -> Result<f64, MfpiError> {
    let i = pair.generator;
    let n = pair.base.lmp.len();
    let (mut abs_sum, mut neg_sum, mut pos_sum) = (0.0, 0.0, 0.0);
    for g in (0..n).filter(|&g| g != i) {
        let c = pair.coupling(g);
        abs_sum += c.abs();
        if c < 0.0 {
            neg_sum += c;
        } else {
            pos_sum += c;
        }
    }
    let den = 2.0 * pair.delta_pagg() + pos_sum / a_max;
    if !(den > 0.0) {
        return Err(MfpiError::BoundUndefined { generator: i });
    }
    let num = (pair.delta_lmp() * abs_sum).max(0.0).sqrt() - neg_sum;
    Ok(num / den)
}

/// `a_min = max_i a_min_term(pair_i)`.
pub fn a_min_bound(pairs: &PairSet, a_max: f64) -> Result<f64, MfpiError> {
    if !(a_max > 0.0) {
        return Err(MfpiError::Parameter(format!("a_max must be positive, got {a_max}")));
    }
    pairs
        .pairs
        .iter()
        .map(|p| a_min_term(p, a_max))
        .try_fold(0.0_f64, |acc, t| Ok(acc.max(t?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConditions {
    pub generator: usize,
    pub delta_lmp: f64,
    pub delta_pagg: f64,
    /// `Δλ_i > 0`
    pub condition1: bool,
    /// `ΔP_A > 0`
    pub condition2: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub generators: Vec<GeneratorConditions>,
    /// `None` when the bound is undefined for some pair.
    pub a_min: Option<f64>,
    pub a_max: f64,
    /// `a_min < a_max`
    pub bound_feasible: bool,
    /// Every point in every pair has equal prices at all generator buses.
    pub uniform_prices: bool,
    /// Two generators share the same `(base, aux)` rows.
    pub duplicate_pairs: bool,
    /// Smallest/largest singular value of the pair-equation matrix.
    pub conditioning: f64,
    pub identifiability_ok: bool,
    pub overall: bool,
}

fn point_is_uniform(lmp: &[f64]) -> bool {
    let scale = lmp.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let lo = lmp.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = lmp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo <= UNIFORM_PRICE_TOL * scale
}

/// Each pair is one linear equation `Σ_g Δλ_g^(i) u_g = ΔP_A^(i)` in
/// `u_g = 1/(2a_g)`; the coefficients are recoverable only when this matrix
/// is nonsingular. Returns its inverse condition number.
fn equation_conditioning(pairs: &PairSet) -> f64 {
    let n = pairs.len();
    if n == 0 {
        return 0.0;
    }
    let m = DMatrix::from_fn(n, n, |i, g| {
        let p = &pairs.pairs[i];
        p.base.lmp[g] - p.aux.lmp[g]
    });
    let sv = m.singular_values();
    let max = sv.max();
    if !(max > 0.0) {
        return 0.0;
    }
    sv.min() / max
}

/// Evaluates conditions 1–2 per pair, the `a_min` bound, and identifiability.
pub fn check_conditions(pairs: &PairSet, a_max: f64) -> ConditionReport {
    let generators: Vec<GeneratorConditions> = pairs
        .pairs
        .iter()
        .map(|p| {
            let (dl, dp) = (p.delta_lmp(), p.delta_pagg());
            GeneratorConditions {
                generator: p.generator,
                delta_lmp: dl,
                delta_pagg: dp,
                condition1: dl > 0.0,
                condition2: dp > 0.0,
            }
        })
        .collect();
    let a_min = a_min_bound(pairs, a_max).ok();
    let bound_feasible = a_min.is_some_and(|m| m < a_max);

    let n = pairs.len();
    let uniform_prices = n >= 2
        && pairs
            .pairs
            .iter()
            .all(|p| point_is_uniform(&p.base.lmp) && point_is_uniform(&p.aux.lmp));
    let key = |p: &PointPair| (p.base.index, p.aux.index);
    let duplicate_pairs = (0..n).any(|i| (i + 1..n).any(|j| key(&pairs.pairs[i]) == key(&pairs.pairs[j])));
    let conditioning = equation_conditioning(pairs);
    let identifiability_ok = n > 0 && !uniform_prices && !duplicate_pairs && conditioning > RANK_TOL;

    let overall = n > 0
        && generators.iter().all(|g| g.condition1 && g.condition2)
        && bound_feasible
        && identifiability_ok;
    ConditionReport {
        generators,
        a_min,
        a_max,
        bound_feasible,
        uniform_prices,
        duplicate_pairs,
        conditioning,
        identifiability_ok,
        overall,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario2::AggregatePoint;

    fn pt(index: usize, p: f64, lmp: &[f64]) -> AggregatePoint {
        AggregatePoint {
            index,
            p_agg: p,
            lmp: lmp.to_vec(),
        }
    }

    fn worked_pair() -> PointPair {
        PointPair::new(0, pt(0, 13.0, &[6.4, 6.5]), pt(1, 10.0, &[6.0, 5.9]))
    }

    #[test]
    fn worked_bound() {
        let t = a_min_term(&worked_pair(), 0.5).unwrap();
        let expected = (0.24_f64.sqrt() + 0.6) / 6.0;
        assert!((t - expected).abs() < 1e-12);
        assert!((t - 0.18165).abs() < 1e-5);
    }

    #[test]
    fn no_coupling_gives_zero_bound() {
        let p = PointPair::new(0, pt(0, 13.0, &[6.4, 6.0]), pt(1, 10.0, &[6.0, 6.0]));
        assert_eq!(a_min_term(&p, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn positive_coupling_enlarges_denominator() {
        let p = PointPair::new(0, pt(0, 13.0, &[6.4, 5.9]), pt(1, 10.0, &[6.0, 6.5]));
        let with = a_min_term(&p, 0.5).unwrap();
        let ignored = 0.24_f64.sqrt() / 6.0;
        assert!(with < ignored);
    }

    #[test]
    fn nonpositive_denominator_is_undefined() {
        let p = PointPair::new(0, pt(0, 10.0, &[6.4, 6.5]), pt(1, 13.0, &[6.0, 5.9]));
        assert_eq!(a_min_term(&p, 0.5), Err(MfpiError::BoundUndefined { generator: 0 }));
    }

    #[test]
    fn worked_conditions() {
        let p2 = PointPair::new(1, pt(2, 14.0, &[6.2, 7.0]), pt(3, 11.0, &[6.1, 6.0]));
        let r = check_conditions(&PairSet::new(vec![worked_pair(), p2]).unwrap(), 0.5);
        assert!(r.generators[0].condition1 && r.generators[0].condition2);
        assert!(r.a_min.unwrap() >= 0.18165 - 1e-5);
        assert!(r.identifiability_ok);
    }

    #[test]
    fn flat_own_price_fails_condition1() {
        let p = PointPair::new(0, pt(0, 13.0, &[6.0, 6.5]), pt(1, 10.0, &[6.0, 5.9]));
        let p2 = PointPair::new(1, pt(2, 14.0, &[6.2, 7.0]), pt(3, 11.0, &[6.1, 6.0]));
        let r = check_conditions(&PairSet::new(vec![p, p2]).unwrap(), 0.5);
        assert!(!r.generators[0].condition1);
        assert!(!r.overall);
    }

    #[test]
    fn uniform_prices_are_not_identifiable() {
        let p1 = PointPair::new(0, pt(0, 13.0, &[6.4, 6.4]), pt(1, 10.0, &[6.0, 6.0]));
        let p2 = PointPair::new(1, pt(2, 15.0, &[6.7, 6.7]), pt(3, 12.0, &[6.3, 6.3]));
        let r = check_conditions(&PairSet::new(vec![p1, p2]).unwrap(), 0.5);
        assert!(r.uniform_prices);
        assert!(!r.identifiability_ok);
        assert!(r.conditioning < RANK_TOL);
        assert!(!r.overall);
    }

    #[test]
    fn reused_pair_is_rank_deficient() {
        let mut p2 = worked_pair();
        p2.generator = 1;
        let r = check_conditions(&PairSet::new(vec![worked_pair(), p2]).unwrap(), 0.5);
        assert!(r.duplicate_pairs);
        assert!(!r.identifiability_ok);
    }
}
