//! The fixed-point map, its Jacobian, and the iteration driver.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{MfpiError, PairSet, PointPair, SINGULAR_TOL};

/// Half the denominator, `ΔP_A + Σ_{g≠i} c_g / (2 a_g)`, checked for singularity.
fn half_denominator(pair: &PointPair, a: &[f64]) -> Result<f64, MfpiError> {
    let i = pair.generator;
    let dp = pair.delta_pagg();
    let mut d = dp;
    let mut scale = dp.abs();
    for (g, &ag) in a.iter().enumerate() {
        if g == i {
            continue;
        }
        let t = pair.coupling(g) / (2.0 * ag);
        d += t;
        scale = scale.max(t.abs());
    }
    if !d.is_finite() || d.abs() <= SINGULAR_TOL * scale {
        return Err(MfpiError::SingularDenominator { generator: i });
    }
    Ok(d)
}

fn check_len(pairs: &PairSet, a: &[f64]) -> Result<(), MfpiError> {
    if a.len() != pairs.len() {
        return Err(MfpiError::Dimension {
            expected: pairs.len(),
            found: a.len(),
        });
    }
    Ok(())
}

/// `F_i(a)` for the pair of generator `pair.generator`.
pub fn mfpi_component(pair: &PointPair, a: &[f64]) -> Result<f64, MfpiError> {
    let d = half_denominator(pair, a)?;
    Ok(pair.delta_lmp() / (2.0 * d))
}

/// One simultaneous update `F(a)`.
pub fn mfpi_step(pairs: &PairSet, a: &[f64]) -> Result<Vec<f64>, MfpiError> {
    check_len(pairs, a)?;
    pairs.pairs.iter().map(|p| mfpi_component(p, a)).collect()
}

/// `∂F_i/∂a_g = Δλ_i · c_g / (4 a_g² D_i²)`, zero on the diagonal.
pub fn mfpi_jacobian(pairs: &PairSet, a: &[f64]) -> Result<DMatrix<f64>, MfpiError> {
    check_len(pairs, a)?;
    let n = a.len();
    let mut j = DMatrix::zeros(n, n);
    for p in &pairs.pairs {
        let i = p.generator;
        let d = half_denominator(p, a)?;
        let dl = p.delta_lmp();
        for g in (0..n).filter(|&g| g != i) {
            j[(i, g)] = dl * p.coupling(g) / (4.0 * a[g] * a[g] * d * d);
        }
    }
    Ok(j)
}

/// Maximum absolute row sum of a square matrix.
pub fn row_sum_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `‖J_F(a)‖_∞`
pub fn contraction_bound(pairs: &PairSet, a: &[f64]) -> Result<f64, MfpiError> {
    Ok(row_sum_norm(&mfpi_jacobian(pairs, a)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfpiConfig {
    pub a_max: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Defaults to `a_max / 2` in every component.
    pub init: Option<Vec<f64>>,
}

impl Default for MfpiConfig {
    fn default() -> Self {
        Self {
            a_max: super::DEFAULT_A_MAX,
            tol: super::DEFAULT_TOL,
            max_iter: super::DEFAULT_MAX_ITER,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfpiResult {
    /// `a^(0), a^(1), …`
    pub iterates: Vec<Vec<f64>>,
    pub a_hat: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖a^(k+1) − a^(k)‖_∞`
    pub step_norms: Vec<f64>,
    /// Successive step-norm ratios.
    pub ratios: Vec<f64>,
    /// Contraction bound at each iterate (same length as `iterates` unless
    /// the last evaluation failed).
    pub bounds: Vec<f64>,
}

impl MfpiResult {
    fn start(a0: Vec<f64>) -> Self {
        Self {
            a_hat: a0.clone(),
            iterates: vec![a0],
            iterations: 0,
            converged: false,
            step_norms: Vec::new(),
            ratios: Vec::new(),
            bounds: Vec::new(),
        }
    }

    fn abort(self, cause: MfpiError) -> MfpiError {
        MfpiError::Aborted {
            cause: Box::new(cause),
            partial: Box::new(self),
        }
    }
}

/// Iterates `a ← F(a)` until the ∞-norm step is at most `tol`.
pub fn run_mfpi(pairs: &PairSet, config: &MfpiConfig) -> Result<MfpiResult, MfpiError> {
    let n = pairs.len();
    if !(config.tol > 0.0) {
        return Err(MfpiError::Parameter(format!("tol must be positive, got {}", config.tol)));
    }
    let a0 = match &config.init {
        Some(v) => {
            check_len(pairs, v)?;
            if let Some(bad) = v.iter().find(|&&x| !(x > 0.0 && x <= config.a_max)) {
                return Err(MfpiError::Parameter(format!(
                    "initial coefficient {bad} outside (0, {}]",
                    config.a_max
                )));
            }
            v.clone()
        }
        None => vec![config.a_max / 2.0; n],
    };

    let mut res = MfpiResult::start(a0);
    let mut a = res.a_hat.clone();
    for k in 0..config.max_iter {
        match contraction_bound(pairs, &a) {
            Ok(b) => res.bounds.push(b),
            Err(e) => return Err(res.abort(e)),
        }
        let next = match mfpi_step(pairs, &a) {
            Ok(v) => v,
            Err(e) => return Err(res.abort(e)),
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(res.abort(MfpiError::NonFinite { iteration: k + 1 }));
        }
        let step = a
            .iter()
            .zip(&next)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if let Some(&prev) = res.step_norms.last() {
            res.ratios.push(if prev > 0.0 { step / prev } else { 0.0 });
        }
        res.step_norms.push(step);
        res.iterations = k + 1;
        res.iterates.push(next.clone());
        res.a_hat = next.clone();
        a = next;
        if step <= config.tol {
            res.converged = true;
            break;
        }
    }
    // bound at the final iterate
    match contraction_bound(pairs, &a) {
        Ok(b) => res.bounds.push(b),
        Err(e) => return Err(res.abort(e)),
    }
    Ok(res)
}
