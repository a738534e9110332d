//! Lossless DC optimal power flow with line limits.
//!
//! Angles are eliminated through the PTDF matrix (slack-referenced), so the
//! QP is over generator outputs only:
//!
//! ```text
//!   min Σ a_g P_g² + b_g P_g
//!   s.t. Σ P_g = Σ d
//!        p_min ≤ P ≤ p_max
//!        −F_l ≤ PTDF_l · (C P − d) ≤ F_l     (limited lines)
//! ```
//!
//! The bus LMP is the balance price corrected by the congestion rents:
//! `λ_n = −y − Σ_l (μ⁺_l − μ⁻_l) · PTDF[l, n]`.

use nalgebra::{DMatrix, DVector};

use crate::case::GridCase;

use super::qp::{self, QpError, QuadraticProgram};
use super::{DispatchError, DispatchSolution, SolveStatus};

pub const MAX_ACTIVE_SET_ITERATIONS: usize = 500;

#[derive(Debug, Clone)]
struct Unit {
    index: usize,
    bus: usize,
    a: f64,
    b: f64,
    c: f64,
    p_min: f64,
    p_max: f64,
}

/// DC-OPF prepared for one case (PTDF computed once).
#[derive(Debug, Clone)]
pub struct DcOpf {
    n_buses: usize,
    n_generators: usize,
    units: Vec<Unit>,
    /// lines × buses
    ptdf: DMatrix<f64>,
    limits: Vec<Option<f64>>,
}

impl DcOpf {
    pub fn new(case: &GridCase) -> Result<Self, DispatchError> {
        case.ensure_valid()?;
        let n = case.buses.len();
        let idx = case.bus_index_map();
        let slack = idx[&case.slack_bus];

        let mut bmat = DMatrix::<f64>::zeros(n, n);
        for l in &case.lines {
            let (f, t, s) = (idx[&l.from_bus], idx[&l.to_bus], l.susceptance);
            bmat[(f, f)] += s;
            bmat[(t, t)] += s;
            bmat[(f, t)] -= s;
            bmat[(t, f)] -= s;
        }

        // Reactance matrix with the slack row/column pinned to zero.
        let keep: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
        let reduced = bmat.select_rows(&keep).select_columns(&keep);
        let mut x = DMatrix::<f64>::zeros(n, n);
        if !keep.is_empty() {
            let inv = reduced.try_inverse().ok_or(DispatchError::Singular)?;
            for (ri, &r) in keep.iter().enumerate() {
                for (ci, &c) in keep.iter().enumerate() {
                    x[(r, c)] = inv[(ri, ci)];
                }
            }
        }

        let mut ptdf = DMatrix::<f64>::zeros(case.lines.len(), n);
        for (k, l) in case.lines.iter().enumerate() {
            let (f, t) = (idx[&l.from_bus], idx[&l.to_bus]);
            for bus in 0..n {
                ptdf[(k, bus)] = l.susceptance * (x[(f, bus)] - x[(t, bus)]);
            }
        }

        let units = case
            .in_service()
            .into_iter()
            .map(|k| {
                let g = &case.generators[k];
                Unit {
                    index: k,
                    bus: idx[&g.bus],
                    a: g.cost.a,
                    b: g.cost.b,
                    c: g.cost.c,
                    p_min: g.p_min,
                    p_max: g.p_max,
                }
            })
            .collect();

        Ok(Self {
            n_buses: n,
            n_generators: case.generators.len(),
            units,
            ptdf,
            limits: case.lines.iter().map(|l| l.flow_limit).collect(),
        })
    }

    /// Power transfer distribution factors (lines × buses).
    pub fn ptdf(&self) -> &DMatrix<f64> {
        &self.ptdf
    }

    pub fn solve(&self, loads: &[f64]) -> Result<DispatchSolution, DispatchError> {
        if loads.len() != self.n_buses {
            return Err(DispatchError::LoadLength {
                expected: self.n_buses,
                found: loads.len(),
            });
        }
        let ng = self.units.len();
        let d = DVector::from_row_slice(loads);
        let limited: Vec<(usize, f64)> = self
            .limits
            .iter()
            .enumerate()
            .filter_map(|(l, lim)| lim.map(|f| (l, f)))
            .collect();

        let m = 2 * ng + 2 * limited.len();
        let mut g = DMatrix::<f64>::zeros(m, ng);
        let mut h = DVector::<f64>::zeros(m);
        for (j, u) in self.units.iter().enumerate() {
            g[(2 * j, j)] = 1.0;
            h[2 * j] = u.p_max;
            g[(2 * j + 1, j)] = -1.0;
            h[2 * j + 1] = -u.p_min;
        }
        for (k, &(l, limit)) in limited.iter().enumerate() {
            let row = 2 * ng + 2 * k;
            let base: f64 = self.ptdf.row(l).dot(&d.transpose());
            for (j, u) in self.units.iter().enumerate() {
                let s = self.ptdf[(l, u.bus)];
                g[(row, j)] = s;
                g[(row + 1, j)] = -s;
            }
            h[row] = limit + base;
            h[row + 1] = limit - base;
        }

        let program = QuadraticProgram {
            hessian: DMatrix::from_diagonal(&DVector::from_iterator(
                ng,
                self.units.iter().map(|u| 2.0 * u.a),
            )),
            linear: DVector::from_iterator(ng, self.units.iter().map(|u| u.b)),
            eq_matrix: DMatrix::from_element(1, ng, 1.0),
            eq_rhs: DVector::from_element(1, d.sum()),
            ineq_matrix: g,
            ineq_rhs: h,
        };

        let sol = qp::solve(&program, MAX_ACTIVE_SET_ITERATIONS).map_err(|e| match e {
            QpError::Infeasible => DispatchError::Infeasible,
            QpError::MaxIterations(k) => DispatchError::MaxActiveSetIterations(k),
            QpError::Singular => DispatchError::Singular,
        })?;

        let energy = -sol.eq_multipliers[0];
        let mut rent = vec![0.0; self.limits.len()];
        let mut mu_line = vec![0.0; self.limits.len()];
        for (k, &(l, _)) in limited.iter().enumerate() {
            let (up, down) = (
                sol.ineq_multipliers[2 * ng + 2 * k],
                sol.ineq_multipliers[2 * ng + 2 * k + 1],
            );
            rent[l] = up - down;
            mu_line[l] = up + down;
        }
        let lmp: Vec<f64> = (0..self.n_buses)
            .map(|n| energy - (0..self.limits.len()).map(|l| rent[l] * self.ptdf[(l, n)]).sum::<f64>())
            .collect();

        let mut p_gen = vec![0.0; self.n_generators];
        let mut nu_plus = vec![0.0; self.n_generators];
        let mut nu_minus = vec![0.0; self.n_generators];
        let mut injection = -d.clone();
        let mut objective = 0.0;
        for (j, u) in self.units.iter().enumerate() {
            let p = sol.x[j];
            p_gen[u.index] = p;
            nu_plus[u.index] = sol.ineq_multipliers[2 * j];
            nu_minus[u.index] = sol.ineq_multipliers[2 * j + 1];
            injection[u.bus] += p;
            objective += (u.a * p + u.b) * p + u.c;
        }
        let line_flow: Vec<f64> = (0..self.limits.len())
            .map(|l| self.ptdf.row(l).dot(&injection.transpose()))
            .collect();

        Ok(DispatchSolution {
            p_gen,
            lmp,
            nu_plus,
            nu_minus,
            mu_line,
            line_flow,
            objective,
            status: SolveStatus::Optimal,
            iterations: sol.iterations,
        })
    }
}

/// Solves DC-OPF for `loads` (MW per bus, dense order).
pub fn dc_opf(case: &GridCase, loads: &[f64]) -> Result<DispatchSolution, DispatchError> {
    DcOpf::new(case)?.solve(loads)
}
