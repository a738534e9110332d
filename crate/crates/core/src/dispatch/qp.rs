//! Dense dual active-set solver for strictly convex quadratic programs
//!
//! ```text
//!     minimize     ½ xᵀ H x + cᵀ x
//!     subject to   A x  = b
//!                  G x ≤ h
//! ```
//!
//! Follows the Goldfarb–Idnani scheme: start at the equality-constrained
//! minimizer, repeatedly add the most violated inequality, and drop active
//! inequalities whose multipliers would turn negative. Each step solves the
//! KKT system of the current working set with a dense LU factorization,
//! which is plenty for dispatch-sized problems.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of `A x = b` (Lagrangian `f + yᵀ(Ax − b)`).
    pub eq_multipliers: DVector<f64>,
    /// Nonnegative multipliers of `G x ≤ h`; zero for inactive rows.
    pub ineq_multipliers: DVector<f64>,
    /// Indices of inequality rows in the final working set.
    pub active: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpError {
    Infeasible,
    MaxIterations(usize),
    Singular,
}

const FEAS_TOL: f64 = 1e-9;

struct Solver<'a> {
    qp: &'a QuadraticProgram,
    n: usize,
    meq: usize,
}

impl<'a> Solver<'a> {
    fn normal(&self, row: usize) -> DVector<f64> {
        if row < self.meq {
            self.qp.eq_matrix.row(row).transpose()
        } else {
            self.qp.ineq_matrix.row(row - self.meq).transpose()
        }
    }

    fn rhs(&self, row: usize) -> f64 {
        if row < self.meq {
            self.qp.eq_rhs[row]
        } else {
            self.qp.ineq_rhs[row - self.meq]
        }
    }

    /// Solves `[H N; Nᵀ 0] [x; u] = [top; bottom]` for the working set `rows`.
    fn kkt_solve(
        &self,
        rows: &[usize],
        top: &DVector<f64>,
        bottom: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), QpError> {
        let n = self.n;
        let k = rows.len();
        let mut m = DMatrix::zeros(n + k, n + k);
        m.view_mut((0, 0), (n, n)).copy_from(&self.qp.hessian);
        for (j, &r) in rows.iter().enumerate() {
            let a = self.normal(r);
            for i in 0..n {
                m[(i, n + j)] = a[i];
                m[(n + j, i)] = a[i];
            }
        }
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(top);
        rhs.rows_mut(n, k).copy_from(bottom);
        let sol = m.lu().solve(&rhs).ok_or(QpError::Singular)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(QpError::Singular);
        }
        Ok((sol.rows(0, n).into_owned(), sol.rows(n, k).into_owned()))
    }

    fn working_point(&self, rows: &[usize]) -> Result<(DVector<f64>, DVector<f64>), QpError> {
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.rhs(r)));
        self.kkt_solve(rows, &(-&self.qp.linear), &b)
    }

    fn violation(&self, x: &DVector<f64>, row: usize) -> f64 {
        self.normal(row).dot(x) - self.rhs(row)
    }
}

/// Solves the program, or reports infeasibility.
pub fn solve(qp: &QuadraticProgram, max_iter: usize) -> Result<QpSolution, QpError> {
    let n = qp.linear.len();
    let meq = qp.eq_rhs.len();
    let mineq = qp.ineq_rhs.len();
    let s = Solver { qp, n, meq };

    let mut active: Vec<usize> = (0..meq).collect();
    let (mut x, u0) = s.working_point(&active)?;
    let mut u: Vec<f64> = u0.iter().copied().collect();

    let norms: Vec<f64> = (0..mineq)
        .map(|j| qp.ineq_matrix.row(j).norm().max(f64::MIN_POSITIVE))
        .collect();

    let mut iterations = 0;
    loop {
        // Most violated inequality, scaled by row norm.
        let mut pick = None;
        let mut worst = 0.0;
        for j in 0..mineq {
            let row = meq + j;
            if active.contains(&row) {
                continue;
            }
            let v = s.violation(&x, row);
            let tol = FEAS_TOL * (1.0 + qp.ineq_rhs[j].abs());
            if v > tol && v / norms[j] > worst {
                worst = v / norms[j];
                pick = Some(row);
            }
        }
        let Some(p) = pick else { break };

        let np = s.normal(p);
        let mut tp = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::MaxIterations(max_iter));
            }
            let zeros = DVector::zeros(active.len());
            let (dx, du) = s.kkt_solve(&active, &(-&np), &zeros)?;

            // Curvature along the step; zero means n_p lies in the span of the
            // working set and only a dual step is possible.
            let curv = dx.dot(&(&qp.hessian * &dx));
            let scale = np.norm_squared() / qp.hessian.diagonal().amax().max(f64::MIN_POSITIVE);
            let primal_step = curv > 1e-14 * scale;

            let mut t1 = f64::INFINITY;
            let mut block = None;
            for (j, &r) in active.iter().enumerate() {
                if r >= meq && du[j] < 0.0 {
                    let t = -u[j] / du[j];
                    if t < t1 {
                        t1 = t;
                        block = Some(j);
                    }
                }
            }
            let t2 = if primal_step {
                s.violation(&x, p).max(0.0) / curv
            } else {
                f64::INFINITY
            };

            if t1.is_infinite() && t2.is_infinite() {
                return Err(QpError::Infeasible);
            }
            let t = t1.min(t2);
            if primal_step {
                x += &dx * t;
            }
            for (uj, duj) in u.iter_mut().zip(du.iter()) {
                *uj += t * duj;
            }
            tp += t;

            if t2 <= t1 {
                active.push(p);
                u.push(tp);
                break;
            }
            let j = block.expect("finite dual step has a blocking row");
            active.remove(j);
            u.remove(j);
        }
    }

    // Re-solve on the final working set for clean primal and dual values.
    let (x_ref, u_ref) = s.working_point(&active)?;
    let ok = (0..mineq).all(|j| s.violation(&x_ref, meq + j) <= 1e3 * FEAS_TOL * (1.0 + qp.ineq_rhs[j].abs()));
    if ok {
        x = x_ref;
        u = u_ref.iter().copied().collect();
    }

    let mut eq_multipliers = DVector::zeros(meq);
    let mut ineq_multipliers = DVector::zeros(mineq);
    let mut ineq_active = Vec::new();
    for (&r, &val) in active.iter().zip(&u) {
        if r < meq {
            eq_multipliers[r] = val;
        } else {
            ineq_multipliers[r - meq] = val.max(0.0);
            ineq_active.push(r - meq);
        }
    }
    ineq_active.sort_unstable();

    let objective = 0.5 * x.dot(&(&qp.hessian * &x)) + qp.linear.dot(&x);
    Ok(QpSolution {
        x,
        eq_multipliers,
        ineq_multipliers,
        active: ineq_active,
        objective,
        iterations,
    })
}
