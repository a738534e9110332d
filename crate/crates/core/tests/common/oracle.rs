//! Reference DC-OPF by exhaustive active-set enumeration.
//!
//! Works on the angle formulation (variables `P` and non-slack `θ`, nodal
//! balance as equalities), so it shares no code path with the PTDF-based
//! solver. Every subset of inequalities is tried as the active set; the
//! feasible one with nonnegative multipliers and the lowest cost wins.
//! Exponential, so only for a handful of inequalities.

use lmpinfer::case::GridCase;
use nalgebra::{DMatrix, DVector};

pub struct OracleSolution {
    pub p_gen: Vec<f64>,
    pub lmp: Vec<f64>,
    pub objective: f64,
    pub line_flow: Vec<f64>,
}

struct Ineq {
    row: DVector<f64>,
    rhs: f64,
}

pub fn enumerate_dc_opf(case: &GridCase, loads: &[f64]) -> Option<OracleSolution> {
    let idx = case.bus_index_map();
    let n = case.buses.len();
    let slack = idx[&case.slack_bus];
    let gens: Vec<usize> = case.in_service();
    let ng = gens.len();
    let theta: Vec<usize> = (0..n).filter(|&b| b != slack).collect();
    let nv = ng + theta.len();
    let theta_col = |bus: usize| theta.iter().position(|&b| b == bus).map(|k| ng + k);

    // flow_l(x) = s (θ_f − θ_t)
    let flow_row = |l: usize| {
        let line = &case.lines[l];
        let mut r = DVector::zeros(nv);
        if let Some(c) = theta_col(idx[&line.from_bus]) {
            r[c] += line.susceptance;
        }
        if let Some(c) = theta_col(idx[&line.to_bus]) {
            r[c] -= line.susceptance;
        }
        r
    };

    // Balance: Σ_{g at n} P_g − Σ_l out-flow = d_n
    let mut eq = DMatrix::zeros(n, nv);
    for (j, &k) in gens.iter().enumerate() {
        eq[(idx[&case.generators[k].bus], j)] += 1.0;
    }
    for l in 0..case.lines.len() {
        let r = flow_row(l);
        let (f, t) = (idx[&case.lines[l].from_bus], idx[&case.lines[l].to_bus]);
        for c in 0..nv {
            eq[(f, c)] -= r[c];
            eq[(t, c)] += r[c];
        }
    }
    let eq_rhs = DVector::from_row_slice(loads);

    let mut ineqs = Vec::new();
    for (j, &k) in gens.iter().enumerate() {
        let g = &case.generators[k];
        let mut r = DVector::zeros(nv);
        r[j] = 1.0;
        ineqs.push(Ineq { row: r.clone(), rhs: g.p_max });
        ineqs.push(Ineq { row: -r, rhs: -g.p_min });
    }
    for (l, line) in case.lines.iter().enumerate() {
        if let Some(f) = line.flow_limit {
            let r = flow_row(l);
            ineqs.push(Ineq { row: r.clone(), rhs: f });
            ineqs.push(Ineq { row: -r, rhs: f });
        }
    }
    let m = ineqs.len();
    assert!(m <= 20, "enumeration over {m} inequalities is too large");

    let mut hess = DMatrix::zeros(nv, nv);
    let mut lin = DVector::zeros(nv);
    for (j, &k) in gens.iter().enumerate() {
        hess[(j, j)] = 2.0 * case.generators[k].cost.a;
        lin[j] = case.generators[k].cost.b;
    }

    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    'subsets: for mask in 0u32..(1 << m) {
        for p in 0..m / 2 {
            if mask >> (2 * p) & 3 == 3 {
                continue 'subsets; // both sides of one constraint
            }
        }
        let active: Vec<usize> = (0..m).filter(|&j| mask >> j & 1 == 1).collect();
        let k = n + active.len();
        let mut kkt = DMatrix::zeros(nv + k, nv + k);
        kkt.view_mut((0, 0), (nv, nv)).copy_from(&hess);
        let mut rhs = DVector::zeros(nv + k);
        rhs.rows_mut(0, nv).copy_from(&(-&lin));
        for r in 0..n {
            for c in 0..nv {
                kkt[(nv + r, c)] = eq[(r, c)];
                kkt[(c, nv + r)] = eq[(r, c)];
            }
            rhs[nv + r] = eq_rhs[r];
        }
        for (a, &j) in active.iter().enumerate() {
            for c in 0..nv {
                kkt[(nv + n + a, c)] = ineqs[j].row[c];
                kkt[(c, nv + n + a)] = ineqs[j].row[c];
            }
            rhs[nv + n + a] = ineqs[j].rhs;
        }
        // SVD so that subsets with dependent rows still yield a solution
        // when one exists.
        let svd = kkt.clone().svd(true, true);
        let Ok(sol) = svd.solve(&rhs, 1e-10) else { continue };
        if (&kkt * &sol - &rhs).amax() > 1e-7 {
            continue;
        }
        let x = sol.rows(0, nv).into_owned();
        let mults = sol.rows(nv, k).into_owned();
        if ineqs
            .iter()
            .any(|q| q.row.dot(&x) - q.rhs > 1e-7 * (1.0 + q.rhs.abs()))
        {
            continue;
        }
        if (0..active.len()).any(|a| mults[n + a] < -1e-9) {
            continue;
        }
        let obj: f64 = gens
            .iter()
            .enumerate()
            .map(|(j, &k)| case.generators[k].cost.eval(x[j]))
            .sum();
        if best.as_ref().map_or(true, |(b, _, _)| obj < *b - 1e-12) {
            best = Some((obj, x, mults));
        }
    }

    let (objective, x, mults) = best?;
    let mut p_gen = vec![0.0; case.generators.len()];
    for (j, &k) in gens.iter().enumerate() {
        p_gen[k] = x[j];
    }
    // Lagrangian f + yᵀ(Ex − d): the nodal price is −y_n.
    let lmp: Vec<f64> = (0..n).map(|r| -mults[r]).collect();
    let line_flow = (0..case.lines.len()).map(|l| flow_row(l).dot(&x)).collect();
    Some(OracleSolution {
        p_gen,
        lmp,
        objective,
        line_flow,
    })
}
