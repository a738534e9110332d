//! Lossless single-price economic dispatch by bisection on the system
//! marginal price.

use crate::case::{Generator, GridCase};

use super::{DispatchError, DispatchSolution, SolveStatus};

/// Bisection stops once the supply mismatch is within this many MW.
pub const BALANCE_TOL: f64 = 1e-9;
const MAX_BISECTIONS: usize = 200;

/// Economic dispatch prepared for one case.
#[derive(Debug, Clone)]
pub struct EconomicDispatch {
    n_buses: usize,
    n_lines: usize,
    units: Vec<(usize, Generator)>,
    n_generators: usize,
}

fn response(g: &Generator, price: f64) -> f64 {
    ((price - g.cost.b) / (2.0 * g.cost.a)).clamp(g.p_min, g.p_max)
}

impl EconomicDispatch {
    pub fn new(case: &GridCase) -> Result<Self, DispatchError> {
        case.ensure_valid()?;
        Ok(Self {
            n_buses: case.buses.len(),
            n_lines: case.lines.len(),
            units: case
                .in_service()
                .into_iter()
                .map(|k| (k, case.generators[k].clone()))
                .collect(),
            n_generators: case.generators.len(),
        })
    }

    fn supply(&self, price: f64) -> f64 {
        self.units.iter().map(|(_, g)| response(g, price)).sum()
    }

    pub fn solve(&self, loads: &[f64]) -> Result<DispatchSolution, DispatchError> {
        if loads.len() != self.n_buses {
            return Err(DispatchError::LoadLength {
                expected: self.n_buses,
                found: loads.len(),
            });
        }
        let demand: f64 = loads.iter().sum();
        let cap_min: f64 = self.units.iter().map(|(_, g)| g.p_min).sum();
        let cap_max: f64 = self.units.iter().map(|(_, g)| g.p_max).sum();
        if demand < cap_min - BALANCE_TOL || demand > cap_max + BALANCE_TOL {
            return Err(DispatchError::InfeasibleDemand {
                demand,
                min: cap_min,
                max: cap_max,
            });
        }

        let mut lo = self
            .units
            .iter()
            .map(|(_, g)| g.cost.marginal(g.p_min))
            .fold(f64::INFINITY, f64::min);
        let mut hi = self
            .units
            .iter()
            .map(|(_, g)| g.cost.marginal(g.p_max))
            .fold(f64::NEG_INFINITY, f64::max);

        let mut price = 0.5 * (lo + hi);
        let mut iterations = 0;
        for _ in 0..MAX_BISECTIONS {
            iterations += 1;
            price = 0.5 * (lo + hi);
            let gap = self.supply(price) - demand;
            if gap.abs() <= BALANCE_TOL || price <= lo || price >= hi {
                break;
            }
            if gap < 0.0 {
                lo = price;
            } else {
                hi = price;
            }
        }

        // Recompute the price in closed form over the units that are
        // strictly between their limits; removes the residual bisection error.
        let mut clamped = 0.0;
        let mut inv_slope = 0.0;
        let mut offset = 0.0;
        for (_, g) in &self.units {
            let free = (price - g.cost.b) / (2.0 * g.cost.a);
            if free > g.p_min && free < g.p_max {
                inv_slope += 1.0 / (2.0 * g.cost.a);
                offset += g.cost.b / (2.0 * g.cost.a);
            } else {
                clamped += free.clamp(g.p_min, g.p_max);
            }
        }
        if inv_slope > 0.0 {
            let polished = (demand - clamped + offset) / inv_slope;
            // Outputs always come from the clamped response, so any price is
            // KKT-consistent; keep whichever balances better.
            if (self.supply(polished) - demand).abs() <= (self.supply(price) - demand).abs() {
                price = polished;
            }
        }

        let mut sol = DispatchSolution {
            p_gen: vec![0.0; self.n_generators],
            lmp: vec![price; self.n_buses],
            nu_plus: vec![0.0; self.n_generators],
            nu_minus: vec![0.0; self.n_generators],
            mu_line: vec![0.0; self.n_lines],
            line_flow: vec![0.0; self.n_lines],
            objective: 0.0,
            status: SolveStatus::Optimal,
            iterations,
        };
        for (k, g) in &self.units {
            let p = response(g, price);
            sol.p_gen[*k] = p;
            // Duals close the stationarity gap exactly at a binding limit.
            let gap = price - g.cost.marginal(p);
            if p == g.p_max && gap > 0.0 {
                sol.nu_plus[*k] = gap;
            } else if p == g.p_min && gap < 0.0 {
                sol.nu_minus[*k] = -gap;
            }
            sol.objective += g.cost.eval(p);
        }
        Ok(sol)
    }
}

/// Solves the uncongested single-price dispatch for `loads` (MW per bus).
pub fn economic_dispatch(case: &GridCase, loads: &[f64]) -> Result<DispatchSolution, DispatchError> {
    EconomicDispatch::new(case)?.solve(loads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{Bus, CostFunction};
    use proptest::prelude::*;

    fn case(load: f64) -> GridCase {
        let g = |id, a, b| Generator {
            id,
            bus: 1,
            p_min: 0.0,
            p_max: 20.0,
            cost: CostFunction::new(a, b, 0.0),
            in_service: true,
        };
        GridCase {
            base_mva: 1.0,
            slack_bus: 1,
            buses: vec![Bus {
                id: 1,
                p_load_nominal: load,
                q_load_nominal: 0.0,
            }],
            generators: vec![g(1, 0.1, 5.0), g(2, 0.2, 4.0)],
            lines: vec![],
        }
    }

    /// Brute-force reference: scan P₁ on a fine grid with P₂ = D − P₁.
    fn grid_search(case: &GridCase, demand: f64) -> (f64, f64) {
        let (g1, g2) = (&case.generators[0], &case.generators[1]);
        let steps = 200_000;
        let mut best = (f64::INFINITY, 0.0);
        for s in 0..=steps {
            let p1 = g1.p_max * s as f64 / steps as f64;
            let p2 = demand - p1;
            if p2 < g2.p_min || p2 > g2.p_max {
                continue;
            }
            let cost = g1.cost.eval(p1) + g2.cost.eval(p2);
            if cost < best.0 {
                best = (cost, p1);
            }
        }
        (best.1, demand - best.1)
    }

    #[test]
    fn equal_marginal_cost_split() {
        let c = case(10.0);
        let (o1, o2) = grid_search(&c, 10.0);
        assert!((o1 - 5.0).abs() < 1e-3 && (o2 - 5.0).abs() < 1e-3);

        let s = economic_dispatch(&c, &[10.0]).unwrap();
        assert!((s.p_gen[0] - 5.0).abs() < 1e-12);
        assert!((s.p_gen[1] - 5.0).abs() < 1e-12);
        assert!((s.lmp[0] - 6.0).abs() < 1e-12);
        assert_eq!(s.nu_minus, vec![0.0, 0.0]);
    }

    #[test]
    fn low_demand_clamps_expensive_unit() {
        let c = case(2.0);
        let (o1, o2) = grid_search(&c, 2.0);
        assert!(o1.abs() < 1e-3 && (o2 - 2.0).abs() < 1e-3);

        let s = economic_dispatch(&c, &[2.0]).unwrap();
        assert_eq!(s.p_gen[0], 0.0);
        assert!((s.p_gen[1] - 2.0).abs() < 1e-12);
        assert!((s.lmp[0] - 4.8).abs() < 1e-12);
        assert!((s.nu_minus[0] - 0.2).abs() < 1e-12);
        assert_eq!(s.nu_plus, vec![0.0, 0.0]);
    }

    #[test]
    fn demand_above_capacity_is_infeasible() {
        let c = case(41.0);
        assert!(matches!(
            economic_dispatch(&c, &[41.0]),
            Err(DispatchError::InfeasibleDemand { .. })
        ));
    }

    #[test]
    fn full_capacity_sets_upper_dual() {
        let s = economic_dispatch(&case(40.0), &[40.0]).unwrap();
        assert_eq!(s.p_gen, vec![20.0, 20.0]);
        // λ lands on the larger marginal cost at p_max; the other unit gets ν⁺.
        assert!((s.lmp[0] - 12.0).abs() < 1e-9);
        assert!((s.nu_plus[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn offline_units_are_zero() {
        let mut c = case(5.0);
        c.generators[0].in_service = false;
        let s = economic_dispatch(&c, &[5.0]).unwrap();
        assert_eq!(s.p_gen[0], 0.0);
        assert!((s.p_gen[1] - 5.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn price_is_monotone_in_load(d1 in 0.0f64..39.0, delta in 0.0f64..1.0) {
            let c = case(0.0);
            let lo = economic_dispatch(&c, &[d1]).unwrap();
            let hi = economic_dispatch(&c, &[d1 + delta]).unwrap();
            prop_assert!(hi.lmp[0] >= lo.lmp[0] - 1e-12);
        }

        #[test]
        fn balance_holds(d in 0.0f64..40.0) {
            let s = economic_dispatch(&case(0.0), &[d]).unwrap();
            prop_assert!((s.p_gen.iter().sum::<f64>() - d).abs() <= 1e-9);
        }
    }
}
