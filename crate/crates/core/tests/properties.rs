mod common;

use lmpinfer::dispatch::{economic_dispatch, generate_dataset, Dataset, DatasetOptions, SolverKind};
use lmpinfer::par::Execution;
use lmpinfer::scenario1::{attack_all_generators, classify, GenSeries, PointClass, Scenario1Params};
use lmpinfer::scenario2::{
    contraction_bound, mfpi_step, run_mfpi, search_point_pairs, AggregateView, MfpiConfig, PairSet,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ds(case: &lmpinfer::case::GridCase, n: usize, range: f64, seed: u64, solver: SolverKind) -> Dataset {
    generate_dataset(case, &DatasetOptions::new(n, range, seed, solver)).unwrap()
}

fn congested_pairs(seed: u64) -> (PairSet, Vec<f64>) {
    let case = common::three_bus();
    let data = ds(&case, 150, 0.2, seed, SolverKind::DcOpf);
    let view = AggregateView::from_dataset(&data, Some(&case));
    let found = search_point_pairs(&view, 0.5, 5_000, &mut ChaCha8Rng::seed_from_u64(seed), Execution::Sequential)
        .unwrap();
    assert!(found.report.overall, "{:?}", found.report);
    let truth = view.targets.iter().map(|&k| case.generators[k].cost.a).collect();
    (found.pairs, truth)
}

fn inf_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[test]
fn classification_matches_solver_duals() {
    let case = common::two_gen();
    let data = ds(&case, 300, 0.5, 21, SolverKind::EconomicDispatch);
    let res = attack_all_generators(&data, &Scenario1Params::default(), Execution::Sequential);
    for (k, g) in res.generators.iter().enumerate() {
        let r = g.recovered().unwrap();
        let series = GenSeries::from_dataset(&data, k);
        for (pt, obs) in data.points.iter().zip(&series.observations) {
            let sol = economic_dispatch(&case, &pt.loads).unwrap();
            let expected = match (sol.nu_plus[k] > 0.0, sol.nu_minus[k] > 0.0) {
                (true, _) => PointClass::UpperBinding,
                (_, true) => PointClass::LowerBinding,
                _ => PointClass::Interior,
            };
            assert_eq!(classify(*obs, r.a_hat, r.b_hat, 1e-6), expected);
        }
    }
}

#[test]
fn recovered_capacity_is_the_true_limit() {
    let mut seen = 0;
    for case in [common::case14(), common::case30()] {
        let data = ds(&case, 400, 0.5, 22, SolverKind::EconomicDispatch);
        // Narrow margin so units that sit at a limit most of the time still
        // have an interior pair.
        let params = Scenario1Params {
            margin_pu: 0.02,
            ..Scenario1Params::default()
        };
        let res = attack_all_generators(&data, &params, Execution::Parallel);
        for (k, g) in res.generators.iter().enumerate() {
            let Some(r) = g.recovered() else { continue };
            let (mut upper, mut lower) = (false, false);
            for pt in &data.points {
                let sol = economic_dispatch(&case, &pt.loads).unwrap();
                upper |= sol.nu_plus[k] > 1e-6;
                lower |= sol.nu_minus[k] > 1e-6;
            }
            let gen = &case.generators[k];
            if upper {
                assert_eq!(r.capacity.p_max_hat.as_ref().map(|e| e.value), Some(gen.p_max));
                seen += 1;
            }
            if lower {
                assert_eq!(r.capacity.p_min_hat.as_ref().map(|e| e.value), Some(gen.p_min));
                seen += 1;
            }
        }
    }
    assert!(seen >= 3, "{seen}");
}

#[test]
fn per_generator_attack_is_local() {
    let case = common::three_bus();
    let data = ds(&case, 120, 0.2, 23, SolverKind::DcOpf);
    let params = Scenario1Params::default();
    let base = attack_all_generators(&data, &params, Execution::Sequential);

    // Scramble everything except generator 0's output and its bus price.
    let mut scrambled = data.clone();
    let bus0 = data.generator_bus_index(0);
    let n = scrambled.points.len();
    for i in 0..n {
        let donor = &data.points[(i * 7 + 3) % n];
        let p = &mut scrambled.points[i];
        p.p_gen[1] = donor.p_gen[1];
        for (b, v) in p.lmp.iter_mut().enumerate() {
            if b != bus0 {
                *v = donor.lmp[b] + 1.0;
            }
        }
        p.loads = donor.loads.clone();
        p.p_agg = donor.p_agg;
    }
    let after = attack_all_generators(&scrambled, &params, Execution::Sequential);
    assert_eq!(base.generators[0], after.generators[0]);
}

#[test]
fn parallel_and_sequential_attacks_agree() {
    let case = common::case14();
    let data = ds(&case, 200, 0.5, 24, SolverKind::DcOpf);
    let p = Scenario1Params::default();
    assert_eq!(
        attack_all_generators(&data, &p, Execution::Sequential),
        attack_all_generators(&data, &p, Execution::Parallel)
    );
}

#[test]
fn contraction_run_has_monotone_steps() {
    let (pairs, _) = congested_pairs(31);
    let r = run_mfpi(&pairs, &MfpiConfig::default()).unwrap();
    assert!(r.bounds.iter().all(|&b| b < 1.0));
    for w in r.step_norms.windows(2).skip(1) {
        assert!(w[1] <= w[0], "{:?}", r.step_norms);
    }
    assert!(r.converged);
}

#[test]
fn run_from_truth_stops_immediately() {
    let (pairs, truth) = congested_pairs(32);
    let cfg = MfpiConfig {
        init: Some(truth.clone()),
        ..MfpiConfig::default()
    };
    let r = run_mfpi(&pairs, &cfg).unwrap();
    assert_eq!(r.iterations, 1);
    assert!(r.step_norms[0] <= 1e-12 * inf_dist(&truth, &[0.0, 0.0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Mean-value consequence: when the bound is below L on the segment
    /// between two points, F moves them at most L times their distance.
    #[test]
    fn map_is_lipschitz_under_bound(
        seed in 0u64..4,
        a1 in 0.02f64..0.5, a2 in 0.02f64..0.5,
        b1 in 0.02f64..0.5, b2 in 0.02f64..0.5,
    ) {
        let (pairs, _) = congested_pairs(40 + seed);
        let (a, b) = ([a1, a2], [b1, b2]);
        let mut l: f64 = 0.0;
        for s in 0..=20 {
            let t = s as f64 / 20.0;
            let x = [a1 + t * (b1 - a1), a2 + t * (b2 - a2)];
            match contraction_bound(&pairs, &x) {
                Ok(v) => l = l.max(v),
                Err(_) => return Ok(()),
            }
        }
        prop_assume!(l < 1.0);
        let (fa, fb) = (mfpi_step(&pairs, &a).unwrap(), mfpi_step(&pairs, &b).unwrap());
        // sampled bound, so allow a little slack
        prop_assert!(inf_dist(&fa, &fb) <= 1.05 * l * inf_dist(&a, &b) + 1e-15);
    }

    #[test]
    fn truth_is_a_fixed_point(seed in 0u64..1000) {
        let case = common::three_bus();
        let data = ds(&case, 20, 0.2, seed, SolverKind::DcOpf);
        let view = AggregateView::from_dataset(&data, Some(&case));
        let Ok(found) = search_point_pairs(&view, 0.5, 200, &mut ChaCha8Rng::seed_from_u64(seed), Execution::Sequential) else {
            return Ok(());
        };
        let truth: Vec<f64> = view.targets.iter().map(|&k| case.generators[k].cost.a).collect();
        let f = mfpi_step(&found.pairs, &truth).unwrap();
        prop_assert!(inf_dist(&f, &truth) <= 1e-10 * 0.1);
    }
}
