//! Randomized invariants of allocations, the inequality solver, curve fits,
//! and the file formats.

use proptest::prelude::*;
use rand::Rng;
use runest::allocation::Allocation;
use runest::bounds::solve_inequality;
use runest::harness::{fit_curve, train_es_error, uniform_es_error, SweepAxis};
use runest::rng;
use runest::scenario::{DiscreteScenario, Metric, OutcomeTables, PerformanceMatrix, ScenarioMeta};

fn meta(lo: f64, hi: f64) -> ScenarioMeta {
    ScenarioMeta {
        name: "prop".into(),
        metric: Metric::RawUtility,
        cutoff: None,
        u_lo: lo,
        u_hi: hi,
        num_params: 1,
        lipschitz: None,
        radius: None,
    }
}

proptest! {
    #[test]
    fn even_allocation_spends_the_budget_as_evenly_as_possible(
        n in 0u64..500, k in 1usize..60, seed in 0u64..1000,
    ) {
        let alloc = Allocation::even(n, k, &mut rng::stream(seed, 0)).unwrap();
        prop_assert_eq!(alloc.total(), n);
        prop_assert_eq!(alloc.num_instances(), k);
        let max = alloc.counts().iter().max().unwrap();
        let min = alloc.counts().iter().min().unwrap();
        prop_assert!(max - min <= 1);
    }

    #[test]
    fn batched_allocation_fills_whole_batches_first(
        k in 1usize..40, batch in 1u64..8, frac in 0.0f64..1.0, seed in 0u64..1000,
    ) {
        let n = (frac * (k as u64 * batch) as f64).floor() as u64;
        let alloc = Allocation::batched(n, k, batch, &mut rng::stream(seed, 1)).unwrap();
        prop_assert_eq!(alloc.total(), n);
        prop_assert!(alloc.counts().iter().all(|&c| c <= batch));
        let partial = alloc.counts().iter().filter(|&&c| 0 < c && c < batch).count();
        prop_assert!(partial <= 1, "counts {:?}", alloc.counts());
    }

    #[test]
    fn replacement_allocation_spends_the_budget(
        n in 0u64..500, k in 1usize..60, seed in 0u64..1000,
    ) {
        let alloc = Allocation::with_replacement(n, k, &mut rng::stream(seed, 2)).unwrap();
        prop_assert_eq!(alloc.total(), n);
        prop_assert_eq!(alloc.num_instances(), k);
    }

    #[test]
    fn solver_output_satisfies_its_inequality(
        k in 0.5f64..4.0, l in 1e-3f64..1e3, b in 1e-3f64..1e3, c in 1e-3f64..1e3,
    ) {
        let eps = solve_inequality(k, l, b, c).unwrap();
        prop_assert!(eps > 0.0);
        let lhs = l * eps.powf(k) + b * eps.ln();
        prop_assert!(lhs >= c - 1e-9 * c.abs(), "lhs {lhs} < c {c} at eps {eps}");
    }

    #[test]
    fn the_uniform_error_dominates_the_train_error(
        pairs in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..20),
    ) {
        let train: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let truth: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let uniform = uniform_es_error(&train, &truth).unwrap();
        let at_pick = train_es_error(&train, &truth).unwrap();
        prop_assert!(uniform >= at_pick);
        for (es, tr) in train.iter().zip(&truth) {
            prop_assert!(uniform >= tr - es);
        }
    }

    #[test]
    fn fits_recover_planted_coefficients(
        a in -5.0f64..5.0, b in -5.0f64..5.0, extra in prop::collection::vec(2u32..2000, 1..30),
    ) {
        for axis in [SweepAxis::ConfigCount, SweepAxis::RunBudget, SweepAxis::TrainSize] {
            // Anchor two well-separated x values so the design stays
            // comfortably full-rank no matter what else is drawn.
            let mut xs: Vec<u32> = vec![2, 1000];
            xs.extend(&extra);
            xs.sort_unstable();
            xs.dedup();
            let points: Vec<(f64, f64)> = xs
                .iter()
                .map(|&xi| {
                    let x = xi as f64;
                    let y = match axis {
                        SweepAxis::ConfigCount => a * x.ln() + b * x.ln().sqrt(),
                        SweepAxis::RunBudget => a + b * (1.0 / x).sqrt(),
                        SweepAxis::TrainSize => a / x + b * (1.0 / x).sqrt(),
                        SweepAxis::EstimatorGrid => unreachable!(),
                    };
                    (x, y)
                })
                .collect();
            let fit = fit_curve(axis, &points).unwrap();
            let tol = 1e-6 * (1.0 + a.abs() + b.abs());
            prop_assert!((fit.a - a).abs() < tol, "{axis:?}: a {} vs {a}", fit.a);
            prop_assert!((fit.b - b).abs() < tol, "{axis:?}: b {} vs {b}", fit.b);
        }
    }

    #[test]
    fn matrices_round_trip_through_csv(
        m in 1usize..4, p in 1usize..4, r in 1usize..3, seed in 0u64..100,
    ) {
        let mut rng = rng::stream(seed, 3);
        let values: Vec<f64> = (0..m * p * r).map(|_| rng.random_range(0.0..10.0)).collect();
        let matrix = PerformanceMatrix::new(
            (0..m).map(|c| format!("c{c}")).collect(),
            (0..p).map(|i| format!("i{i}")).collect(),
            r,
            values,
        ).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip.csv");
        let meta = meta(0.0, 10.0);
        matrix.save(&path, &meta).unwrap();
        let back = PerformanceMatrix::load(&path, &meta).unwrap();
        prop_assert_eq!(matrix, back);
    }

    #[test]
    fn scenarios_round_trip_through_json(
        probs_raw in prop::collection::vec(1u32..100, 1..5),
        seed in 0u64..100,
    ) {
        let total: u32 = probs_raw.iter().sum();
        let probs: Vec<f64> = probs_raw.iter().map(|&w| w as f64 / total as f64).collect();
        let mut rng = rng::stream(seed, 4);
        let outcomes: Vec<(String, OutcomeTables)> = (0..2)
            .map(|c| {
                let tables = probs
                    .iter()
                    .map(|_| {
                        let k = rng.random_range(1..4);
                        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(1..50) as f64).collect();
                        let wsum: f64 = weights.iter().sum();
                        weights
                            .iter()
                            .map(|w| (rng.random_range(0.0..10.0), w / wsum))
                            .collect()
                    })
                    .collect();
                (format!("c{c}"), tables)
            })
            .collect();
        let scenario = DiscreteScenario::new(meta(0.0, 10.0), probs, outcomes).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        scenario.save(&path).unwrap();
        let back = DiscreteScenario::load(&path, scenario.meta()).unwrap();
        prop_assert_eq!(scenario, back);
    }
}
