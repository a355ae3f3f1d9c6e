//! Cross-module checks of the resampling protocol.

use rand::Rng;
use runest::allocation::Allocation;
use runest::estimation::plug_in_moments;
use runest::harness::{sweep, worst_case_moments, SweepAxis};
use runest::rng;
use runest::scenario::{DiscreteScenario, Metric, PerformanceMatrix, ScenarioMeta};

fn meta(lo: f64, hi: f64) -> ScenarioMeta {
    ScenarioMeta {
        name: "protocol".into(),
        metric: Metric::RawUtility,
        cutoff: None,
        u_lo: lo,
        u_hi: hi,
        num_params: 1,
        lipschitz: None,
        radius: None,
    }
}

fn random_matrix(m: usize, p: usize, r: usize, seed: u64) -> PerformanceMatrix {
    let mut rng = rng::stream(seed, 0);
    let values: Vec<f64> = (0..m * p * r).map(|_| rng.random_range(0.0..10.0)).collect();
    PerformanceMatrix::new(
        (0..m).map(|c| format!("c{c}")).collect(),
        (0..p).map(|i| format!("i{i}")).collect(),
        r,
        values,
    )
    .unwrap()
}

/// The candidate-count sweep at m = M and the budget sweep at N = R·K look at
/// the same protocol point (all configurations, every replicate of every
/// training instance). Matched seeds must make them agree bit for bit.
#[test]
fn config_count_and_run_budget_sweeps_agree_at_their_shared_endpoint() {
    let matrix = random_matrix(8, 12, 4, 11);
    let full_n = 4 * (12 / 2) as u64;
    let at_m = sweep(&matrix, "t", SweepAxis::ConfigCount, Some(&[8]), 16, 42).unwrap();
    let at_n = sweep(&matrix, "t", SweepAxis::RunBudget, Some(&[full_n]), 16, 42).unwrap();
    assert_eq!(at_m.points[0].stats, at_n.points[0].stats);
}

/// Plug-in moments are unbiased for the scenario moments they estimate
/// (across-variance before its clamp at zero, which this design never hits).
/// 1200 sampled 60×3 matrices; tolerances are 4 empirical standard errors.
#[test]
fn plug_in_moments_are_unbiased_over_sampled_matrices() {
    let scenario = DiscreteScenario::new(
        meta(0.0, 5.0),
        vec![0.5, 0.5],
        [(
            "c0".to_string(),
            vec![vec![(0.0, 0.5), (2.0, 0.5)], vec![(3.0, 0.5), (5.0, 0.5)]],
        )],
    )
    .unwrap();
    let truth = scenario.exact_moments(0);

    let trials = 1200u64;
    let (mut means, mut withins, mut acrosses) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..trials {
        let matrix = scenario.sample_matrix(1, 60, 3, 1000 + t).unwrap();
        let m = plug_in_moments(&matrix, 0).unwrap();
        means.push(m.mean);
        withins.push(m.within_var);
        acrosses.push(m.across_var);
    }

    let check = |label: &str, samples: &[f64], target: f64| {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(
            (mean - target).abs() < 4.0 * se,
            "{label}: mean of estimates {mean} vs target {target} (se {se})"
        );
    };
    check("mean", &means, truth.mean);
    check("within", &withins, truth.within_var);
    check("across", &acrosses, truth.across_var);
}

/// The worst-case pick maximizes τ², not the mean: a deterministic config
/// with a huge mean must lose to a noisy one.
#[test]
fn worst_case_moments_pick_the_noisiest_candidate() {
    let scenario = DiscreteScenario::new(
        meta(0.0, 5.0),
        vec![0.5, 0.5],
        [
            (
                "noisy".to_string(),
                vec![vec![(0.0, 0.5), (2.0, 0.5)], vec![(3.0, 0.5), (5.0, 0.5)]],
            ),
            (
                "flat".to_string(),
                vec![vec![(5.0, 1.0)], vec![(5.0, 1.0)]],
            ),
        ],
    )
    .unwrap();
    let alloc = Allocation::from_counts(vec![2, 2]);
    let picked = worst_case_moments(&scenario, &[0, 1], &alloc).unwrap();
    // Configs are stored sorted, so index 1 is "noisy".
    assert_eq!(picked.mean, scenario.exact_moments(1).mean);
    assert!(picked.within_var > 0.0);
}
