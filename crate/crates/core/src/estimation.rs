//! Training-performance estimation and its variance.
//!
//! `estimate` averages N runs spread over bound instances per an
//! [`Allocation`]. Its exact variance decomposes over the two noise sources:
//!
//! ```text
//! Var = σ̄²_wi / N + (Σnᵢ² / N²) · σ̄²_ai
//! ```
//!
//! where σ̄²_wi is the mean within-instance variance and σ̄²_ai the variance
//! of instance means. `tau_squared` is the same decomposition scaled for the
//! tail bounds: τ² = σ̄²_wi + (Σnᵢ²/N)·σ̄²_ai.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::error::{Error, Result};
use crate::scenario::{DiscreteScenario, PerformanceMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentSource {
    /// Enumerated from a finite scenario.
    Exact,
    /// One-way analysis-of-variance estimate from a run matrix.
    PlugIn,
}

/// Mean utility plus the two variance components of one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: f64,
    /// Mean over instances of the run-to-run variance, σ̄²_wi.
    pub within_var: f64,
    /// Variance of the per-instance mean utilities, σ̄²_ai.
    pub across_var: f64,
    pub source: MomentSource,
}

/// Where runs come from: replicate cells of a matrix (sampled without
/// replacement) or fresh draws from a finite scenario.
#[derive(Debug, Clone, Copy)]
pub enum EvalSource<'a> {
    Matrix(&'a PerformanceMatrix),
    Scenario(&'a DiscreteScenario),
}

/// Mean of N runs on the bound instances: position `i` of `binding` names
/// the instance (by index into the source) that receives `alloc.counts()[i]`
/// runs. Matrix runs sample distinct replicate columns per position, so a
/// count may not exceed the matrix's replicates.
pub fn estimate<R: Rng + ?Sized>(
    source: &EvalSource,
    config: usize,
    alloc: &Allocation,
    binding: &[usize],
    rng: &mut R,
) -> Result<f64> {
    let counts = alloc.counts();
    if binding.len() != counts.len() {
        return Err(Error::invalid(format!(
            "instance binding has {} entries for {} allocation positions",
            binding.len(),
            counts.len()
        )));
    }
    let n = alloc.total();
    if n == 0 {
        return Err(Error::invalid("cannot estimate from an empty allocation"));
    }

    let mut sum = 0.0;
    match source {
        EvalSource::Matrix(m) => {
            if config >= m.num_configs() {
                return Err(Error::invalid(format!("configuration index {config} out of range")));
            }
            let runs = m.runs_per_cell();
            for (&instance, &count) in binding.iter().zip(counts) {
                if instance >= m.num_instances() {
                    return Err(Error::invalid(format!("instance index {instance} out of range")));
                }
                if count == 0 {
                    continue;
                }
                if count as usize > runs {
                    return Err(Error::invalid(format!(
                        "allocation requests {count} runs on instance `{}` but the matrix has {runs} replicates",
                        m.instances()[instance]
                    )));
                }
                let cell = m.cell(config, instance);
                if count as usize == runs {
                    // Full cell: nothing to choose; summing in storage order
                    // keeps full-budget estimates draw-independent.
                    sum += cell.iter().sum::<f64>();
                } else {
                    for r in index::sample(rng, runs, count as usize) {
                        sum += cell[r];
                    }
                }
            }
        }
        EvalSource::Scenario(s) => {
            if config >= s.configs().len() {
                return Err(Error::invalid(format!("configuration index {config} out of range")));
            }
            for (&instance, &count) in binding.iter().zip(counts) {
                if instance >= s.num_instances() {
                    return Err(Error::invalid(format!("instance index {instance} out of range")));
                }
                for _ in 0..count {
                    sum += s.draw(config, instance, rng);
                }
            }
        }
    }
    Ok(sum / n as f64)
}

/// The per-run-with-replacement design: N slots of one run each, every slot
/// bound to an instance drawn uniformly from `train` with replacement. Kept
/// as slots (not merged counts) so repeated picks of one instance re-draw
/// replicate columns independently.
pub fn replacement_design<R: Rng + ?Sized>(
    n: u64,
    train: &[usize],
    rng: &mut R,
) -> Result<(Allocation, Vec<usize>)> {
    let counts = Allocation::with_replacement(n, train.len(), rng)?;
    let mut slots = Vec::with_capacity(n as usize);
    for (i, &c) in counts.counts().iter().enumerate() {
        slots.extend(std::iter::repeat_n(train[i], c as usize));
    }
    Ok((Allocation::from_counts(vec![1; n as usize]), slots))
}

/// Exact estimator variance for the given moments and allocation.
pub fn estimator_variance(moments: &MomentSummary, alloc: &Allocation) -> Result<f64> {
    let n = positive_budget(alloc)?;
    check_moments(moments)?;
    Ok(moments.within_var / n + alloc.sum_of_squares() as f64 / (n * n) * moments.across_var)
}

/// Variance proxy τ² = σ̄²_wi + (Σnᵢ²/N)·σ̄²_ai used by the tail bounds
/// (N × the estimator variance).
pub fn tau_squared(moments: &MomentSummary, alloc: &Allocation) -> Result<f64> {
    let n = positive_budget(alloc)?;
    check_moments(moments)?;
    Ok(moments.within_var + alloc.sum_of_squares() as f64 / n * moments.across_var)
}

/// Balanced one-way analysis-of-variance moments of one matrix
/// configuration: within = pooled run variance, across = variance of the
/// cell means minus within/R, clamped at zero. Needs at least two runs per
/// cell and two instances.
pub fn plug_in_moments(matrix: &PerformanceMatrix, config: usize) -> Result<MomentSummary> {
    if config >= matrix.num_configs() {
        return Err(Error::invalid(format!("configuration index {config} out of range")));
    }
    let p = matrix.num_instances();
    let r = matrix.runs_per_cell();
    if r < 2 {
        return Err(Error::invalid(format!(
            "plug-in moments need at least 2 runs per cell, matrix has {r}"
        )));
    }
    if p < 2 {
        return Err(Error::invalid(format!(
            "plug-in moments need at least 2 instances, matrix has {p}"
        )));
    }

    let mut cell_means = Vec::with_capacity(p);
    let mut within_sum = 0.0;
    for z in 0..p {
        let cell = matrix.cell(config, z);
        let mean = cell.iter().sum::<f64>() / r as f64;
        within_sum += cell.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64;
        cell_means.push(mean);
    }
    let within_var = within_sum / p as f64;

    let grand = cell_means.iter().sum::<f64>() / p as f64;
    let between = cell_means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (p - 1) as f64;
    let across_var = (between - within_var / r as f64).max(0.0);

    Ok(MomentSummary { mean: grand, within_var, across_var, source: MomentSource::PlugIn })
}

fn positive_budget(alloc: &Allocation) -> Result<f64> {
    match alloc.total() {
        0 => Err(Error::invalid("allocation has an empty budget")),
        n => Ok(n as f64),
    }
}

fn check_moments(moments: &MomentSummary) -> Result<()> {
    for (name, v) in [("within_var", moments.within_var), ("across_var", moments.across_var)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::invalid(format!("{name} must be finite and non-negative (got {v})")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::scenario::tests::{oracle_scenario, raw_meta};

    fn counts(c: &[u64]) -> Allocation {
        Allocation::from_counts(c.to_vec())
    }

    fn exact(mean: f64, within: f64, across: f64) -> MomentSummary {
        MomentSummary { mean, within_var: within, across_var: across, source: MomentSource::Exact }
    }

    #[test]
    fn full_cell_estimate_is_the_cell_mean() {
        let m = PerformanceMatrix::new(vec!["c".into()], vec!["i".into()], 2, vec![2.0, 4.0]).unwrap();
        let v = estimate(
            &EvalSource::Matrix(&m),
            0,
            &counts(&[2]),
            &[0],
            &mut rng::stream(0, 0),
        )
        .unwrap();
        assert_eq!(v, 3.0);
    }

    #[test]
    fn deterministic_scenario_estimate_equals_the_true_mean() {
        let s = crate::scenario::DiscreteScenario::new(
            raw_meta("det", 0.0, 5.0),
            vec![1.0],
            [("c0".to_string(), vec![vec![(4.0, 1.0)]])],
        )
        .unwrap();
        let v = estimate(
            &EvalSource::Scenario(&s),
            0,
            &counts(&[3]),
            &[0],
            &mut rng::stream(0, 0),
        )
        .unwrap();
        assert_eq!(v, 4.0);
        assert_eq!(s.exact_moments(0).mean, 4.0);
    }

    #[test]
    fn estimate_rejects_contract_violations() {
        let m = PerformanceMatrix::new(vec!["c".into()], vec!["i".into()], 2, vec![2.0, 4.0]).unwrap();
        let src = EvalSource::Matrix(&m);
        let r = &mut rng::stream(0, 0);
        assert!(estimate(&src, 0, &counts(&[1, 1]), &[0], r).is_err(), "binding length");
        assert!(estimate(&src, 0, &counts(&[0]), &[0], r).is_err(), "empty budget");
        let err = estimate(&src, 0, &counts(&[3]), &[0], r).unwrap_err().to_string();
        assert!(err.contains("3 runs") && err.contains("2 replicates"), "{err}");
    }

    #[test]
    fn estimate_is_reproducible_per_stream() {
        let s = oracle_scenario();
        let src = EvalSource::Scenario(&s);
        let alloc = counts(&[2, 1]);
        let a = estimate(&src, 0, &alloc, &[0, 1], &mut rng::stream(5, 1)).unwrap();
        let b = estimate(&src, 0, &alloc, &[0, 1], &mut rng::stream(5, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn variance_formula_matches_worked_example() {
        let m = exact(0.0, 2.0, 1.0);
        let v = estimator_variance(&m, &counts(&[2, 2, 2, 2, 2])).unwrap();
        assert!((v - 0.4).abs() < 1e-15, "{v}");
    }

    #[test]
    fn tau_squared_matches_worked_example() {
        let m = exact(0.0, 2.0, 1.0);
        let t = tau_squared(&m, &counts(&[5, 5, 2])).unwrap();
        assert!((t - 6.5).abs() < 1e-15, "{t}");
    }

    #[test]
    fn single_run_per_instance_recovers_total_variance_over_n() {
        // With all nᵢ = 1 the estimator is a plain mean of N i.i.d. draws, so
        // its variance is (σ̄²_wi + σ̄²_ai)/N — the law of total variance.
        let m = exact(0.0, 1.0, 2.25);
        let v = estimator_variance(&m, &counts(&[1; 13])).unwrap();
        assert!((v - 3.25 / 13.0).abs() < 1e-15);
        let t = tau_squared(&m, &counts(&[1; 13])).unwrap();
        assert!((t - 3.25).abs() < 1e-15);
    }

    #[test]
    fn variance_rejects_empty_or_negative_inputs() {
        let m = exact(0.0, 1.0, 1.0);
        assert!(estimator_variance(&m, &counts(&[0, 0])).is_err());
        let bad = exact(0.0, -1.0, 1.0);
        assert!(estimator_variance(&bad, &counts(&[1])).is_err());
        assert!(tau_squared(&bad, &counts(&[1])).is_err());
    }

    #[test]
    fn plug_in_is_exact_on_a_two_by_two_block() {
        // Cells {0,2} and {3,5}: within = 2 (sample variance, n−1), cell
        // means 1 and 4 give between = 4.5, so across = 4.5 − 2/2 = 3.5.
        let m = PerformanceMatrix::new(
            vec!["c".into()],
            vec!["a".into(), "b".into()],
            2,
            vec![0.0, 2.0, 3.0, 5.0],
        )
        .unwrap();
        let got = plug_in_moments(&m, 0).unwrap();
        assert_eq!(got.mean, 2.5);
        assert_eq!(got.within_var, 2.0);
        assert_eq!(got.across_var, 3.5);
        assert_eq!(got.source, MomentSource::PlugIn);
    }

    #[test]
    fn plug_in_clamps_negative_across_variance_to_zero() {
        // Equal cell means with within-run spread: the between-mean variance
        // is 0, so the unbiased across estimate would be negative.
        let m = PerformanceMatrix::new(
            vec!["c".into()],
            vec!["a".into(), "b".into()],
            2,
            vec![0.0, 2.0, 1.0, 1.0],
        )
        .unwrap();
        let got = plug_in_moments(&m, 0).unwrap();
        assert_eq!(got.across_var, 0.0);
        assert!(got.within_var > 0.0);
    }

    #[test]
    fn plug_in_needs_replication_on_both_axes() {
        let one_run = PerformanceMatrix::new(
            vec!["c".into()],
            vec!["a".into(), "b".into()],
            1,
            vec![1.0, 2.0],
        )
        .unwrap();
        assert!(plug_in_moments(&one_run, 0).is_err());
        let one_instance =
            PerformanceMatrix::new(vec!["c".into()], vec!["a".into()], 2, vec![1.0, 2.0]).unwrap();
        assert!(plug_in_moments(&one_instance, 0).is_err());
    }
}
