//! Resampling experiments on run matrices.
//!
//! The protocol treats a fully populated matrix as the ground-truth universe:
//! a split designates K training instances and P/2 held-out test instances,
//! "true" performance of a configuration is its mean over the test block, and
//! a training estimate spends a budget of N runs on the training block. The
//! headline statistics are the two estimation-error functionals
//! [`uniform_es_error`] (worst over-estimate across a candidate set) and
//! [`train_es_error`] (over-estimate at the configuration training would
//! pick).
//!
//! Repetitions are embarrassingly parallel: every repetition derives its own
//! random stream from (master seed, grid point, repetition index), so results
//! are identical regardless of thread scheduling, and aggregation uses
//! compensated summation so they are stable under permutation of the
//! repetition order.

use rand::distr::Distribution;
use rand::distr::weighted::WeightedIndex;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::allocation::Allocation;
use crate::bounds::{finite_bound, BoundInput};
use crate::error::{Error, Result};
use crate::estimation::{estimate, replacement_design, tau_squared, EvalSource, MomentSummary};
use crate::rng;
use crate::scenario::{DiscreteScenario, PerformanceMatrix};

/// Runs per batch for the greedy batching baseline.
pub const BATCH_RUNS: u64 = 5;

// Stream phases; each randomized protocol stage draws from its own space.
const PH_SPLIT: u32 = 1;
const PH_SPLIT_K: u32 = 2;
const PH_PERM: u32 = 3;
const PH_EST: u32 = 4;
const PH_EVEN: u32 = 5;
const PH_BATCH: u32 = 6;
const PH_REPL: u32 = 7;
const PH_TRIAL: u32 = 8;
const PH_SPLIT_OP: u32 = 9;

/// A train/test instance split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitPlan {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
}

/// Draws p1 training and p2 test instances, disjoint, uniformly without
/// replacement.
pub fn split(instances: &[String], p1: usize, p2: usize, seed: u64) -> Result<SplitPlan> {
    let mut rng = rng::stream3(seed, PH_SPLIT_OP, 0, 0);
    let (train, test) = split_indices(instances.len(), p1, p2, &mut rng)?;
    Ok(SplitPlan {
        train_ids: train.iter().map(|&i| instances[i].clone()).collect(),
        test_ids: test.iter().map(|&i| instances[i].clone()).collect(),
        seed,
    })
}

fn split_indices<R: Rng + ?Sized>(
    total: usize,
    p1: usize,
    p2: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if p1 == 0 || p2 == 0 {
        return Err(Error::invalid("split sizes must be positive"));
    }
    if p1 + p2 > total {
        return Err(Error::invalid(format!(
            "split needs {p1} + {p2} instances but only {total} exist"
        )));
    }
    let chosen = index::sample(rng, total, p1 + p2).into_vec();
    Ok((chosen[..p1].to_vec(), chosen[p1..].to_vec()))
}

/// Worst over-estimate across a candidate set: max over configurations of
/// (true − train). Positive when some training estimate flatters.
pub fn uniform_es_error(train: &[f64], truth: &[f64]) -> Result<f64> {
    check_paired(train, truth)?;
    Ok(train
        .iter()
        .zip(truth)
        .map(|(es, tr)| tr - es)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// true − train at the configuration training would pick: the one with the
/// smallest training estimate, ties broken by the lowest index.
pub fn train_es_error(train: &[f64], truth: &[f64]) -> Result<f64> {
    check_paired(train, truth)?;
    let mut best = 0;
    for (i, &v) in train.iter().enumerate().skip(1) {
        if v < train[best] {
            best = i;
        }
    }
    Ok(truth[best] - train[best])
}

fn check_paired(train: &[f64], truth: &[f64]) -> Result<()> {
    if train.is_empty() {
        return Err(Error::invalid("candidate set is empty"));
    }
    if train.len() != truth.len() {
        return Err(Error::invalid(format!(
            "got {} training estimates but {} true values",
            train.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// What a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// The (r1, r2) grid of the estimator comparison.
    EstimatorGrid,
    /// Candidate-set size m.
    ConfigCount,
    /// Run budget N.
    RunBudget,
    /// Training-set size K.
    TrainSize,
}

impl SweepAxis {
    /// Name of the varied quantity, used as the CSV x-column header.
    pub fn x_column(self) -> &'static str {
        match self {
            SweepAxis::EstimatorGrid => "r2",
            SweepAxis::ConfigCount => "m",
            SweepAxis::RunBudget => "N",
            SweepAxis::TrainSize => "K",
        }
    }
}

/// Provenance of a sweep: where the matrix came from and the fixed protocol
/// parameters, carried in the JSON envelope for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMeta {
    /// Scenario or matrix name.
    pub source: String,
    pub seed: u64,
    pub reps: u32,
    /// Matrix dimensions M × P × R.
    pub configs: usize,
    pub instances: usize,
    pub replicates: usize,
    /// Held-out test block size P/2.
    pub test_block: usize,
}

/// One grid point: `stats[i]` is the (mean, sample std) over repetitions of
/// the series named `SweepResult::series[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    pub x: f64,
    pub reps: u32,
    pub stats: Vec<(f64, f64)>,
}

/// Aggregated sweep output; one row per grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub meta: SweepMeta,
    pub series: Vec<&'static str>,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn series_index(&self, name: &str) -> Option<usize> {
        self.series.iter().position(|s| *s == name)
    }

    /// The (x, mean) curve of one series, e.g. for curve fitting.
    pub fn series_points(&self, name: &str) -> Option<Vec<(f64, f64)>> {
        let i = self.series_index(name)?;
        Some(self.points.iter().map(|p| (p.x, p.stats[i].0)).collect())
    }

    /// Long-form CSV: `r1,` (estimator grid only) x column, reps, then one
    /// mean/std column pair per series.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.axis == SweepAxis::EstimatorGrid {
            out.push_str("r1,");
        }
        out.push_str(self.axis.x_column());
        out.push_str(",reps");
        for s in &self.series {
            out.push_str(&format!(",{s}_mean,{s}_std"));
        }
        out.push('\n');
        for p in &self.points {
            if let Some(r1) = p.r1 {
                out.push_str(&format!("{r1},"));
            }
            out.push_str(&format!("{},{}", p.x, p.reps));
            for (mean, std) in &p.stats {
                out.push_str(&format!(",{mean},{std}"));
            }
            out.push('\n');
        }
        out
    }
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Mean and sample standard deviation, order-independent to ~1e-16.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = kahan_sum(values.iter().copied()) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = kahan_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Compares the three allocation rules on a resampling grid.
///
/// For every r1 in `r1_grid`: K = ⌈r1·P⌉ training instances are split
/// against P/2 test instances, `reps` times (splits are shared across the r2
/// points and the three rules, so comparisons are paired). For every r2:
/// the budget N = ⌈r2·K⌉ is spent per the even, batch-of-5, and
/// with-replacement rules, and every configuration's training estimate is
/// compared against its test-block mean. Per rule the series are the mean
/// absolute error (headline) and the signed mean error.
pub fn compare_estimators(
    matrix: &PerformanceMatrix,
    label: &str,
    r1_grid: &[f64],
    r2_grid: &[f64],
    reps: u32,
    seed: u64,
) -> Result<SweepResult> {
    if r1_grid.is_empty() || r2_grid.is_empty() {
        return Err(Error::invalid("r1 and r2 grids must be non-empty"));
    }
    if reps == 0 {
        return Err(Error::invalid("repetition count must be positive"));
    }
    let p = matrix.num_instances();
    let p2 = p / 2;
    if p2 == 0 {
        return Err(Error::invalid("comparison needs at least 2 instances"));
    }
    let r = matrix.runs_per_cell() as u64;
    let m = matrix.num_configs();

    // Resolve and validate the whole grid before spending any work.
    let mut ks = Vec::with_capacity(r1_grid.len());
    for &r1 in r1_grid {
        if !(r1.is_finite() && r1 > 0.0) {
            return Err(Error::invalid(format!("r1 must be positive (got {r1})")));
        }
        let k = (r1 * p as f64).ceil() as usize;
        if k + p2 > p {
            return Err(Error::invalid(format!(
                "r1 = {r1} needs {k} training instances, but only {} are left after the {p2}-instance test block",
                p - p2
            )));
        }
        ks.push(k);
    }
    let mut ns = Vec::with_capacity(r1_grid.len() * r2_grid.len());
    for &k in &ks {
        for &r2 in r2_grid {
            if !(r2.is_finite() && r2 > 0.0) {
                return Err(Error::invalid(format!("r2 must be positive (got {r2})")));
            }
            let n = (r2 * k as f64).ceil() as u64;
            if n.div_ceil(k as u64) > r {
                return Err(Error::invalid(format!(
                    "r2 = {r2} needs {} runs per training instance, but the matrix has {r} replicates",
                    n.div_ceil(k as u64)
                )));
            }
            if n > k as u64 * BATCH_RUNS {
                return Err(Error::invalid(format!(
                    "r2 = {r2} exceeds the batch rule's capacity of {BATCH_RUNS} runs per instance"
                )));
            }
            if n.min(BATCH_RUNS) > r {
                return Err(Error::invalid(format!(
                    "the batch rule needs {} replicates per cell, but the matrix has {r}",
                    n.min(BATCH_RUNS)
                )));
            }
            ns.push(n);
        }
    }

    let mut points = Vec::with_capacity(r1_grid.len() * r2_grid.len());
    for (g, (&r1, &k)) in r1_grid.iter().zip(&ks).enumerate() {
        // per_rep[t][j] = [even, batch, repl] × [abs, signed] at r2 point j
        let per_rep: Vec<Vec<[f64; 6]>> = (0..reps)
            .into_par_iter()
            .map(|t| -> Result<Vec<[f64; 6]>> {
                let t = t as u64;
                let mut split_rng = rng::stream3(seed, PH_SPLIT, g as u64, t);
                let (train, test) = split_indices(p, k, p2, &mut split_rng)?;
                let truth: Vec<f64> = (0..m).map(|c| matrix.mean_over(c, &test)).collect();
                let source = EvalSource::Matrix(matrix);

                let mut row = Vec::with_capacity(r2_grid.len());
                for j in 0..r2_grid.len() {
                    let n = ns[g * r2_grid.len() + j];
                    let gi = (g * r2_grid.len() + j) as u64;
                    let mut stats = [0.0; 6];
                    for (which, phase) in [PH_EVEN, PH_BATCH, PH_REPL].into_iter().enumerate() {
                        let mut est_rng = rng::stream3(seed, phase, gi, t);
                        let (alloc, binding) = match phase {
                            PH_EVEN => (Allocation::even(n, k, &mut est_rng)?, train.clone()),
                            PH_BATCH => (Allocation::batched(n, k, BATCH_RUNS, &mut est_rng)?, train.clone()),
                            _ => replacement_design(n, &train, &mut est_rng)?,
                        };
                        let (mut abs_sum, mut sig_sum) = (0.0, 0.0);
                        for (c, &truth_c) in truth.iter().enumerate() {
                            let est = estimate(&source, c, &alloc, &binding, &mut est_rng)?;
                            let err = truth_c - est;
                            abs_sum += err.abs();
                            sig_sum += err;
                        }
                        stats[which] = abs_sum / m as f64;
                        stats[3 + which] = sig_sum / m as f64;
                    }
                    row.push(stats);
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;

        for (j, &r2) in r2_grid.iter().enumerate() {
            let column = |s: usize| -> Vec<f64> { per_rep.iter().map(|row| row[j][s]).collect() };
            let stats = (0..6).map(|s| mean_std(&column(s))).collect();
            points.push(SweepPoint { r1: Some(r1), x: r2, reps, stats });
        }
    }

    Ok(SweepResult {
        axis: SweepAxis::EstimatorGrid,
        meta: SweepMeta {
            source: label.to_string(),
            seed,
            reps,
            configs: m,
            instances: p,
            replicates: r as usize,
            test_block: p2,
        },
        series: vec!["even", "batch5", "replacement", "even_signed", "batch5_signed", "replacement_signed"],
        points,
    })
}

/// Sweeps the estimation errors along one axis of the protocol.
///
/// Fixed quantities follow the protocol defaults: test block P/2; training
/// block K = P/2 (except on the [`SweepAxis::TrainSize`] axis, where K is the
/// grid value); budget N = R·K spending every replicate of every training
/// instance (except on the [`SweepAxis::RunBudget`] axis, where N is the grid
/// value under an even allocation).
///
/// On the [`SweepAxis::ConfigCount`] axis the candidate set grows one
/// uniformly-shuffled configuration at a time per repetition and both error
/// series are recorded at each grid size; the other axes use all M
/// configurations. `grid` defaults to every feasible integer.
pub fn sweep(
    matrix: &PerformanceMatrix,
    label: &str,
    axis: SweepAxis,
    grid: Option<&[u64]>,
    reps: u32,
    seed: u64,
) -> Result<SweepResult> {
    if axis == SweepAxis::EstimatorGrid {
        return Err(Error::invalid("the estimator grid is produced by the comparison, not a sweep"));
    }
    if reps == 0 {
        return Err(Error::invalid("repetition count must be positive"));
    }
    let m = matrix.num_configs();
    let p = matrix.num_instances();
    let r = matrix.runs_per_cell() as u64;
    let k = p / 2;
    let p2 = p / 2;
    if k == 0 {
        return Err(Error::invalid("sweeps need at least 2 instances"));
    }
    let full_n = r * k as u64;

    let max_x = match axis {
        SweepAxis::ConfigCount => m as u64,
        SweepAxis::RunBudget => full_n,
        SweepAxis::TrainSize => k as u64,
        SweepAxis::EstimatorGrid => unreachable!(),
    };
    let grid: Vec<u64> = match grid {
        Some(g) => {
            let mut g = g.to_vec();
            g.sort_unstable();
            g.dedup();
            if g.is_empty() {
                return Err(Error::invalid("grid must be non-empty"));
            }
            if g[0] < 1 || *g.last().unwrap() > max_x {
                return Err(Error::invalid(format!(
                    "grid values must lie in [1, {max_x}] for this axis and matrix"
                )));
            }
            g
        }
        None => (1..=max_x).collect(),
    };

    let source = EvalSource::Matrix(matrix);
    let estimates_under = |alloc: &Allocation, train: &[usize], rng: &mut rand_chacha::ChaCha8Rng| -> Result<Vec<f64>> {
        (0..m).map(|c| estimate(&source, c, alloc, train, rng)).collect()
    };

    // per_rep[t][j] = (uniform_es_error, train_es_error) at grid point j
    let per_rep: Vec<Vec<(f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|t| -> Result<Vec<(f64, f64)>> {
            let t = t as u64;
            match axis {
                SweepAxis::ConfigCount => {
                    let mut split_rng = rng::stream3(seed, PH_SPLIT, 0, t);
                    let (train, test) = split_indices(p, k, p2, &mut split_rng)?;
                    let truth: Vec<f64> = (0..m).map(|c| matrix.mean_over(c, &test)).collect();
                    let mut est_rng = rng::stream3(seed, PH_EST, 0, t);
                    let alloc = Allocation::even(full_n, k, &mut est_rng)?;
                    let est = estimates_under(&alloc, &train, &mut est_rng)?;

                    let mut order: Vec<usize> = (0..m).collect();
                    order.shuffle(&mut rng::stream3(seed, PH_PERM, 0, t));

                    let mut row = Vec::with_capacity(grid.len());
                    let mut next = 0;
                    let mut worst = f64::NEG_INFINITY;
                    let mut best = order[0];
                    for (i, &c) in order.iter().enumerate() {
                        worst = worst.max(truth[c] - est[c]);
                        if est[c] < est[best] || (est[c] == est[best] && c < best) {
                            best = c;
                        }
                        while next < grid.len() && grid[next] == i as u64 + 1 {
                            row.push((worst, truth[best] - est[best]));
                            next += 1;
                        }
                    }
                    Ok(row)
                }
                SweepAxis::RunBudget => {
                    let mut split_rng = rng::stream3(seed, PH_SPLIT, 0, t);
                    let (train, test) = split_indices(p, k, p2, &mut split_rng)?;
                    let truth: Vec<f64> = (0..m).map(|c| matrix.mean_over(c, &test)).collect();
                    grid.iter()
                        .enumerate()
                        .map(|(j, &n)| {
                            let mut est_rng = rng::stream3(seed, PH_EST, j as u64, t);
                            let alloc = Allocation::even(n, k, &mut est_rng)?;
                            let est = estimates_under(&alloc, &train, &mut est_rng)?;
                            Ok((uniform_es_error(&est, &truth)?, train_es_error(&est, &truth)?))
                        })
                        .collect()
                }
                SweepAxis::TrainSize => grid
                    .iter()
                    .enumerate()
                    .map(|(j, &kx)| {
                        let kx = kx as usize;
                        let mut split_rng = rng::stream3(seed, PH_SPLIT_K, j as u64, t);
                        let (train, test) = split_indices(p, kx, p2, &mut split_rng)?;
                        let truth: Vec<f64> = (0..m).map(|c| matrix.mean_over(c, &test)).collect();
                        let mut est_rng = rng::stream3(seed, PH_EST, j as u64, t);
                        let alloc = Allocation::even(r * kx as u64, kx, &mut est_rng)?;
                        let est = estimates_under(&alloc, &train, &mut est_rng)?;
                        Ok((uniform_es_error(&est, &truth)?, train_es_error(&est, &truth)?))
                    })
                    .collect(),
                SweepAxis::EstimatorGrid => unreachable!(),
            }
        })
        .collect::<Result<_>>()?;

    let points = grid
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let uniform: Vec<f64> = per_rep.iter().map(|row| row[j].0).collect();
            let train: Vec<f64> = per_rep.iter().map(|row| row[j].1).collect();
            SweepPoint {
                r1: None,
                x: x as f64,
                reps,
                stats: vec![mean_std(&uniform), mean_std(&train)],
            }
        })
        .collect();

    Ok(SweepResult {
        axis,
        meta: SweepMeta {
            source: label.to_string(),
            seed,
            reps,
            configs: m,
            instances: p,
            replicates: r as usize,
            test_block: p2,
        },
        series: vec!["uniform", "train"],
        points,
    })
}

/// The candidate whose τ² is largest under this allocation — the moments the
/// finite-space bound has to absorb.
pub fn worst_case_moments(
    scenario: &DiscreteScenario,
    configs: &[usize],
    alloc: &Allocation,
) -> Result<MomentSummary> {
    if configs.is_empty() {
        return Err(Error::invalid("candidate set is empty"));
    }
    let mut worst: Option<(f64, MomentSummary)> = None;
    for &c in configs {
        if c >= scenario.configs().len() {
            return Err(Error::invalid(format!("configuration index {c} out of range")));
        }
        let moments = scenario.exact_moments(c);
        let tau = tau_squared(&moments, alloc)?;
        if worst.as_ref().is_none_or(|(t, _)| tau > *t) {
            worst = Some((tau, moments));
        }
    }
    Ok(worst.expect("non-empty").1)
}

/// Estimates how often the finite-space bound at 1 − δ is violated: draws
/// `trials` fresh training sets (instances i.i.d. from the scenario, runs per
/// the allocation, shared across the candidate set), and counts trials where
/// sup over candidates of (true − estimate) exceeds the bound's ε. Sound
/// bounds keep the rate at or below δ.
pub fn coverage_trial(
    scenario: &DiscreteScenario,
    configs: &[usize],
    alloc: &Allocation,
    delta: f64,
    trials: u32,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::invalid("trial count must be positive"));
    }
    let moments = worst_case_moments(scenario, configs, alloc)?;
    let input = BoundInput {
        delta,
        m: Some(configs.len() as u128),
        alloc: alloc.clone(),
        range: scenario.meta().range(),
        moments,
        h: None,
        lipschitz: None,
        radius: None,
    };
    let epsilon = finite_bound(&input)?.epsilon;
    let truth: Vec<f64> = configs.iter().map(|&c| scenario.exact_moments(c).mean).collect();
    let weights = WeightedIndex::new(scenario.instance_probs())
        .map_err(|e| Error::invalid(format!("instance probabilities are not sampleable: {e}")))?;
    let k = alloc.num_instances();
    let source = EvalSource::Scenario(scenario);

    let violations: u64 = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<u64> {
            let mut rng = rng::stream3(seed, PH_TRIAL, 0, t as u64);
            let binding: Vec<usize> = (0..k).map(|_| weights.sample(&mut rng)).collect();
            let mut sup = f64::NEG_INFINITY;
            for (i, &c) in configs.iter().enumerate() {
                let est = estimate(&source, c, alloc, &binding, &mut rng)?;
                sup = sup.max(truth[i] - est);
            }
            Ok(u64::from(sup > epsilon))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(violations as f64 / trials as f64)
}

/// Least-squares fit of the trend shape belonging to a sweep axis:
///
/// * config count: y = a·ln x + b·√(ln x)  (x ≥ 1)
/// * run budget:   y = a + b·√(1/x)        (x > 0)
/// * train size:   y = a/x + b·√(1/x)      (x > 0)
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub a: f64,
    pub b: f64,
    pub residual_norm: f64,
    pub r_squared: f64,
}

pub fn fit_curve(axis: SweepAxis, points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::invalid("fitting needs at least 2 points"));
    }
    let basis = |x: f64| -> Result<(f64, f64)> {
        if !x.is_finite() {
            return Err(Error::invalid(format!("x values must be finite (got {x})")));
        }
        match axis {
            SweepAxis::ConfigCount => {
                if x < 1.0 {
                    return Err(Error::invalid(format!("config-count fits need x ≥ 1 (got {x})")));
                }
                let lx = x.ln();
                Ok((lx, lx.sqrt()))
            }
            SweepAxis::RunBudget => {
                if x <= 0.0 {
                    return Err(Error::invalid(format!("run-budget fits need x > 0 (got {x})")));
                }
                Ok((1.0, (1.0 / x).sqrt()))
            }
            SweepAxis::TrainSize => {
                if x <= 0.0 {
                    return Err(Error::invalid(format!("train-size fits need x > 0 (got {x})")));
                }
                Ok((1.0 / x, (1.0 / x).sqrt()))
            }
            SweepAxis::EstimatorGrid => Err(Error::invalid("no trend shape is defined for the estimator grid")),
        }
    };

    let (mut s11, mut s12, mut s22, mut sy1, mut sy2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        if !y.is_finite() {
            return Err(Error::invalid(format!("y values must be finite (got {y})")));
        }
        let (f1, f2) = basis(x)?;
        s11 += f1 * f1;
        s12 += f1 * f2;
        s22 += f2 * f2;
        sy1 += f1 * y;
        sy2 += f2 * y;
    }
    let det = s11 * s22 - s12 * s12;
    if !det.is_finite() || det.abs() <= 1e-12 * (s11 * s22).max(f64::MIN_POSITIVE) {
        return Err(Error::invalid(
            "rank-deficient fit: the basis functions are (numerically) collinear on these x values",
        ));
    }
    let a = (sy1 * s22 - sy2 * s12) / det;
    let b = (sy2 * s11 - sy1 * s12) / det;

    let y_mean = points.iter().map(|&(_, y)| y).sum::<f64>() / points.len() as f64;
    let (mut ss_res, mut ss_tot, mut ss_yy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (f1, f2) = basis(x)?;
        let e = y - a * f1 - b * f2;
        ss_res += e * e;
        ss_tot += (y - y_mean) * (y - y_mean);
        ss_yy += y * y;
    }
    // Constant data has no variance to explain; report 1 when the fit
    // reproduces it to within rounding (12 digits relative), else 0.
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-24 * ss_yy.max(f64::MIN_POSITIVE) {
        1.0
    } else {
        0.0
    };
    Ok(FitResult { a, b, residual_norm: ss_res.sqrt(), r_squared })
}
