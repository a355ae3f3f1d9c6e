//! `runest` — estimate configuration performance from finite run budgets,
//! compare run-allocation rules, and evaluate the matching error bounds.
//!
//! Every subcommand is deterministic given `--seed`: reruns produce
//! byte-identical files.

mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::seq::index;
use rand::Rng;
use runest::bounds::{deviation_tail, finite_bound, finite_even_bound, infinite_bound};
use runest::estimation::{plug_in_moments, replacement_design, tau_squared};
use runest::harness::{compare_estimators, coverage_trial, fit_curve, sweep, worst_case_moments};
use runest::{
    Allocation, BoundInput, DiscreteScenario, EvalSource, Metric, PerformanceMatrix,
    ScenarioMeta, SweepAxis, SweepResult,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "runest", version, about = "Run-allocation estimators and error bounds")]
struct Cli {
    /// Master seed; every random choice in a command derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores; RUNEST_THREADS overrides the default).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic discrete scenario (and optionally sample a run matrix from it).
    Synth(SynthArgs),
    /// Report mean / within-instance / across-instance moments from a run matrix.
    Moments(MomentsArgs),
    /// Estimate configuration performance from a run matrix under an allocation rule.
    Estimate(EstimateArgs),
    /// Evaluate a deviation bound for a given allocation and variance profile.
    Bound(BoundArgs),
    /// Compare allocation rules over a grid of budget ratios (train/test resampling).
    Compare(CompareArgs),
    /// Sweep estimation-set error against config count, run budget, or train size.
    Sweep(SweepArgs),
    /// Fit the matching error curve to one series of a sweep CSV.
    Fit(FitArgs),
    /// Measure empirical violation rate of the finite-class bound on a scenario.
    Coverage(CoverageArgs),
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Built-in scenario instead of a random model.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Number of configurations in the random model.
    #[arg(long, default_value_t = 20, conflicts_with = "preset")]
    configs: usize,
    /// Number of support instances in the random model.
    #[arg(long, default_value_t = 10, conflicts_with = "preset")]
    instances: usize,
    /// Outcomes per (config, instance) cell in the random model.
    #[arg(long, default_value_t = 3, conflicts_with = "preset")]
    outcomes: usize,
    /// Utility range for the random model.
    #[arg(long, default_value_t = 0.0, conflicts_with = "preset")]
    u_lo: f64,
    #[arg(long, default_value_t = 1.0, conflicts_with = "preset")]
    u_hi: f64,
    /// Scenario name recorded in the metadata file.
    #[arg(long)]
    name: Option<String>,
    /// Configuration-space dimension recorded in the metadata file.
    #[arg(long, default_value_t = 1)]
    num_params: u32,
    /// Optional smoothness constants for continuous-space bounds.
    #[arg(long)]
    lipschitz: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    /// Where to write the scenario (outcome distributions, JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Where to write the scenario metadata (JSON).
    #[arg(long)]
    meta: PathBuf,
    /// Also sample a run matrix (CSV) from the scenario.
    #[arg(long)]
    sample_matrix: Option<PathBuf>,
    /// Configurations to include in the sampled matrix (default: all).
    #[arg(long, requires = "sample_matrix")]
    matrix_configs: Option<usize>,
    /// Instances to draw for the sampled matrix.
    #[arg(long, default_value_t = 20, requires = "sample_matrix")]
    matrix_instances: usize,
    /// Replicate runs per (config, instance) cell in the sampled matrix.
    #[arg(long, default_value_t = 5, requires = "sample_matrix")]
    runs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Two equiprobable instances, one config: mean 2.5, within 1.0, across 2.25.
    WorkedExample,
}

#[derive(clap::Args)]
struct MomentsArgs {
    /// Run matrix (CSV): report plug-in moment estimates.
    #[arg(long, conflicts_with = "scenario")]
    matrix: Option<PathBuf>,
    /// Discrete scenario (JSON): report exact moments.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    meta: PathBuf,
    /// Restrict the report to one configuration id.
    #[arg(long)]
    config: Option<String>,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EstimateArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    /// Allocation rule for spending the run budget.
    #[arg(long, value_enum)]
    rule: Rule,
    /// Total number of runs to spend per configuration.
    #[arg(long)]
    budget: u64,
    /// Comma-separated training instance ids.
    #[arg(long, conflicts_with = "train_size")]
    train: Option<String>,
    /// Draw this many training instances from the matrix instead.
    #[arg(long)]
    train_size: Option<usize>,
    /// Restrict to one configuration id.
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    /// Spread runs as evenly as possible across instances.
    Even,
    /// Fill instances in batches of five runs.
    Batch5,
    /// Draw each run's instance independently (with replacement).
    Replacement,
}

#[derive(clap::Args)]
struct BoundArgs {
    /// Which bound to evaluate.
    #[arg(long, value_enum)]
    method: Method,
    /// Confidence parameter.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Number of candidate configurations (finite-class bounds).
    #[arg(long)]
    m: Option<u128>,
    /// Total run budget (paired with --K for an even allocation).
    #[arg(long = "N")]
    n: Option<u64>,
    /// Number of training instances.
    #[arg(long = "K")]
    k: Option<u64>,
    /// Explicit per-instance run counts, comma-separated (alternative to --N/--K).
    #[arg(long, conflicts_with_all = ["n", "k"])]
    counts: Option<String>,
    /// Utility range width.
    #[arg(long = "C")]
    range: f64,
    /// Mean within-instance variance.
    #[arg(long)]
    wi: f64,
    /// Across-instance variance.
    #[arg(long)]
    ai: f64,
    /// Deviation threshold (tail method only).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Configuration-space dimension (infinite method).
    #[arg(long)]
    h: Option<u32>,
    #[arg(long)]
    lipschitz: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    /// Tail probability that the estimate undershoots by more than --epsilon.
    Tail,
    /// Deviation width for a finite candidate set, arbitrary allocation.
    Finite,
    /// Same, specialized to an exactly even allocation (requires K | N).
    FiniteEven,
    /// Deviation width for a Lipschitz configuration space.
    Infinite,
}

#[derive(clap::Args)]
struct CompareArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    /// Train-fraction grid (K = ceil(r1 * P)), comma-separated.
    #[arg(long, default_value = "0.5")]
    r1: String,
    /// Budget-ratio grid (N = ceil(r2 * K)), comma-separated.
    #[arg(long, default_value = "0.25,0.5,1,2,4")]
    r2: String,
    /// Use the full protocol grid: r1 in 0.10..=0.50 step 0.05, r2 in 0.25..=4.0 step 0.25.
    #[arg(long)]
    protocol_grid: bool,
    /// Resampling repetitions per grid point.
    #[arg(long, default_value_t = 200)]
    reps: u32,
    /// Output CSV of per-point series statistics.
    #[arg(long)]
    out: PathBuf,
    /// Also write the full result (with metadata) as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Also render an SVG chart of the absolute-error series.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    /// Sweep variable: m (config count), N (run budget), or K (train size).
    #[arg(long, value_enum)]
    axis: Axis,
    /// Grid of axis values, comma-separated (default: full range).
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = 200)]
    reps: u32,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    /// Number of candidate configurations.
    #[value(name = "m")]
    M,
    /// Total run budget at fixed train size.
    #[value(name = "N", alias = "n")]
    N,
    /// Number of training instances at full per-instance budget.
    #[value(name = "K", alias = "k")]
    K,
}

impl Axis {
    fn to_sweep(self) -> SweepAxis {
        match self {
            Axis::M => SweepAxis::ConfigCount,
            Axis::N => SweepAxis::RunBudget,
            Axis::K => SweepAxis::TrainSize,
        }
    }
}

#[derive(clap::Args)]
struct FitArgs {
    /// Axis the input sweep was taken over.
    #[arg(long, value_enum)]
    axis: Axis,
    /// Sweep CSV produced by `runest sweep`.
    #[arg(long)]
    input: PathBuf,
    /// Which series to fit (column prefix in the CSV).
    #[arg(long, default_value = "uniform")]
    series: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CoverageArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 1000)]
    trials: u32,
    /// Comma-separated configuration ids (default: all in the scenario).
    #[arg(long)]
    configs: Option<String>,
    /// Even allocation: run budget over --instances training instances.
    #[arg(long, requires = "instances", conflicts_with = "counts")]
    budget: Option<u64>,
    #[arg(long)]
    instances: Option<u64>,
    /// Explicit per-instance run counts, comma-separated.
    #[arg(long)]
    counts: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("RUNEST_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        // Ignore the error if a pool already exists (e.g. repeated init in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(cli.seed, args),
        Command::Moments(args) => cmd_moments(args),
        Command::Estimate(args) => cmd_estimate(cli.seed, args),
        Command::Bound(args) => cmd_bound(cli.seed, args),
        Command::Compare(args) => cmd_compare(cli.seed, args),
        Command::Sweep(args) => cmd_sweep(cli.seed, args),
        Command::Fit(args) => cmd_fit(args),
        Command::Coverage(args) => cmd_coverage(cli.seed, args),
    }
}

// ---- synth ----------------------------------------------------------------

fn cmd_synth(seed: u64, args: SynthArgs) -> Result<()> {
    let (meta, scenario) = match args.preset {
        Some(Preset::WorkedExample) => worked_example(&args),
        None => random_model(seed, &args)?,
    };
    scenario.save(&args.scenario)?;
    meta.save(&args.meta)?;
    if let Some(path) = &args.sample_matrix {
        let m = args.matrix_configs.unwrap_or(scenario.configs().len());
        let matrix = scenario.sample_matrix(m, args.matrix_instances, args.runs, seed)?;
        matrix.save(path, &meta)?;
    }
    Ok(())
}

fn worked_example(args: &SynthArgs) -> (ScenarioMeta, DiscreteScenario) {
    let meta = ScenarioMeta {
        name: args.name.clone().unwrap_or_else(|| "worked-example".to_string()),
        metric: Metric::RawUtility,
        cutoff: None,
        u_lo: 0.0,
        u_hi: 5.0,
        num_params: args.num_params,
        lipschitz: args.lipschitz,
        radius: args.radius,
    };
    let outcomes = vec![(
        "c0".to_string(),
        vec![vec![(0.0, 0.5), (2.0, 0.5)], vec![(3.0, 0.5), (5.0, 0.5)]],
    )];
    let scenario = DiscreteScenario::new(meta.clone(), vec![0.5, 0.5], outcomes)
        .expect("built-in scenario is well-formed");
    (meta, scenario)
}

fn random_model(seed: u64, args: &SynthArgs) -> Result<(ScenarioMeta, DiscreteScenario)> {
    if args.configs == 0 || args.instances == 0 || args.outcomes == 0 {
        bail!("--configs, --instances, and --outcomes must all be positive");
    }
    if !args.u_lo.is_finite() || !args.u_hi.is_finite() || args.u_lo >= args.u_hi {
        bail!("--u-lo must be strictly below --u-hi and both must be finite");
    }
    let meta = ScenarioMeta {
        name: args.name.clone().unwrap_or_else(|| "synthetic".to_string()),
        metric: Metric::RawUtility,
        cutoff: None,
        u_lo: args.u_lo,
        u_hi: args.u_hi,
        num_params: args.num_params,
        lipschitz: args.lipschitz,
        radius: args.radius,
    };
    // Stream 1: the model itself. sample_matrix draws from stream 0 of the
    // same seed, so generation and sampling never share a stream.
    let mut rng = runest::rng::stream(seed, 1);
    let weights: Vec<f64> = (0..args.instances).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let width = args.configs.to_string().len().max(2);
    let mut named = Vec::with_capacity(args.configs);
    for c in 0..args.configs {
        let mut tables = Vec::with_capacity(args.instances);
        for _ in 0..args.instances {
            let values: Vec<f64> =
                (0..args.outcomes).map(|_| rng.random_range(args.u_lo..args.u_hi)).collect();
            let raw: Vec<f64> = (0..args.outcomes).map(|_| rng.random_range(0.1..1.0)).collect();
            let t: f64 = raw.iter().sum();
            tables.push(values.iter().zip(&raw).map(|(&v, &w)| (v, w / t)).collect());
        }
        named.push((format!("c{c:0width$}"), tables));
    }
    let scenario = DiscreteScenario::new(meta.clone(), probs, named)?;
    Ok((meta, scenario))
}

// ---- moments ---------------------------------------------------------------

fn cmd_moments(args: MomentsArgs) -> Result<()> {
    let meta = ScenarioMeta::load(&args.meta)?;
    let rows = match (&args.matrix, &args.scenario) {
        (Some(path), None) => {
            let matrix = PerformanceMatrix::load(path, &meta)?;
            let configs = select_configs(&matrix, args.config.as_deref())?;
            configs
                .into_iter()
                .map(|c| moment_row(&matrix.configs()[c], plug_in_moments(&matrix, c)?))
                .collect::<Result<Vec<_>>>()?
        }
        (None, Some(path)) => {
            let scenario = DiscreteScenario::load(path, &meta)?;
            let configs = match args.config.as_deref() {
                Some(id) => vec![scenario
                    .configs()
                    .iter()
                    .position(|c| c == id)
                    .with_context(|| format!("unknown config id {id:?}"))?],
                None => (0..scenario.configs().len()).collect(),
            };
            configs
                .into_iter()
                .map(|c| moment_row(&scenario.configs()[c], scenario.exact_moments(c)))
                .collect::<Result<Vec<_>>>()?
        }
        _ => bail!("provide exactly one of --matrix or --scenario"),
    };
    emit(args.out.as_deref(), &json_pretty(&rows)?)
}

fn moment_row(config: &str, moments: runest::MomentSummary) -> Result<serde_json::Value> {
    let mut row = serde_json::to_value(moments)?;
    row.as_object_mut()
        .expect("moment summary serializes to an object")
        .insert("config".to_string(), json!(config));
    Ok(row)
}

// ---- estimate --------------------------------------------------------------

fn cmd_estimate(seed: u64, args: EstimateArgs) -> Result<()> {
    let meta = ScenarioMeta::load(&args.meta)?;
    let matrix = PerformanceMatrix::load(&args.matrix, &meta)?;
    let train = training_set(seed, &matrix, args.train.as_deref(), args.train_size)?;
    let k = train.len();
    let configs = select_configs(&matrix, args.config.as_deref())?;

    let mut rows = Vec::with_capacity(configs.len());
    let mut rng = runest::rng::stream(seed, 1);
    for c in configs {
        let (alloc, binding) = match args.rule {
            Rule::Even => {
                let alloc = Allocation::even(args.budget, k, &mut rng)?;
                (alloc, train.clone())
            }
            Rule::Batch5 => {
                let alloc = Allocation::batched(args.budget, k, runest::harness::BATCH_RUNS, &mut rng)?;
                (alloc, train.clone())
            }
            Rule::Replacement => replacement_design(args.budget, &train, &mut rng)?,
        };
        let est = runest::estimation::estimate(
            &EvalSource::Matrix(&matrix),
            c,
            &alloc,
            &binding,
            &mut rng,
        )?;
        rows.push(json!({ "config": matrix.configs()[c], "estimate": est }));
    }
    emit(args.out.as_deref(), &json_pretty(&rows)?)
}

fn training_set(
    seed: u64,
    matrix: &PerformanceMatrix,
    train: Option<&str>,
    train_size: Option<usize>,
) -> Result<Vec<usize>> {
    match (train, train_size) {
        (Some(list), None) => {
            let mut ids = Vec::new();
            for id in list.split(',') {
                let id = id.trim();
                let idx = matrix
                    .instance_index(id)
                    .with_context(|| format!("unknown instance id {id:?}"))?;
                if ids.contains(&idx) {
                    bail!("instance {id:?} listed twice in --train");
                }
                ids.push(idx);
            }
            if ids.is_empty() {
                bail!("--train must name at least one instance");
            }
            Ok(ids)
        }
        (None, Some(k)) => {
            let p = matrix.num_instances();
            if k == 0 || k > p {
                bail!("--train-size must be in 1..={p}, got {k}");
            }
            let mut rng = runest::rng::stream(seed, 0);
            let mut ids = index::sample(&mut rng, p, k).into_vec();
            ids.sort_unstable();
            Ok(ids)
        }
        (None, None) => bail!("one of --train or --train-size is required"),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    }
}

// ---- bound -----------------------------------------------------------------

fn cmd_bound(seed: u64, args: BoundArgs) -> Result<()> {
    if args.range <= 0.0 {
        bail!("--C must be positive");
    }
    let moments = runest::MomentSummary {
        mean: f64::NAN,
        within_var: args.wi,
        across_var: args.ai,
        source: runest::MomentSource::Exact,
    };
    if args.wi < 0.0 || args.ai < 0.0 {
        bail!("--wi and --ai must be nonnegative");
    }

    let value = match args.method {
        Method::FiniteEven => {
            let m = required(args.m, "--m")?;
            let n = required(args.n, "--N")?;
            let k = required(args.k, "--K")?;
            let result = finite_even_bound(args.delta, m, n, k, args.range, &moments)?;
            json!({ "method": result.method, "epsilon": result.epsilon })
        }
        Method::Tail => {
            let epsilon = required(args.epsilon, "--epsilon")?;
            let alloc = allocation_from_args(seed, args.counts.as_deref(), args.n, args.k)?;
            let tau_sq = tau_squared(&moments, &alloc)?;
            let p = deviation_tail(epsilon, &alloc, tau_sq, args.range)?;
            json!({ "method": "tail", "epsilon": epsilon, "probability": p })
        }
        Method::Finite => {
            let m = required(args.m, "--m")?;
            let alloc = allocation_from_args(seed, args.counts.as_deref(), args.n, args.k)?;
            let input = BoundInput {
                delta: args.delta,
                m: Some(m),
                alloc,
                range: args.range,
                moments,
                h: None,
                lipschitz: None,
                radius: None,
            };
            let result = finite_bound(&input)?;
            json!({ "method": result.method, "epsilon": result.epsilon })
        }
        Method::Infinite => {
            let alloc = allocation_from_args(seed, args.counts.as_deref(), args.n, args.k)?;
            let input = BoundInput {
                delta: args.delta,
                m: None,
                alloc,
                range: args.range,
                moments,
                h: Some(required(args.h, "--h")?),
                lipschitz: Some(required(args.lipschitz, "--lipschitz")?),
                radius: Some(required(args.radius, "--radius")?),
            };
            let result = infinite_bound(&input)?;
            json!({ "method": result.method, "epsilon": result.epsilon })
        }
    };
    emit(args.out.as_deref(), &json_pretty(&value)?)
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.with_context(|| format!("{flag} is required for this method"))
}

fn allocation_from_args(
    seed: u64,
    counts: Option<&str>,
    n: Option<u64>,
    k: Option<u64>,
) -> Result<Allocation> {
    match (counts, n, k) {
        (Some(list), None, None) => {
            let counts = parse_list::<u64>(list, "--counts")?;
            Ok(Allocation::from_counts(counts))
        }
        (None, Some(n), Some(k)) => {
            let mut rng = runest::rng::stream(seed, 0);
            Ok(Allocation::even(n, k as usize, &mut rng)?)
        }
        _ => bail!("provide either --counts or both --N and --K"),
    }
}

// ---- compare ---------------------------------------------------------------

fn cmd_compare(seed: u64, args: CompareArgs) -> Result<()> {
    let meta = ScenarioMeta::load(&args.meta)?;
    let matrix = PerformanceMatrix::load(&args.matrix, &meta)?;
    let (r1, r2) = if args.protocol_grid {
        (
            (2..=10).map(|i| i as f64 * 0.05).collect(),
            (1..=16).map(|i| i as f64 * 0.25).collect(),
        )
    } else {
        (
            parse_list::<f64>(&args.r1, "--r1")?,
            parse_list::<f64>(&args.r2, "--r2")?,
        )
    };
    let result = compare_estimators(&matrix, &meta.name, &r1, &r2, args.reps, seed)?;
    write_atomic(&args.out, result.to_csv().as_bytes())?;
    if let Some(path) = &args.json {
        write_atomic(path, json_pretty(&result)?.as_bytes())?;
    }
    if let Some(path) = &args.plot {
        // The signed series duplicate the top three with sign kept; the chart
        // shows only the absolute errors.
        let chart = restrict_series(&result, &["even", "batch5", "replacement"]);
        write_atomic(path, plot::render(&chart).as_bytes())?;
    }
    Ok(())
}

fn restrict_series(result: &SweepResult, keep: &[&str]) -> SweepResult {
    let idx: Vec<usize> = keep
        .iter()
        .filter_map(|name| result.series.iter().position(|s| s == name))
        .collect();
    let mut out = result.clone();
    out.series = idx.iter().map(|&i| result.series[i]).collect();
    for p in &mut out.points {
        p.stats = idx.iter().map(|&i| p.stats[i]).collect();
    }
    out
}

// ---- sweep -----------------------------------------------------------------

fn cmd_sweep(seed: u64, args: SweepArgs) -> Result<()> {
    let meta = ScenarioMeta::load(&args.meta)?;
    let matrix = PerformanceMatrix::load(&args.matrix, &meta)?;
    let grid = match &args.grid {
        Some(list) => Some(parse_list::<u64>(list, "--grid")?),
        None => None,
    };
    let result = sweep(
        &matrix,
        &meta.name,
        args.axis.to_sweep(),
        grid.as_deref(),
        args.reps,
        seed,
    )?;
    write_atomic(&args.out, result.to_csv().as_bytes())?;
    if let Some(path) = &args.json {
        write_atomic(path, json_pretty(&result)?.as_bytes())?;
    }
    if let Some(path) = &args.plot {
        write_atomic(path, plot::render(&result).as_bytes())?;
    }
    Ok(())
}

// ---- fit -------------------------------------------------------------------

fn cmd_fit(args: FitArgs) -> Result<()> {
    let axis = args.axis.to_sweep();
    let mut reader = csv::Reader::from_path(&args.input)
        .with_context(|| format!("cannot open {}", args.input.display()))?;
    let headers = reader.headers()?.clone();
    let x_col = axis.x_column();
    if headers.get(0) != Some(x_col) {
        bail!(
            "{}: first column is {:?}, expected {:?} for --axis {}",
            args.input.display(),
            headers.get(0).unwrap_or(""),
            x_col,
            x_col
        );
    }
    let want = format!("{}_mean", args.series);
    let col = headers
        .iter()
        .position(|h| h == want)
        .with_context(|| format!("{}: no column named {want:?}", args.input.display()))?;
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |j: usize| -> Result<f64> {
            record
                .get(j)
                .unwrap_or("")
                .parse::<f64>()
                .with_context(|| format!("{}: row {}: bad number", args.input.display(), i + 2))
        };
        points.push((parse(0)?, parse(col)?));
    }
    let fit = fit_curve(axis, &points)?;
    let value = json!({
        "axis": x_col,
        "series": args.series,
        "a": fit.a,
        "b": fit.b,
        "residual_norm": fit.residual_norm,
        "r_squared": fit.r_squared,
    });
    emit(args.out.as_deref(), &json_pretty(&value)?)
}

// ---- coverage --------------------------------------------------------------

fn cmd_coverage(seed: u64, args: CoverageArgs) -> Result<()> {
    let meta = ScenarioMeta::load(&args.meta)?;
    let scenario = DiscreteScenario::load(&args.scenario, &meta)?;
    let configs: Vec<usize> = match &args.configs {
        Some(list) => {
            let mut ids = Vec::new();
            for id in list.split(',') {
                let id = id.trim();
                let idx = scenario
                    .configs()
                    .iter()
                    .position(|c| c == id)
                    .with_context(|| format!("unknown config id {id:?}"))?;
                ids.push(idx);
            }
            ids
        }
        None => (0..scenario.configs().len()).collect(),
    };
    let alloc = match (&args.counts, args.budget, args.instances) {
        (Some(list), None, _) => Allocation::from_counts(parse_list::<u64>(list, "--counts")?),
        (None, Some(n), Some(k)) => {
            let mut rng = runest::rng::stream(seed, 0);
            Allocation::even(n, k as usize, &mut rng)?
        }
        _ => bail!("provide either --counts or both --budget and --instances"),
    };
    if alloc.num_instances() as usize > scenario.num_instances() {
        bail!(
            "allocation covers {} instances but the scenario has only {}",
            alloc.num_instances(),
            scenario.num_instances()
        );
    }
    let rate = coverage_trial(&scenario, &configs, &alloc, args.delta, args.trials, seed)?;
    let worst = worst_case_moments(&scenario, &configs, &alloc)?;
    let input = BoundInput {
        delta: args.delta,
        m: Some(configs.len() as u128),
        alloc,
        range: meta.range(),
        moments: worst,
        h: None,
        lipschitz: None,
        radius: None,
    };
    let epsilon = finite_bound(&input)?.epsilon;
    let value = json!({
        "delta": args.delta,
        "trials": args.trials,
        "epsilon": epsilon,
        "violation_rate": rate,
    });
    emit(args.out.as_deref(), &json_pretty(&value)?)
}

// ---- shared helpers --------------------------------------------------------

fn select_configs(matrix: &PerformanceMatrix, config: Option<&str>) -> Result<Vec<usize>> {
    match config {
        Some(id) => {
            let idx = matrix
                .config_index(id)
                .with_context(|| format!("unknown config id {id:?}"))?;
            Ok(vec![idx])
        }
        None => Ok((0..matrix.num_configs()).collect()),
    }
}

fn parse_list<T: std::str::FromStr>(list: &str, flag: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for piece in list.split(',') {
        let piece = piece.trim();
        match piece.parse() {
            Ok(v) => out.push(v),
            Err(_) => bail!("{flag}: cannot parse {piece:?}"),
        }
    }
    if out.is_empty() {
        bail!("{flag}: empty list");
    }
    Ok(out)
}

fn json_pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .with_context(|| format!("cannot create temp file next to {}", path.display()))?;
    std::io::Write::write_all(&mut tmp, bytes)
        .with_context(|| format!("cannot write {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("cannot replace {}", path.display()))?;
    Ok(())
}
