//! Scenario data: run matrices, scenario metadata, and finite synthetic
//! scenarios with exactly known moments.
//!
//! A [`PerformanceMatrix`] is the resampling substrate: M configurations ×
//! P instances × R replicate runs, every cell fully populated. Runtime
//! metrics are converted to penalized utilities at ingestion (a timeout
//! counts as 10× the cutoff), so everything downstream works on plain
//! bounded utilities.
//!
//! A [`DiscreteScenario`] is a finite-support generative model: instance
//! probabilities plus a per-(configuration, instance) outcome distribution.
//! Its moments can be enumerated exactly, which is what makes it usable as a
//! ground-truth oracle for the estimators and bounds.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{MomentSource, MomentSummary};
use crate::rng;

/// Probabilities (of one distribution) must sum to 1 within this slack.
const PROB_SUM_TOL: f64 = 1e-12;
/// `u_hi` must equal 10× the cutoff within this relative slack.
const PAR10_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Values are runtimes in seconds; timeouts are scored as 10× cutoff.
    Par10,
    /// Values are utilities already.
    RawUtility,
}

/// What a run matrix or scenario measures and the utility range it lives in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMeta {
    pub name: String,
    pub metric: Metric,
    /// Timeout in seconds; required (and only meaningful) for [`Metric::Par10`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    pub u_lo: f64,
    pub u_hi: f64,
    /// Dimension of the configuration space (h in the covering bounds).
    pub num_params: u32,
    /// Lipschitz constant of configuration → utility, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    /// Radius of the configuration ball, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

impl ScenarioMeta {
    /// Utility range C = u_hi − u_lo.
    pub fn range(&self) -> f64 {
        self.u_hi - self.u_lo
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_lo.is_finite() && self.u_hi.is_finite() && self.u_lo < self.u_hi) {
            return Err(Error::invalid(format!(
                "utility bounds must be finite with u_lo < u_hi (got [{}, {}])",
                self.u_lo, self.u_hi
            )));
        }
        if self.num_params == 0 {
            return Err(Error::invalid("num_params must be at least 1"));
        }
        for (name, v) in [("lipschitz", self.lipschitz), ("radius", self.radius)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invalid(format!("{name} must be positive and finite (got {v})")));
                }
            }
        }
        match self.metric {
            Metric::Par10 => {
                let cutoff = self
                    .cutoff
                    .ok_or_else(|| Error::invalid("metric par10 requires a cutoff"))?;
                if !(cutoff.is_finite() && cutoff > 0.0) {
                    return Err(Error::invalid(format!("cutoff must be positive and finite (got {cutoff})")));
                }
                if self.u_lo < 0.0 {
                    return Err(Error::invalid("u_lo must be non-negative for metric par10"));
                }
                let want = 10.0 * cutoff;
                if (self.u_hi - want).abs() > PAR10_TOL * want.max(1.0) {
                    return Err(Error::invalid(format!(
                        "u_hi must equal 10 × cutoff = {want} for metric par10 (got {})",
                        self.u_hi
                    )));
                }
            }
            Metric::RawUtility => {
                if let Some(cutoff) = self.cutoff {
                    if !(cutoff.is_finite() && cutoff > 0.0) {
                        return Err(Error::invalid(format!("cutoff must be positive and finite (got {cutoff})")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ScenarioMeta> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let meta: ScenarioMeta =
            serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self).expect("meta serializes");
        text.push('\n');
        write_atomic(path.as_ref(), text.as_bytes())
    }
}

/// Fully populated M × P × R block of utilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceMatrix {
    configs: Vec<String>,
    instances: Vec<String>,
    runs: usize,
    /// Dense, laid out as (config × P + instance) × R + run.
    values: Vec<f64>,
}

impl PerformanceMatrix {
    pub fn new(
        configs: Vec<String>,
        instances: Vec<String>,
        runs: usize,
        values: Vec<f64>,
    ) -> Result<PerformanceMatrix> {
        if configs.is_empty() || instances.is_empty() || runs == 0 {
            return Err(Error::invalid("matrix dimensions must all be positive"));
        }
        if values.len() != configs.len() * instances.len() * runs {
            return Err(Error::invalid(format!(
                "expected {} × {} × {} = {} values, got {}",
                configs.len(),
                instances.len(),
                runs,
                configs.len() * instances.len() * runs,
                values.len()
            )));
        }
        for set in [&configs, &instances] {
            let mut seen = HashMap::new();
            for id in set {
                if seen.insert(id, ()).is_some() {
                    return Err(Error::invalid(format!("duplicate identifier `{id}`")));
                }
            }
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("matrix values must be finite (got {bad})")));
        }
        Ok(PerformanceMatrix { configs, instances, runs, values })
    }

    pub fn num_configs(&self) -> usize {
        self.configs.len()
    }

    pub fn num_instances(&self) -> usize {
        self.instances.len()
    }

    /// Replicate runs per (configuration, instance) cell.
    pub fn runs_per_cell(&self) -> usize {
        self.runs
    }

    pub fn configs(&self) -> &[String] {
        &self.configs
    }

    pub fn instances(&self) -> &[String] {
        &self.instances
    }

    pub fn config_index(&self, id: &str) -> Option<usize> {
        self.configs.iter().position(|c| c == id)
    }

    pub fn instance_index(&self, id: &str) -> Option<usize> {
        self.instances.iter().position(|i| i == id)
    }

    /// The R replicate utilities of one cell.
    pub fn cell(&self, config: usize, instance: usize) -> &[f64] {
        let start = (config * self.instances.len() + instance) * self.runs;
        &self.values[start..start + self.runs]
    }

    /// Mean utility of `config` over a set of instances, all replicates.
    pub fn mean_over(&self, config: usize, instances: &[usize]) -> f64 {
        let total: f64 = instances.iter().map(|&p| self.cell(config, p).iter().sum::<f64>()).sum();
        total / (instances.len() * self.runs) as f64
    }

    /// Reads the long-form CSV (`config,instance,run,value,status`). Rows may
    /// come in any order but must cover every cell with the same number of
    /// distinct run indices. For a par10 metric, `value` is a runtime and
    /// timeouts are scored as 10× cutoff; for raw utilities the status must
    /// be `ok`.
    pub fn load(path: impl AsRef<Path>, meta: &ScenarioMeta) -> Result<PerformanceMatrix> {
        let path = path.as_ref();
        meta.validate()?;
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;

        let headers = reader.headers().map_err(|e| csv_error(path, e))?;
        let expected = ["config", "instance", "run", "value", "status"];
        if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: format!("expected header `{}`", expected.join(",")),
            });
        }

        let mut configs: Vec<String> = Vec::new();
        let mut instances: Vec<String> = Vec::new();
        let mut config_ids: HashMap<String, usize> = HashMap::new();
        let mut instance_ids: HashMap<String, usize> = HashMap::new();
        let mut cells: HashMap<(usize, usize), Vec<(u64, f64)>> = HashMap::new();

        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map_or(0, |p| p.line());
            let fail = |msg: String| Error::Parse { path: path.into(), line, msg };
            if record.len() != 5 {
                return Err(fail(format!("expected 5 fields, got {}", record.len())));
            }

            let run: u64 = record[2]
                .parse()
                .map_err(|_| fail(format!("run index `{}` is not a non-negative integer", &record[2])))?;
            let value: f64 = record[3]
                .parse()
                .map_err(|_| fail(format!("value `{}` is not a number", &record[3])))?;
            if !value.is_finite() {
                return Err(fail(format!("value {value} is not finite")));
            }
            let timeout = match &record[4] {
                "ok" => false,
                "timeout" => true,
                other => return Err(fail(format!("unknown status `{other}` (expected `ok` or `timeout`)"))),
            };

            let utility = match meta.metric {
                Metric::Par10 => {
                    if value < 0.0 {
                        return Err(fail(format!("negative runtime {value}")));
                    }
                    if timeout {
                        10.0 * meta.cutoff.expect("validated")
                    } else {
                        value
                    }
                }
                Metric::RawUtility => {
                    if timeout {
                        return Err(fail("status `timeout` requires metric par10".into()));
                    }
                    value
                }
            };
            if utility < meta.u_lo || utility > meta.u_hi {
                return Err(fail(format!(
                    "utility {utility} outside [{}, {}]",
                    meta.u_lo, meta.u_hi
                )));
            }

            let next_c = configs.len();
            let c = *config_ids.entry(record[0].to_string()).or_insert_with(|| {
                configs.push(record[0].to_string());
                next_c
            });
            let next_p = instances.len();
            let p = *instance_ids.entry(record[1].to_string()).or_insert_with(|| {
                instances.push(record[1].to_string());
                next_p
            });

            let cell = cells.entry((c, p)).or_default();
            if cell.iter().any(|(r, _)| *r == run) {
                return Err(fail(format!(
                    "duplicate run index {run} for config `{}`, instance `{}`",
                    &record[0], &record[1]
                )));
            }
            cell.push((run, utility));
        }

        if configs.is_empty() {
            return Err(Error::Parse { path: path.into(), line: 1, msg: "matrix has no data rows".into() });
        }
        let runs = cells[&(0, 0)].len();
        let mut values = Vec::with_capacity(configs.len() * instances.len() * runs);
        for (c, config) in configs.iter().enumerate() {
            for (p, instance) in instances.iter().enumerate() {
                let mut cell = match cells.remove(&(c, p)) {
                    Some(cell) => cell,
                    None => {
                        return Err(Error::invalid(format!(
                            "{}: missing cell: config `{config}` × instance `{instance}`",
                            path.display()
                        )))
                    }
                };
                if cell.len() != runs {
                    return Err(Error::invalid(format!(
                        "{}: config `{config}` × instance `{instance}` has {} runs, expected {}",
                        path.display(),
                        cell.len(),
                        runs
                    )));
                }
                cell.sort_unstable_by_key(|(r, _)| *r);
                values.extend(cell.into_iter().map(|(_, v)| v));
            }
        }
        PerformanceMatrix::new(configs, instances, runs, values)
    }

    /// Writes the long-form CSV. Under a par10 metric, cells holding the
    /// penalty score 10× cutoff are written back as `timeout` rows, so
    /// loading the file with the same metadata reproduces this matrix.
    pub fn save(&self, path: impl AsRef<Path>, meta: &ScenarioMeta) -> Result<()> {
        meta.validate()?;
        let mut out = String::from("config,instance,run,value,status\n");
        for (c, config) in self.configs.iter().enumerate() {
            for (p, instance) in self.instances.iter().enumerate() {
                for (r, &v) in self.cell(c, p).iter().enumerate() {
                    let (value, status) = match (meta.metric, meta.cutoff) {
                        (Metric::Par10, Some(cutoff)) if v == 10.0 * cutoff => (cutoff, "timeout"),
                        _ => (v, "ok"),
                    };
                    writeln!(out, "{config},{instance},{r},{value},{status}").expect("string write");
                }
            }
        }
        write_atomic(path.as_ref(), out.as_bytes())
    }
}

/// One configuration's outcome tables: `tables[instance]` lists the
/// `(utility, probability)` support points of that cell's run distribution.
pub type OutcomeTables = Vec<Vec<(f64, f64)>>;

/// Finite-support generative scenario with exactly enumerable moments.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScenario {
    meta: ScenarioMeta,
    instance_probs: Vec<f64>,
    configs: Vec<String>,
    /// outcomes[config][instance] = (utility, probability) support points.
    outcomes: Vec<OutcomeTables>,
}

/// On-disk form: instance probabilities plus a configuration-keyed map of
/// per-instance outcome distributions (instance dimension is positional).
#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    instance_probs: Vec<f64>,
    outcomes: std::collections::BTreeMap<String, Vec<Vec<(f64, f64)>>>,
}

impl DiscreteScenario {
    /// Builds and validates a scenario. Configurations are stored sorted by
    /// id, so construction order never matters.
    pub fn new(
        meta: ScenarioMeta,
        instance_probs: Vec<f64>,
        named_outcomes: impl IntoIterator<Item = (String, OutcomeTables)>,
    ) -> Result<DiscreteScenario> {
        meta.validate()?;
        if instance_probs.is_empty() {
            return Err(Error::invalid("scenario needs at least one instance"));
        }
        for &p in &instance_probs {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(Error::invalid(format!("instance probability {p} outside [0, 1]")));
            }
        }
        let sum: f64 = instance_probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!("instance probabilities sum to {sum}, expected 1")));
        }

        let mut sorted: Vec<(String, OutcomeTables)> = named_outcomes.into_iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        if sorted.is_empty() {
            return Err(Error::invalid("scenario needs at least one configuration"));
        }
        let mut configs = Vec::with_capacity(sorted.len());
        let mut outcomes = Vec::with_capacity(sorted.len());
        for (id, table) in sorted {
            if configs.last() == Some(&id) {
                return Err(Error::invalid(format!("duplicate configuration `{id}`")));
            }
            if table.len() != instance_probs.len() {
                return Err(Error::invalid(format!(
                    "configuration `{id}` has outcome distributions for {} instances, expected {}",
                    table.len(),
                    instance_probs.len()
                )));
            }
            for (z, dist) in table.iter().enumerate() {
                if dist.is_empty() {
                    return Err(Error::invalid(format!(
                        "configuration `{id}`, instance {z}: empty outcome distribution"
                    )));
                }
                let mut psum = 0.0;
                for &(u, p) in dist {
                    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                        return Err(Error::invalid(format!(
                            "configuration `{id}`, instance {z}: outcome probability {p} outside [0, 1]"
                        )));
                    }
                    if !u.is_finite() || u < meta.u_lo || u > meta.u_hi {
                        return Err(Error::invalid(format!(
                            "configuration `{id}`, instance {z}: utility {u} outside [{}, {}]",
                            meta.u_lo, meta.u_hi
                        )));
                    }
                    psum += p;
                }
                if (psum - 1.0).abs() > PROB_SUM_TOL {
                    return Err(Error::invalid(format!(
                        "configuration `{id}`, instance {z}: outcome probabilities sum to {psum}, expected 1"
                    )));
                }
            }
            configs.push(id);
            outcomes.push(table);
        }
        Ok(DiscreteScenario { meta, instance_probs, configs, outcomes })
    }

    pub fn meta(&self) -> &ScenarioMeta {
        &self.meta
    }

    pub fn num_instances(&self) -> usize {
        self.instance_probs.len()
    }

    pub fn instance_probs(&self) -> &[f64] {
        &self.instance_probs
    }

    pub fn configs(&self) -> &[String] {
        &self.configs
    }

    pub fn config_index(&self, id: &str) -> Option<usize> {
        self.configs.iter().position(|c| c == id)
    }

    pub fn outcomes(&self, config: usize, instance: usize) -> &[(f64, f64)] {
        &self.outcomes[config][instance]
    }

    pub fn load(path: impl AsRef<Path>, meta: &ScenarioMeta) -> Result<DiscreteScenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ScenarioFile =
            serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })?;
        DiscreteScenario::new(meta.clone(), file.instance_probs, file.outcomes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = ScenarioFile {
            instance_probs: self.instance_probs.clone(),
            outcomes: self
                .configs
                .iter()
                .cloned()
                .zip(self.outcomes.iter().cloned())
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("scenario serializes");
        text.push('\n');
        write_atomic(path.as_ref(), text.as_bytes())
    }

    /// Exact mean, mean within-instance variance, and across-instance
    /// variance of one configuration, by enumeration of the finite support.
    pub fn exact_moments(&self, config: usize) -> MomentSummary {
        let table = &self.outcomes[config];
        let mut mean = 0.0;
        let mut within = 0.0;
        let mut instance_means = Vec::with_capacity(table.len());
        for (dist, &pz) in table.iter().zip(&self.instance_probs) {
            let m: f64 = dist.iter().map(|&(u, p)| p * u).sum();
            let v: f64 = dist.iter().map(|&(u, p)| p * (u - m) * (u - m)).sum();
            mean += pz * m;
            within += pz * v;
            instance_means.push(m);
        }
        let across: f64 = instance_means
            .iter()
            .zip(&self.instance_probs)
            .map(|(&m, &pz)| pz * (m - mean) * (m - mean))
            .sum();
        MomentSummary { mean, within_var: within, across_var: across, source: MomentSource::Exact }
    }

    /// One outcome draw for (config, instance).
    pub(crate) fn draw<R: Rng + ?Sized>(&self, config: usize, instance: usize, rng: &mut R) -> f64 {
        let dist = &self.outcomes[config][instance];
        let mut x: f64 = rng.random();
        for &(u, p) in dist {
            if x < p {
                return u;
            }
            x -= p;
        }
        dist.last().expect("validated non-empty").0
    }

    /// Samples a fully populated matrix: P instances drawn i.i.d. from the
    /// instance distribution (named `z<source>#<draw>`), then R independent
    /// runs per (configuration, instance). Uses the first `m` configurations
    /// in sorted-id order.
    pub fn sample_matrix(&self, m: usize, p: usize, r: usize, seed: u64) -> Result<PerformanceMatrix> {
        if m == 0 || p == 0 || r == 0 {
            return Err(Error::invalid("matrix dimensions must all be positive"));
        }
        if m > self.configs.len() {
            return Err(Error::invalid(format!(
                "scenario has {} configurations, cannot sample {m}",
                self.configs.len()
            )));
        }
        let mut rng = rng::stream(seed, 0);
        let by_prob = WeightedIndex::new(&self.instance_probs)
            .map_err(|e| Error::invalid(format!("instance probabilities are not sampleable: {e}")))?;
        let sources: Vec<usize> = (0..p).map(|_| by_prob.sample(&mut rng)).collect();
        let instances: Vec<String> =
            sources.iter().enumerate().map(|(j, src)| format!("z{src}#{j}")).collect();

        let mut values = Vec::with_capacity(m * p * r);
        for c in 0..m {
            for &src in &sources {
                for _ in 0..r {
                    values.push(self.draw(c, src, &mut rng));
                }
            }
        }
        PerformanceMatrix::new(self.configs[..m].to_vec(), instances, r, values)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!()
    }
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse { path: path.into(), line, msg: e.to_string() }
}

/// Writes via a sibling temp file and renames, so readers never observe a
/// half-written file and failures leave the old content intact.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
