//! Estimate the true performance of algorithm configurations from finite
//! runs.
//!
//! A configuration's performance is the expected utility of a run on an
//! instance drawn from the target distribution, with run-level randomness on
//! top. With a budget of N runs spread over K sampled instances, this crate
//! answers four questions:
//!
//! * how to spread the budget ([`allocation`]) and what the resulting
//!   estimator's variance is ([`estimation`]),
//! * how far the training estimate can sit above the truth, with what
//!   probability ([`bounds`]),
//! * how those errors actually behave on a concrete run matrix, measured by
//!   resampling ([`harness`]),
//! * and how to describe benchmark data and synthetic ground-truth scenarios
//!   in files ([`scenario`]).
//!
//! Every randomized routine takes a master seed and derives per-task streams
//! from it ([`rng`]), so results are reproducible bit for bit, including
//! under parallel execution.

pub mod allocation;
pub mod bounds;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod rng;
pub mod scenario;

pub use allocation::Allocation;
pub use bounds::{BoundInput, BoundMethod, BoundResult};
pub use error::{Error, Result};
pub use estimation::{EvalSource, MomentSource, MomentSummary};
pub use harness::{FitResult, SplitPlan, SweepAxis, SweepPoint, SweepResult};
pub use scenario::{DiscreteScenario, Metric, OutcomeTables, PerformanceMatrix, ScenarioMeta};
