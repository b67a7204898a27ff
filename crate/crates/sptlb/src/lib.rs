//! # sptlb — stream-processing tier load balancer
//!
//! A multi-objective load balancer that assigns stream-processing
//! applications to tiers (sets of compute clusters), together with desk-scale
//! simulators of the lower-level region and host schedulers it co-operates
//! with.
//!
//! The balancer treats capacity limits, task limits, a movement budget, and
//! placement restrictions (SLO support, avoid pairs) as hard constraints and
//! optimizes a lexicographic goal vector on top of them: stay under
//! utilization targets, balance cpu/mem usage, balance task counts, keep
//! movement cost low, and avoid moving highly critical apps.
//!
//! Module map:
//!
//! - [`model`] — snapshot domain types and projected metrics
//! - [`problem`] — constraint/goal compilation and scoring
//! - [`solvers`] — local search, exact branch-and-bound, greedy baselines
//! - [`hierarchy`] — region/host scheduler simulation and the co-operation loop
//! - [`evaluation`] — balance and network-latency evaluation harnesses
//! - [`generator`] — deterministic synthetic workload generation
//! - [`io`] — snapshot/solution/report file formats
//! - [`cli`] — the `sptlb` command-line surface

pub mod cli;
pub mod evaluation;
pub mod generator;
pub mod hierarchy;
pub mod io;
pub mod model;
pub mod problem;
pub mod rng;
pub mod solvers;

pub use evaluation::{BalanceReport, LatencyDist, LatencyModel, LatencyReport};
pub use model::{
    imbalance, project_metrics, AppRecord, Mapping, ModelError, Resource, Snapshot, TierMetrics,
    TierSpec,
};
pub use problem::{
    compare, Goal, Problem, RunConfig, ScoreVector, SolverKind, Variant, Violation,
};
pub use solvers::{solve, MoveRec, Solution, SolveError, TerminatedBy};
