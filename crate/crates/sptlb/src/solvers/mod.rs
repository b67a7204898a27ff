//! Solvers that produce feasible, high-quality mappings.
//!
//! Three families share one contract:
//!
//! - [`local::solve_local`] — greedy neighborhood exploration over single-app
//!   relocations; fast, may stop in a local minimum.
//! - [`optimal::solve_optimal`] — exact lexicographic branch-and-bound over
//!   budget-limited relocations; optimal on desk-scale instances, best-found
//!   when the budget runs out.
//! - [`greedy::solve_greedy`] — the single-objective baseline that repeatedly
//!   moves the largest app from the most- to the least-utilized tier.
//!
//! Every solver is a pure function of (problem, config): identical inputs and
//! seed produce identical solutions. A returned [`Solution`] is always
//! feasible; runs that cannot reach feasibility return
//! [`SolveError::Unsatisfiable`] carrying the best-effort mapping and its
//! violations instead of a silently broken solution.

pub mod greedy;
pub mod local;
pub mod optimal;
pub(crate) mod search;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{project_metrics, Mapping, ModelError, Resource, TierMetrics};
use crate::problem::{Problem, RunConfig, ScoreVector, SolverKind, Violation};

/// One relocation: the app and the tiers it moves between.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveRec {
    pub app_id: String,
    pub from_tier: String,
    pub to_tier: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    Converged,
    Timeout,
    BudgetExhausted,
}

impl fmt::Display for TerminatedBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminatedBy::Converged => "converged",
            TerminatedBy::Timeout => "timeout",
            TerminatedBy::BudgetExhausted => "budget_exhausted",
        })
    }
}

/// A feasible mapping plus its projected metrics, score, and telemetry.
///
/// `moves` lists exactly the apps whose assignment differs from their current
/// tier, sorted by app id. Wall-clock `elapsed` is telemetry only and is not
/// serialized, so emitted solution files stay byte-reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub solver_name: String,
    pub mapping: Mapping,
    pub moves: Vec<MoveRec>,
    pub score: ScoreVector,
    pub projected: Vec<TierMetrics>,
    pub iterations: u64,
    pub terminated_by: TerminatedBy,
    #[serde(skip)]
    pub elapsed: f64,
}

#[derive(Debug, Error)]
pub enum SolveError {
    /// No feasible mapping was reached within the movement budget and
    /// timeout. Carries the best mapping found and what it still violates.
    #[error("{solver_name}: unsatisfiable within budget ({} violations)", violations.len())]
    Unsatisfiable {
        solver_name: String,
        best_effort: Mapping,
        violations: Vec<Violation>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Runs the solver selected by `config.solver`.
pub fn solve(problem: &Problem, config: &RunConfig) -> Result<Solution, SolveError> {
    match config.solver {
        SolverKind::Local => local::solve_local(problem, config),
        SolverKind::Optimal => optimal::solve_optimal(problem, config),
        SolverKind::GreedyCpu => greedy::solve_greedy(problem, Resource::Cpu, config),
        SolverKind::GreedyMem => greedy::solve_greedy(problem, Resource::Mem, config),
        SolverKind::GreedyTasks => greedy::solve_greedy(problem, Resource::Tasks, config),
    }
}

/// Derives the move list of a mapping, sorted by app id.
pub fn moves_of(problem: &Problem, mapping: &Mapping) -> Vec<MoveRec> {
    let mut moves: Vec<MoveRec> = problem
        .snapshot()
        .apps()
        .iter()
        .filter(|a| mapping[&a.app_id] != a.current_tier)
        .map(|a| MoveRec {
            app_id: a.app_id.clone(),
            from_tier: a.current_tier.clone(),
            to_tier: mapping[&a.app_id].clone(),
        })
        .collect();
    moves.sort_by(|a, b| a.app_id.cmp(&b.app_id));
    moves
}

/// Finalizes a solver run: recomputes the score and projected metrics from
/// scratch and gates on feasibility, flagging infeasible end states as
/// [`SolveError::Unsatisfiable`].
pub(crate) fn finish(
    problem: &Problem,
    mapping: Mapping,
    solver_name: &str,
    elapsed: f64,
    iterations: u64,
    terminated_by: TerminatedBy,
) -> Result<Solution, SolveError> {
    let violations = problem.violations(&mapping)?;
    if !violations.is_empty() {
        return Err(SolveError::Unsatisfiable {
            solver_name: solver_name.to_string(),
            best_effort: mapping,
            violations,
        });
    }
    let score = problem.score(&mapping)?;
    let projected = project_metrics(problem.snapshot(), &mapping)?;
    let moves = moves_of(problem, &mapping);
    Ok(Solution {
        solver_name: solver_name.to_string(),
        mapping,
        moves,
        score,
        projected,
        iterations,
        terminated_by,
        elapsed,
    })
}

/// Sorted ids of the moved apps in a mapping expressed as tier positions.
/// Used for the deterministic tie-break: fewer moves first, then the
/// lexicographically smallest moved-app-id set.
pub(crate) fn moved_ids<'a>(
    apps: &'a [crate::model::AppRecord],
    current: &[u32],
    assign: &[u32],
) -> Vec<&'a str> {
    let mut ids: Vec<&str> = apps
        .iter()
        .enumerate()
        .filter(|(i, _)| assign[*i] != current[*i])
        .map(|(_, a)| a.app_id.as_str())
        .collect();
    ids.sort_unstable();
    ids
}

/// Mapping from an index-based assignment.
pub(crate) fn mapping_of(problem: &Problem, assign: &[u32]) -> Mapping {
    let snapshot = problem.snapshot();
    let mut mapping = BTreeMap::new();
    for (i, app) in snapshot.apps().iter().enumerate() {
        let tier = &snapshot.tiers()[assign[i] as usize];
        mapping.insert(app.app_id.clone(), tier.tier_id.clone());
    }
    mapping
}
