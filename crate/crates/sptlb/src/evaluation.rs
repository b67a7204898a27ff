//! Evaluation harnesses: multi-objective balance comparison against the
//! greedy baselines, and worst-case network-latency comparison across the
//! hierarchy-integration variants.
//!
//! Latency evaluation draws, for every (source tier, dest tier) transition
//! with k moved apps, 1000 batches of k samples from the region-pair
//! distributions the moves induce, pools all samples of a cell into one
//! empirical CDF, and reports its p99 rounded to the nearest millisecond.
//! Each cell owns a random stream derived from (seed, cell label), so cells
//! are independent and reports are reproducible.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{imbalance, Mapping, ModelError, Resource, Snapshot, TierMetrics};
use crate::problem::{compare, Goal, Problem, RunConfig, ScoreVector, SolverKind, Variant};
use crate::rng;
use crate::solvers::{solve, MoveRec, SolveError, Solution, TerminatedBy};

/// Truncated-normal (at zero) latency distribution for one region pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyDist {
    pub mean_ms: f64,
    pub stddev_ms: f64,
}

/// Latency distributions per (source region, dest region). Lookups are
/// symmetric unless the reverse direction is stored explicitly.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyModel {
    pub pairs: BTreeMap<String, BTreeMap<String, LatencyDist>>,
}

impl LatencyModel {
    pub fn insert(&mut self, a: &str, b: &str, dist: LatencyDist) {
        self.pairs
            .entry(a.to_string())
            .or_default()
            .insert(b.to_string(), dist);
    }

    pub fn lookup(&self, a: &str, b: &str) -> Option<&LatencyDist> {
        self.pairs
            .get(a)
            .and_then(|m| m.get(b))
            .or_else(|| self.pairs.get(b).and_then(|m| m.get(a)))
    }

    pub fn validate(&self) -> Result<(), String> {
        for (a, row) in &self.pairs {
            for (b, dist) in row {
                if !dist.mean_ms.is_finite() || dist.mean_ms < 0.0 {
                    return Err(format!("pair ({a}, {b}): mean_ms must be >= 0"));
                }
                if !dist.stddev_ms.is_finite() || dist.stddev_ms < 0.0 {
                    return Err(format!("pair ({a}, {b}): stddev_ms must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// One draw, truncated at zero (resampled, clamped after 64 rejections).
    pub fn sample(dist: &LatencyDist, rng: &mut ChaCha8Rng) -> f64 {
        if dist.stddev_ms == 0.0 {
            return dist.mean_ms;
        }
        for _ in 0..64 {
            let v = dist.mean_ms + dist.stddev_ms * rng::standard_normal(rng);
            if v >= 0.0 {
                return v;
            }
        }
        0.0
    }
}

/// Nearest-rank percentile of an ascending-sorted slice; `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty slice");
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Round half up to the nearest millisecond.
pub fn round_ms(value: f64) -> u64 {
    (value + 0.5).floor() as u64
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("snapshot has no latency model")]
    NoLatencyModel,
    #[error("latency model incomplete: no distribution from region {source_region:?} to any region of tier {dest_tier:?}")]
    ModelIncomplete {
        source_region: String,
        dest_tier: String,
    },
    #[error("solutions disagree with the problem snapshot: {0}")]
    SnapshotMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Per-resource triple, used for imbalance summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerResource {
    pub cpu: f64,
    pub mem: f64,
    pub tasks: f64,
}

impl PerResource {
    pub fn get(&self, resource: Resource) -> f64 {
        match resource {
            Resource::Cpu => self.cpu,
            Resource::Mem => self.mem,
            Resource::Tasks => self.tasks,
        }
    }

    fn of(metrics: &[TierMetrics]) -> Result<PerResource, ModelError> {
        Ok(PerResource {
            cpu: imbalance(metrics, Resource::Cpu)?,
            mem: imbalance(metrics, Resource::Mem)?,
            tasks: imbalance(metrics, Resource::Tasks)?,
        })
    }
}

/// One solver's outcome in a balance comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalanceEntry {
    pub solver_name: String,
    /// Present when the solver failed; the metric fields are then absent.
    pub error: Option<String>,
    pub final_metrics: Option<Vec<TierMetrics>>,
    pub final_imbalance: Option<PerResource>,
    pub score: Option<ScoreVector>,
    pub moves: Option<usize>,
    pub terminated_by: Option<TerminatedBy>,
}

/// Initial vs. final utilizations for the configured solver and every greedy
/// variant, on identical inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalanceReport {
    pub initial_metrics: Vec<TierMetrics>,
    pub initial_imbalance: PerResource,
    pub entries: Vec<BalanceEntry>,
}

impl BalanceReport {
    pub fn entry(&self, solver_name: &str) -> Option<&BalanceEntry> {
        self.entries.iter().find(|e| e.solver_name == solver_name)
    }
}

/// Runs the configured solver and the three greedy variants on the same
/// snapshot and reports per-tier utilizations plus imbalance summaries.
/// Solver failures are recorded per entry rather than failing the report.
pub fn eval_balance(snapshot: &Arc<Snapshot>, config: &RunConfig) -> Result<BalanceReport, EvalError> {
    let problem = Problem::compile(Arc::clone(snapshot), config)?;
    let initial_metrics = snapshot.initial_metrics();
    let initial_imbalance = PerResource::of(&initial_metrics)?;

    let mut kinds = vec![config.solver];
    for greedy in [SolverKind::GreedyCpu, SolverKind::GreedyMem, SolverKind::GreedyTasks] {
        if !kinds.contains(&greedy) {
            kinds.push(greedy);
        }
    }

    let mut entries = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let run_config = RunConfig {
            solver: kind,
            ..config.clone()
        };
        let entry = match solve(&problem, &run_config) {
            Ok(solution) => BalanceEntry {
                solver_name: kind.name().to_string(),
                error: None,
                final_imbalance: Some(PerResource::of(&solution.projected)?),
                final_metrics: Some(solution.projected.clone()),
                score: Some(solution.score),
                moves: Some(solution.moves.len()),
                terminated_by: Some(solution.terminated_by),
            },
            Err(e) => BalanceEntry {
                solver_name: kind.name().to_string(),
                error: Some(e.to_string()),
                final_metrics: None,
                final_imbalance: None,
                score: None,
                moves: None,
                terminated_by: None,
            },
        };
        entries.push(entry);
    }

    Ok(BalanceReport {
        initial_metrics,
        initial_imbalance,
        entries,
    })
}

/// The evaluation grid for [`eval_latency`]: every variant × solver ×
/// timeout cell runs on the same snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyMatrix {
    pub base: RunConfig,
    pub variants: Vec<Variant>,
    pub solvers: Vec<SolverKind>,
    pub timeouts: Vec<f64>,
}

/// p99 of one tier-pair transition's pooled samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairSummary {
    pub from_tier: String,
    pub to_tier: String,
    pub moved_apps: usize,
    pub p99_ms: u64,
}

/// One cell of the latency grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyCell {
    pub variant: Variant,
    pub solver: SolverKind,
    pub timeout_secs: f64,
    /// p99 of the cell's pooled empirical CDF, rounded to the nearest ms.
    pub worst_case_p99_ms: u64,
    pub p50_ms: u64,
    pub p0_ms: u64,
    /// Total pooled samples (1000 per moved app).
    pub sample_count: usize,
    /// Batches drawn per tier-pair transition.
    pub batches_per_pair: usize,
    pub moved_apps: usize,
    pub per_pair: Vec<PairSummary>,
    pub terminated_by: TerminatedBy,
    /// Wall-clock time to construct and solve the cell's problem. Telemetry
    /// only; not serialized, so report files stay byte-reproducible.
    #[serde(skip)]
    pub solve_elapsed: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyReport {
    pub cells: Vec<LatencyCell>,
}

impl LatencyReport {
    pub fn cell(&self, variant: Variant, solver: SolverKind, timeout_secs: f64) -> Option<&LatencyCell> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.solver == solver && c.timeout_secs == timeout_secs)
    }
}

const BATCHES_PER_PAIR: usize = 1000;

struct SampledMoves {
    pooled: Vec<f64>,
    per_pair: Vec<PairSummary>,
    /// Unrounded p99 per (from, to) pair, for threshold detection.
    pair_p99: BTreeMap<(String, String), f64>,
}

/// Draws the per-move latency samples for a final mapping. Each move samples
/// the region pair between the app's source region and the destination
/// tier's nearest region by mean latency.
fn sample_moves(
    snapshot: &Snapshot,
    moves: &[MoveRec],
    rng: &mut ChaCha8Rng,
) -> Result<SampledMoves, EvalError> {
    let model = snapshot.latency_model.as_ref().ok_or(EvalError::NoLatencyModel)?;
    let mut by_pair: BTreeMap<(String, String), Vec<&MoveRec>> = BTreeMap::new();
    for mv in moves {
        by_pair
            .entry((mv.from_tier.clone(), mv.to_tier.clone()))
            .or_default()
            .push(mv);
    }

    let mut pooled = Vec::new();
    let mut per_pair = Vec::new();
    let mut pair_p99 = BTreeMap::new();
    for ((from, to), pair_moves) in &by_pair {
        let mut pair_pool = Vec::with_capacity(pair_moves.len() * BATCHES_PER_PAIR);
        for mv in pair_moves {
            let app = snapshot
                .app(&mv.app_id)
                .ok_or_else(|| ModelError::UnknownApp(mv.app_id.clone()))?;
            let tier = snapshot
                .tier(to)
                .ok_or_else(|| ModelError::UnknownTier(to.clone()))?;
            // Nearest destination region by mean latency; ties by region id.
            let mut chosen: Option<(&LatencyDist, f64)> = None;
            for region in tier.regions.keys() {
                if let Some(dist) = model.lookup(&app.source_region, region) {
                    if chosen.map_or(true, |(_, mean)| dist.mean_ms < mean) {
                        chosen = Some((dist, dist.mean_ms));
                    }
                }
            }
            let (dist, _) = chosen.ok_or_else(|| EvalError::ModelIncomplete {
                source_region: app.source_region.clone(),
                dest_tier: to.clone(),
            })?;
            for _ in 0..BATCHES_PER_PAIR {
                pair_pool.push(LatencyModel::sample(dist, rng));
            }
        }
        pair_pool.sort_by(f64::total_cmp);
        let p99 = percentile(&pair_pool, 0.99);
        pair_p99.insert((from.clone(), to.clone()), p99);
        per_pair.push(PairSummary {
            from_tier: from.clone(),
            to_tier: to.clone(),
            moved_apps: pair_moves.len(),
            p99_ms: round_ms(p99),
        });
        pooled.extend_from_slice(&pair_pool);
    }
    pooled.sort_by(f64::total_cmp);
    Ok(SampledMoves {
        pooled,
        per_pair,
        pair_p99,
    })
}

/// Runs the latency evaluation grid. The feedback-emulated variant first
/// solves without region constraints, detects tier transitions whose p99
/// exceeds the configured threshold, avoids the moved apps on those
/// transitions, and re-solves.
pub fn eval_latency(snapshot: &Arc<Snapshot>, matrix: &LatencyMatrix) -> Result<LatencyReport, EvalError> {
    if snapshot.latency_model.is_none() {
        return Err(EvalError::NoLatencyModel);
    }
    let mut cells = Vec::new();
    for &variant in &matrix.variants {
        for &solver in &matrix.solvers {
            for &timeout_secs in &matrix.timeouts {
                let label = format!("eval-latency/{variant}/{solver}/{timeout_secs}");
                let mut rng = rng::stream(matrix.base.seed, &label);
                let config = RunConfig {
                    variant,
                    solver,
                    timeout_secs,
                    ..matrix.base.clone()
                };
                let (solution, solve_elapsed) = match variant {
                    Variant::NoCnst | Variant::WCnst => {
                        let t0 = Instant::now();
                        let problem = Problem::compile(Arc::clone(snapshot), &config)?;
                        let solution = solve(&problem, &config)?;
                        (solution, t0.elapsed().as_secs_f64())
                    }
                    Variant::ManualCnst => {
                        // Probe run without region constraints; its timing is
                        // the probe's, not this cell's.
                        let probe_config = RunConfig {
                            variant: Variant::NoCnst,
                            ..config.clone()
                        };
                        let probe_problem =
                            Problem::compile(Arc::clone(snapshot), &probe_config)?;
                        let probe = solve(&probe_problem, &probe_config)?;
                        let probe_samples = sample_moves(snapshot, &probe.moves, &mut rng)?;
                        let threshold = config.manual_latency_threshold_ms as f64;

                        let t0 = Instant::now();
                        let mut problem =
                            Problem::compile(Arc::clone(snapshot), &probe_config)?;
                        for mv in &probe.moves {
                            let key = (mv.from_tier.clone(), mv.to_tier.clone());
                            if probe_samples.pair_p99.get(&key).copied().unwrap_or(0.0)
                                > threshold
                            {
                                problem = problem.add_avoid(&mv.app_id, &mv.to_tier)?;
                            }
                        }
                        let solution = solve(&problem, &config)?;
                        (solution, t0.elapsed().as_secs_f64())
                    }
                };

                let samples = sample_moves(snapshot, &solution.moves, &mut rng)?;
                let (p99, p50, p0) = if samples.pooled.is_empty() {
                    (0, 0, 0)
                } else {
                    (
                        round_ms(percentile(&samples.pooled, 0.99)),
                        round_ms(percentile(&samples.pooled, 0.50)),
                        round_ms(samples.pooled[0]),
                    )
                };
                cells.push(LatencyCell {
                    variant,
                    solver,
                    timeout_secs,
                    worst_case_p99_ms: p99,
                    p50_ms: p50,
                    p0_ms: p0,
                    sample_count: samples.pooled.len(),
                    batches_per_pair: BATCHES_PER_PAIR,
                    moved_apps: solution.moves.len(),
                    per_pair: samples.per_pair,
                    terminated_by: solution.terminated_by,
                    solve_elapsed,
                });
            }
        }
    }
    Ok(LatencyReport { cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    FirstBetter,
    SecondBetter,
    Tie,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoalDelta {
    pub goal: Goal,
    pub first: f64,
    pub second: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TierUtilDelta {
    pub tier_id: String,
    pub resource: Resource,
    pub first_util: f64,
    pub second_util: f64,
    pub delta: f64,
}

/// Structured comparison of two solutions over the same snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionDiff {
    pub first_solver: String,
    pub second_solver: String,
    pub goal_deltas: Vec<GoalDelta>,
    pub tier_deltas: Vec<TierUtilDelta>,
    pub moves_only_first: Vec<MoveRec>,
    pub moves_only_second: Vec<MoveRec>,
    pub verdict: Verdict,
}

fn check_same_snapshot(problem: &Problem, solution: &Solution) -> Result<(), EvalError> {
    let snapshot = problem.snapshot();
    if solution.mapping.len() != snapshot.apps().len() {
        return Err(EvalError::SnapshotMismatch(format!(
            "solution {:?} maps {} apps, snapshot has {}",
            solution.solver_name,
            solution.mapping.len(),
            snapshot.apps().len()
        )));
    }
    for (app_id, tier_id) in &solution.mapping {
        if snapshot.app_position(app_id).is_none() {
            return Err(EvalError::SnapshotMismatch(format!("unknown app {app_id:?}")));
        }
        if snapshot.tier_position(tier_id).is_none() {
            return Err(EvalError::SnapshotMismatch(format!("unknown tier {tier_id:?}")));
        }
    }
    Ok(())
}

/// Per-goal score deltas, per-tier utilization deltas, the move-set
/// symmetric difference, and a verdict under the problem's goal priorities.
pub fn compare_solutions(
    first: &Solution,
    second: &Solution,
    problem: &Problem,
) -> Result<SolutionDiff, EvalError> {
    check_same_snapshot(problem, first)?;
    check_same_snapshot(problem, second)?;

    let goal_deltas = problem
        .goal_priorities
        .iter()
        .map(|&goal| GoalDelta {
            goal,
            first: first.score.component(goal),
            second: second.score.component(goal),
            delta: first.score.component(goal) - second.score.component(goal),
        })
        .collect();

    let mut tier_deltas = Vec::new();
    for (a, b) in first.projected.iter().zip(&second.projected) {
        for resource in Resource::ALL {
            tier_deltas.push(TierUtilDelta {
                tier_id: a.tier_id.clone(),
                resource,
                first_util: a.util(resource),
                second_util: b.util(resource),
                delta: a.util(resource) - b.util(resource),
            });
        }
    }

    let firsts: std::collections::BTreeSet<&MoveRec> = first.moves.iter().collect();
    let seconds: std::collections::BTreeSet<&MoveRec> = second.moves.iter().collect();
    let moves_only_first = first
        .moves
        .iter()
        .filter(|m| !seconds.contains(m))
        .cloned()
        .collect();
    let moves_only_second = second
        .moves
        .iter()
        .filter(|m| !firsts.contains(m))
        .cloned()
        .collect();

    let verdict = match compare(&first.score, &second.score, &problem.goal_priorities) {
        std::cmp::Ordering::Less => Verdict::FirstBetter,
        std::cmp::Ordering::Greater => Verdict::SecondBetter,
        std::cmp::Ordering::Equal => Verdict::Tie,
    };

    Ok(SolutionDiff {
        first_solver: first.solver_name.clone(),
        second_solver: second.solver_name.clone(),
        goal_deltas,
        tier_deltas,
        moves_only_first,
        moves_only_second,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(percentile(&v, 0.99), 99.0);
        assert_eq!(percentile(&v, 0.50), 50.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 100.0);
        assert_eq!(percentile(&[7.0], 0.99), 7.0);
    }

    #[test]
    fn round_half_up() {
        assert_eq!(round_ms(6.4), 6);
        assert_eq!(round_ms(6.5), 7);
        assert_eq!(round_ms(0.0), 0);
        assert_eq!(round_ms(0.49), 0);
    }

    #[test]
    fn lookup_is_symmetric_by_default() {
        let mut model = LatencyModel::default();
        model.insert("r1", "r2", LatencyDist { mean_ms: 5.0, stddev_ms: 1.0 });
        assert!(model.lookup("r1", "r2").is_some());
        assert!(model.lookup("r2", "r1").is_some());
        assert!(model.lookup("r1", "r3").is_none());
        // Explicit reverse entry overrides the mirror.
        model.insert("r2", "r1", LatencyDist { mean_ms: 9.0, stddev_ms: 1.0 });
        assert_eq!(model.lookup("r2", "r1").unwrap().mean_ms, 9.0);
    }

    #[test]
    fn degenerate_distribution_samples_its_mean() {
        let dist = LatencyDist { mean_ms: 7.0, stddev_ms: 0.0 };
        let mut rng = rng::stream(1, "eval/test");
        for _ in 0..10 {
            assert_eq!(LatencyModel::sample(&dist, &mut rng), 7.0);
        }
    }

    #[test]
    fn samples_are_truncated_at_zero() {
        let dist = LatencyDist { mean_ms: 1.0, stddev_ms: 10.0 };
        let mut rng = rng::stream(2, "eval/test");
        for _ in 0..1000 {
            assert!(LatencyModel::sample(&dist, &mut rng) >= 0.0);
        }
    }
}
