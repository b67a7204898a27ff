//! Compilation of a snapshot plus run configuration into the balancer's
//! constraint/goal system, and scoring of candidate mappings.
//!
//! Hard constraints (all must hold for a valid solution):
//!
//! - C1 — tiers never exceed cpu/mem capacity
//! - C2 — tiers never exceed their task limit
//! - C3 — at most `move_budget` apps relocate per solution
//! - C4 — no app lands on a tier that does not support its SLO or on an
//!   avoided (app, tier) pair
//! - under the region-overlap variant, every move's (source, dest) tier pair
//!   must share a majority of the source tier's regions
//!
//! Goals are strictly below constraints and compared lexicographically in
//! priority order: stay under utilization targets, balance cpu/mem, balance
//! task counts, keep movement cost (task count of moved apps) low, avoid
//! moving high-criticality apps.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{project_metrics, Mapping, ModelError, Resource, Snapshot};

/// Absolute tolerance when comparing real-valued score components.
pub const SCORE_EPS: f64 = 1e-9;

/// The prioritized goals, named by what they optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    /// Total utilization overage above the per-tier targets.
    OverTarget,
    /// Spread of cpu plus mem utilization across tiers.
    ResourceBalance,
    /// Spread of task-count utilization across tiers.
    TaskBalance,
    /// Total task count of moved apps (movement downtime proxy).
    MovementCost,
    /// Total criticality of moved high-criticality apps.
    CriticalMoves,
}

/// Default priority order, highest first.
pub const DEFAULT_GOAL_ORDER: [Goal; 5] = [
    Goal::OverTarget,
    Goal::ResourceBalance,
    Goal::TaskBalance,
    Goal::MovementCost,
    Goal::CriticalMoves,
];

/// Which solver produces the mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Local,
    Optimal,
    GreedyCpu,
    GreedyMem,
    GreedyTasks,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Local => "local",
            SolverKind::Optimal => "optimal",
            SolverKind::GreedyCpu => "greedy_cpu",
            SolverKind::GreedyMem => "greedy_mem",
            SolverKind::GreedyTasks => "greedy_tasks",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(SolverKind::Local),
            "optimal" => Ok(SolverKind::Optimal),
            "greedy_cpu" => Ok(SolverKind::GreedyCpu),
            "greedy_mem" => Ok(SolverKind::GreedyMem),
            "greedy_tasks" => Ok(SolverKind::GreedyTasks),
            _ => Err(format!(
                "unknown solver {s:?} (expected local, optimal, greedy_cpu, greedy_mem or greedy_tasks)"
            )),
        }
    }
}

/// How the balancer integrates with the lower-level region scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Region-unaware: no transition restrictions.
    NoCnst,
    /// Region-aware: a move is only valid when the destination tier shares a
    /// majority of the source tier's regions.
    WCnst,
    /// Feedback-emulated: avoid pairs are added for transitions detected as
    /// high latency in a region-unaware probe run.
    ManualCnst,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::NoCnst => "no_cnst",
            Variant::WCnst => "w_cnst",
            Variant::ManualCnst => "manual_cnst",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_cnst" => Ok(Variant::NoCnst),
            "w_cnst" => Ok(Variant::WCnst),
            "manual_cnst" => Ok(Variant::ManualCnst),
            _ => Err(format!(
                "unknown variant {s:?} (expected no_cnst, w_cnst or manual_cnst)"
            )),
        }
    }
}

/// Everything a single balancing run needs beyond the snapshot itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Fraction of all apps a single solution may relocate.
    pub move_budget_fraction: f64,
    pub timeout_secs: f64,
    pub solver: SolverKind,
    pub variant: Variant,
    /// Minimum fraction of the source tier's regions the destination must
    /// share under the region-overlap variant (exclusive bound).
    pub region_overlap_threshold: f64,
    pub seed: u64,
    pub max_hierarchy_iterations: usize,
    /// Tier transitions whose p99 latency exceeds this are avoided under the
    /// feedback-emulated variant.
    pub manual_latency_threshold_ms: u64,
    /// Regions within this mean latency of an app's data source are
    /// acceptable placements for it.
    pub latency_radius_ms: f64,
    /// Overrides the median-based high-criticality threshold.
    pub criticality_threshold_override: Option<f64>,
    /// Overrides the default goal priority order (testing hook).
    pub goal_priority_override: Option<[Goal; 5]>,
    /// Lets the greedy baseline ignore SLO/avoid restrictions (ablation).
    pub greedy_raw: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            move_budget_fraction: 0.10,
            timeout_secs: 30.0,
            solver: SolverKind::Local,
            variant: Variant::NoCnst,
            region_overlap_threshold: 0.5,
            seed: 0,
            max_hierarchy_iterations: 20,
            manual_latency_threshold_ms: 30,
            latency_radius_ms: 30.0,
            criticality_threshold_override: None,
            goal_priority_override: None,
            greedy_raw: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |detail: String| ModelError::InvalidField {
            entity: "config",
            id: String::new(),
            detail,
        };
        if !(0.0..=1.0).contains(&self.move_budget_fraction) {
            return Err(bad(format!(
                "move_budget_fraction must be in [0, 1], got {}",
                self.move_budget_fraction
            )));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(bad(format!("timeout must be > 0, got {}", self.timeout_secs)));
        }
        if self.max_hierarchy_iterations == 0 {
            return Err(bad("max_hierarchy_iterations must be >= 1".to_string()));
        }
        if !self.region_overlap_threshold.is_finite() {
            return Err(bad("region_overlap_threshold must be finite".to_string()));
        }
        Ok(())
    }
}

/// One mapping's value on each goal. Compared lexicographically in the
/// problem's priority order; all components are >= 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub over_target: f64,
    pub resource_imbalance: f64,
    pub task_imbalance: f64,
    pub movement_cost: u64,
    pub critical_moves: f64,
}

impl ScoreVector {
    pub const ZERO: ScoreVector = ScoreVector {
        over_target: 0.0,
        resource_imbalance: 0.0,
        task_imbalance: 0.0,
        movement_cost: 0,
        critical_moves: 0.0,
    };

    pub fn component(&self, goal: Goal) -> f64 {
        match goal {
            Goal::OverTarget => self.over_target,
            Goal::ResourceBalance => self.resource_imbalance,
            Goal::TaskBalance => self.task_imbalance,
            Goal::MovementCost => self.movement_cost as f64,
            Goal::CriticalMoves => self.critical_moves,
        }
    }
}

impl fmt::Display for ScoreVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "over_target={:.6} resource_imbalance={:.6} task_imbalance={:.6} movement_cost={} critical_moves={:.6}",
            self.over_target,
            self.resource_imbalance,
            self.task_imbalance,
            self.movement_cost,
            self.critical_moves
        )
    }
}

/// Lexicographic comparison in priority order. Real components are equal
/// within [`SCORE_EPS`]; the integer movement cost compares exactly. Smaller
/// is better.
pub fn compare(a: &ScoreVector, b: &ScoreVector, priorities: &[Goal]) -> Ordering {
    for goal in priorities {
        match goal {
            Goal::MovementCost => match a.movement_cost.cmp(&b.movement_cost) {
                Ordering::Equal => {}
                other => return other,
            },
            _ => {
                let (x, y) = (a.component(*goal), b.component(*goal));
                if (x - y).abs() > SCORE_EPS {
                    return x.partial_cmp(&y).expect("score components are finite");
                }
            }
        }
    }
    Ordering::Equal
}

/// One failed constraint, with the ids involved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    CpuCapacity {
        tier_id: String,
        used: f64,
        capacity: f64,
    },
    MemCapacity {
        tier_id: String,
        used: f64,
        capacity: f64,
    },
    TaskLimit {
        tier_id: String,
        used: u64,
        limit: u64,
    },
    MoveBudget {
        moved: usize,
        budget: usize,
    },
    /// Avoided (app, tier) pair — unsupported SLO or an explicit avoid.
    Placement {
        app_id: String,
        tier_id: String,
    },
    /// Move between tiers that do not share enough regions.
    Transition {
        app_id: String,
        from_tier: String,
        to_tier: String,
    },
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::CpuCapacity { .. } | Violation::MemCapacity { .. } => "C1",
            Violation::TaskLimit { .. } => "C2",
            Violation::MoveBudget { .. } => "C3",
            Violation::Placement { .. } => "C4",
            Violation::Transition { .. } => "transition",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CpuCapacity {
                tier_id,
                used,
                capacity,
            } => write!(f, "C1: tier {tier_id:?} cpu used {used:.3} exceeds capacity {capacity:.3}"),
            Violation::MemCapacity {
                tier_id,
                used,
                capacity,
            } => write!(f, "C1: tier {tier_id:?} mem used {used:.3} exceeds capacity {capacity:.3}"),
            Violation::TaskLimit {
                tier_id,
                used,
                limit,
            } => write!(f, "C2: tier {tier_id:?} task count {used} exceeds limit {limit}"),
            Violation::MoveBudget { moved, budget } => {
                write!(f, "C3: {moved} apps moved, budget is {budget}")
            }
            Violation::Placement { app_id, tier_id } => {
                write!(f, "C4: app {app_id:?} not allowed on tier {tier_id:?}")
            }
            Violation::Transition {
                app_id,
                from_tier,
                to_tier,
            } => write!(
                f,
                "transition: app {app_id:?} move {from_tier:?} -> {to_tier:?} not allowed (region overlap below threshold)"
            ),
        }
    }
}

/// A compiled constraint/goal system over one snapshot.
///
/// Problems are immutable; [`Problem::add_avoid`] returns a new value.
/// Scoring and feasibility checks are pure and reentrant.
#[derive(Debug, Clone)]
pub struct Problem {
    snapshot: Arc<Snapshot>,
    /// floor(move_budget_fraction × app count).
    pub move_budget: usize,
    /// Forbidden (app_id, tier_id) pairs. SLO avoidance is materialized here
    /// at compile time; the hierarchy loop adds rejection feedback on top.
    pub avoid: BTreeSet<(String, String)>,
    /// Valid (source, dest) tier transitions under the region-overlap
    /// variant; `None` when the variant places no transition restriction.
    pub allowed_transitions: Option<BTreeSet<(String, String)>>,
    /// Moved apps with criticality strictly above this count toward the
    /// critical-moves goal. Defaults to the median criticality in the
    /// snapshot.
    pub criticality_high_threshold: f64,
    pub goal_priorities: [Goal; 5],
    pub region_overlap_threshold: f64,
    avoid_mask: Vec<bool>,
    /// Per tier, the sorted interned ids of its regions.
    tier_regions: Vec<Vec<u32>>,
    transition_constrained: bool,
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Count of elements present in both sorted slices.
fn sorted_intersection_len(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

impl Problem {
    /// Compiles the constraint system for `snapshot` under `config`.
    pub fn compile(snapshot: Arc<Snapshot>, config: &RunConfig) -> Result<Problem, ModelError> {
        config.validate()?;
        let apps = snapshot.apps();
        let tiers = snapshot.tiers();
        let move_budget = (config.move_budget_fraction * apps.len() as f64).floor() as usize;

        // SLO avoidance: an (app, tier) pair is avoided whenever the tier
        // does not support the app's SLO class.
        let mut avoid = BTreeSet::new();
        for app in apps {
            for tier in tiers {
                if !tier.supports_slo(app.slo_score) {
                    avoid.insert((app.app_id.clone(), tier.tier_id.clone()));
                }
            }
        }

        // Intern region ids so the overlap rule can be evaluated cheaply
        // inside solver loops.
        let mut region_ids: std::collections::HashMap<&str, u32> = std::collections::HashMap::new();
        let mut tier_regions = Vec::with_capacity(tiers.len());
        for tier in tiers {
            let mut ids: Vec<u32> = tier
                .regions
                .keys()
                .map(|r| {
                    let next = region_ids.len() as u32;
                    *region_ids.entry(r.as_str()).or_insert(next)
                })
                .collect();
            ids.sort_unstable();
            tier_regions.push(ids);
        }

        let transition_constrained = config.variant == Variant::WCnst;
        let mut problem = Problem {
            snapshot,
            move_budget,
            avoid,
            allowed_transitions: None,
            criticality_high_threshold: config.criticality_threshold_override.unwrap_or_else(
                || median(apps.iter().map(|a| a.criticality_score).collect()),
            ),
            goal_priorities: config.goal_priority_override.unwrap_or(DEFAULT_GOAL_ORDER),
            region_overlap_threshold: config.region_overlap_threshold,
            avoid_mask: Vec::new(),
            tier_regions,
            transition_constrained,
        };

        if transition_constrained {
            let tiers = problem.snapshot.tiers();
            let mut allowed = BTreeSet::new();
            for (i, from) in tiers.iter().enumerate() {
                for (j, to) in tiers.iter().enumerate() {
                    if i != j && problem.transition_allowed_at(i, j) {
                        allowed.insert((from.tier_id.clone(), to.tier_id.clone()));
                    }
                }
            }
            problem.allowed_transitions = Some(allowed);
        }

        problem.rebuild_avoid_mask();
        Ok(problem)
    }

    fn rebuild_avoid_mask(&mut self) {
        let napps = self.snapshot.apps().len();
        let ntiers = self.snapshot.tiers().len();
        let mut mask = vec![false; napps * ntiers];
        for (app_id, tier_id) in &self.avoid {
            if let (Some(a), Some(t)) = (
                self.snapshot.app_position(app_id),
                self.snapshot.tier_position(tier_id),
            ) {
                mask[a * ntiers + t] = true;
            }
        }
        self.avoid_mask = mask;
    }

    pub fn snapshot(&self) -> &Snapshot {
        &self.snapshot
    }

    pub fn snapshot_arc(&self) -> Arc<Snapshot> {
        Arc::clone(&self.snapshot)
    }

    /// Whether the (app, tier) pair at these positions is avoided.
    pub fn avoided_at(&self, app: usize, tier: usize) -> bool {
        self.avoid_mask[app * self.snapshot.tiers().len() + tier]
    }

    /// Evaluates the region-overlap rule for a (source, dest) tier pair:
    /// |regions(source) ∩ regions(dest)| / |regions(source)| must exceed the
    /// threshold. Always true when the variant places no restriction.
    pub fn transition_allowed_at(&self, from: usize, to: usize) -> bool {
        if !self.transition_constrained || from == to {
            return true;
        }
        let src = &self.tier_regions[from];
        let dst = &self.tier_regions[to];
        let shared = sorted_intersection_len(src, dst);
        shared as f64 / src.len() as f64 > self.region_overlap_threshold
    }

    pub fn transition_allowed(&self, from_tier: &str, to_tier: &str) -> Result<bool, ModelError> {
        let from = self
            .snapshot
            .tier_position(from_tier)
            .ok_or_else(|| ModelError::UnknownTier(from_tier.to_string()))?;
        let to = self
            .snapshot
            .tier_position(to_tier)
            .ok_or_else(|| ModelError::UnknownTier(to_tier.to_string()))?;
        Ok(self.transition_allowed_at(from, to))
    }

    /// Returns a problem whose avoid set also contains the pair. Idempotent.
    pub fn add_avoid(&self, app_id: &str, tier_id: &str) -> Result<Problem, ModelError> {
        if self.snapshot.app_position(app_id).is_none() {
            return Err(ModelError::UnknownApp(app_id.to_string()));
        }
        if self.snapshot.tier_position(tier_id).is_none() {
            return Err(ModelError::UnknownTier(tier_id.to_string()));
        }
        let mut next = self.clone();
        next.avoid.insert((app_id.to_string(), tier_id.to_string()));
        next.rebuild_avoid_mask();
        Ok(next)
    }

    /// Every constraint the mapping violates, in deterministic order
    /// (capacities in tier order, then budget, then placements and
    /// transitions in app order). Empty means feasible.
    pub fn violations(&self, mapping: &Mapping) -> Result<Vec<Violation>, ModelError> {
        let snapshot = &self.snapshot;
        let metrics = project_metrics(snapshot, mapping)?;
        let mut out = Vec::new();
        for (m, tier) in metrics.iter().zip(snapshot.tiers()) {
            if m.cpu_used > tier.cpu_capacity {
                out.push(Violation::CpuCapacity {
                    tier_id: tier.tier_id.clone(),
                    used: m.cpu_used,
                    capacity: tier.cpu_capacity,
                });
            }
            if m.mem_used > tier.mem_capacity {
                out.push(Violation::MemCapacity {
                    tier_id: tier.tier_id.clone(),
                    used: m.mem_used,
                    capacity: tier.mem_capacity,
                });
            }
            if m.tasks_used > tier.task_limit {
                out.push(Violation::TaskLimit {
                    tier_id: tier.tier_id.clone(),
                    used: m.tasks_used,
                    limit: tier.task_limit,
                });
            }
        }
        let moved = snapshot
            .apps()
            .iter()
            .filter(|a| mapping[&a.app_id] != a.current_tier)
            .count();
        if moved > self.move_budget {
            out.push(Violation::MoveBudget {
                moved,
                budget: self.move_budget,
            });
        }
        for app in snapshot.apps() {
            let assigned = &mapping[&app.app_id];
            if self.avoid.contains(&(app.app_id.clone(), assigned.clone()))
                || !snapshot
                    .tier(assigned)
                    .expect("validated by project_metrics")
                    .supports_slo(app.slo_score)
            {
                out.push(Violation::Placement {
                    app_id: app.app_id.clone(),
                    tier_id: assigned.clone(),
                });
            }
        }
        if let Some(allowed) = &self.allowed_transitions {
            for app in snapshot.apps() {
                let assigned = &mapping[&app.app_id];
                if *assigned != app.current_tier
                    && !allowed.contains(&(app.current_tier.clone(), assigned.clone()))
                {
                    out.push(Violation::Transition {
                        app_id: app.app_id.clone(),
                        from_tier: app.current_tier.clone(),
                        to_tier: assigned.clone(),
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn is_feasible(&self, mapping: &Mapping) -> Result<bool, ModelError> {
        Ok(self.violations(mapping)?.is_empty())
    }

    /// Scores a mapping on all goals. Feasibility is the caller's check;
    /// infeasible mappings score normally so repair phases can rank them.
    pub fn score(&self, mapping: &Mapping) -> Result<ScoreVector, ModelError> {
        let snapshot = &self.snapshot;
        let metrics = project_metrics(snapshot, mapping)?;

        let mut over_target = 0.0;
        for (m, tier) in metrics.iter().zip(snapshot.tiers()) {
            for resource in Resource::ALL {
                over_target += (m.util(resource) - tier.util_target(resource)).max(0.0);
            }
        }
        let (resource_imbalance, task_imbalance) = if metrics.is_empty() {
            (0.0, 0.0)
        } else {
            (
                crate::model::imbalance(&metrics, Resource::Cpu)?
                    + crate::model::imbalance(&metrics, Resource::Mem)?,
                crate::model::imbalance(&metrics, Resource::Tasks)?,
            )
        };

        let mut movement_cost = 0u64;
        let mut critical_moves = 0.0f64;
        for app in snapshot.apps() {
            if mapping[&app.app_id] != app.current_tier {
                movement_cost += app.task_count;
                if app.criticality_score > self.criticality_high_threshold {
                    critical_moves += app.criticality_score;
                }
            }
        }

        Ok(ScoreVector {
            over_target,
            resource_imbalance,
            task_imbalance,
            movement_cost,
            critical_moves,
        })
    }

    pub(crate) fn tier_region_ids(&self, tier: usize) -> &[u32] {
        &self.tier_regions[tier]
    }

    pub(crate) fn is_transition_constrained(&self) -> bool {
        self.transition_constrained
    }
}

/// Free-function form of [`Problem::compile`].
pub fn compile(snapshot: Arc<Snapshot>, config: &RunConfig) -> Result<Problem, ModelError> {
    Problem::compile(snapshot, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AppRecord, TierSpec};

    fn tier(id: &str, regions: &[&str], slos: &[u8]) -> TierSpec {
        TierSpec {
            tier_id: id.to_string(),
            cpu_capacity: 100.0,
            mem_capacity: 100.0,
            task_limit: 100,
            util_target_cpu: 0.7,
            util_target_mem: 0.7,
            util_target_tasks: 0.8,
            supported_slos: slos.iter().copied().collect(),
            regions: regions.iter().map(|r| (r.to_string(), 10)).collect(),
        }
    }

    fn app(id: &str, cpu: f64, tasks: u64, slo: u8, tier: &str) -> AppRecord {
        AppRecord {
            app_id: id.to_string(),
            cpu_p99: cpu,
            mem_p99: 1.0,
            task_count: tasks,
            slo_score: slo,
            criticality_score: 1.0,
            source_region: "r1".to_string(),
            current_tier: tier.to_string(),
        }
    }

    fn snapshot(tiers: Vec<TierSpec>, apps: Vec<AppRecord>) -> Arc<Snapshot> {
        Arc::new(Snapshot::new(tiers, apps, None, false).unwrap().0)
    }

    fn many_apps(n: usize, tier: &str) -> Vec<AppRecord> {
        (0..n)
            .map(|i| app(&format!("a{i:03}"), 0.5, 1, 1, tier))
            .collect()
    }

    #[test]
    fn budget_is_floored_fraction() {
        let snap = snapshot(vec![tier("t1", &["r1"], &[1])], many_apps(100, "t1"));
        let cfg = RunConfig::default();
        let p = Problem::compile(snap.clone(), &cfg).unwrap();
        assert_eq!(p.move_budget, 10);

        let zero = RunConfig {
            move_budget_fraction: 0.0,
            ..RunConfig::default()
        };
        assert_eq!(Problem::compile(snap, &zero).unwrap().move_budget, 0);
    }

    #[test]
    fn region_overlap_rule_from_hand_computed_sets() {
        // A {r1,r2,r3} -> B {r1,r2,r4}: 2 of A's 3 regions shared, above 0.5.
        // A -> C {r4,r5}: no shared regions, disallowed.
        let snap = snapshot(
            vec![
                tier("A", &["r1", "r2", "r3"], &[1]),
                tier("B", &["r1", "r2", "r4"], &[1]),
                tier("C", &["r4", "r5"], &[1]),
            ],
            vec![app("a1", 1.0, 1, 1, "A")],
        );
        let cfg = RunConfig {
            variant: Variant::WCnst,
            ..RunConfig::default()
        };
        let p = Problem::compile(snap, &cfg).unwrap();
        let allowed = p.allowed_transitions.as_ref().unwrap();
        assert!(allowed.contains(&("A".to_string(), "B".to_string())));
        assert!(!allowed.contains(&("A".to_string(), "C".to_string())));
        // Hand oracle over every ordered pair.
        let sets: &[(&str, &[&str])] = &[
            ("A", &["r1", "r2", "r3"]),
            ("B", &["r1", "r2", "r4"]),
            ("C", &["r4", "r5"]),
        ];
        for (from, from_regions) in sets {
            for (to, to_regions) in sets {
                if from == to {
                    continue;
                }
                let shared = from_regions.iter().filter(|r| to_regions.contains(r)).count();
                let expected = shared as f64 / from_regions.len() as f64 > 0.5;
                assert_eq!(
                    allowed.contains(&(from.to_string(), to.to_string())),
                    expected,
                    "{from} -> {to}"
                );
            }
        }
    }

    #[test]
    fn slo_avoidance_is_materialized() {
        let snap = snapshot(
            vec![tier("t1", &["r1"], &[1, 2]), tier("t4", &["r1"], &[3, 4])],
            vec![app("a1", 1.0, 1, 4, "t4")],
        );
        let p = Problem::compile(snap, &RunConfig::default()).unwrap();
        assert!(p.avoid.contains(&("a1".to_string(), "t1".to_string())));
        assert!(!p.avoid.contains(&("a1".to_string(), "t4".to_string())));
    }

    #[test]
    fn move_budget_violation_named_c3() {
        let snap = snapshot(
            vec![tier("t1", &["r1"], &[1]), tier("t2", &["r1"], &[1])],
            many_apps(100, "t1"),
        );
        let p = Problem::compile(snap.clone(), &RunConfig::default()).unwrap();
        assert_eq!(p.move_budget, 10);
        let mut mapping = snap.identity_mapping();
        for i in 0..11 {
            mapping.insert(format!("a{i:03}"), "t2".to_string());
        }
        let violations = p.violations(&mapping).unwrap();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].code(), "C3");
    }

    #[test]
    fn slo_mismatch_violation_named_c4() {
        // Five tiers shaped like a production SLO table: slo 4 only on the
        // last two tiers.
        let tiers: Vec<TierSpec> = (1..=5)
            .map(|i| {
                let slos: &[u8] = if i <= 3 { &[1, 2, 3] } else { &[3, 4] };
                tier(&format!("t{i}"), &["r1"], slos)
            })
            .collect();
        let snap = snapshot(tiers, vec![app("a1", 1.0, 1, 4, "t4")]);
        let p = Problem::compile(snap.clone(), &RunConfig::default()).unwrap();
        let mut mapping = snap.identity_mapping();
        mapping.insert("a1".to_string(), "t1".to_string());
        let violations = p.violations(&mapping).unwrap();
        assert!(violations.iter().any(|v| v.code() == "C4"), "{violations:?}");
    }

    #[test]
    fn identity_on_fitting_snapshot_is_feasible() {
        let snap = snapshot(
            vec![tier("t1", &["r1"], &[1]), tier("t2", &["r1"], &[1])],
            vec![app("a1", 30.0, 2, 1, "t1"), app("a2", 40.0, 3, 1, "t2")],
        );
        let p = Problem::compile(snap.clone(), &RunConfig::default()).unwrap();
        assert!(p.is_feasible(&snap.identity_mapping()).unwrap());
    }

    #[test]
    fn score_examples() {
        // Single tier at cpu util 0.75 against a 0.70 target; mem/tasks under.
        let snap = snapshot(
            vec![tier("t1", &["r1"], &[1])],
            vec![app("a1", 75.0, 2, 1, "t1")],
        );
        let p = Problem::compile(snap.clone(), &RunConfig::default()).unwrap();
        let s = p.score(&snap.identity_mapping()).unwrap();
        assert!((s.over_target - 0.05).abs() < 1e-9, "{s}");
        assert_eq!(s.movement_cost, 0);
        assert_eq!(s.critical_moves, 0.0);
    }

    #[test]
    fn movement_cost_sums_moved_task_counts() {
        let snap = snapshot(
            vec![tier("t1", &["r1"], &[1]), tier("t2", &["r1"], &[1])],
            vec![
                app("a1", 1.0, 5, 1, "t1"),
                app("a2", 1.0, 7, 1, "t1"),
                app("a3", 1.0, 11, 1, "t1"),
            ],
        );
        let cfg = RunConfig {
            move_budget_fraction: 1.0,
            ..RunConfig::default()
        };
        let p = Problem::compile(snap.clone(), &cfg).unwrap();
        let mut mapping = snap.identity_mapping();
        mapping.insert("a1".to_string(), "t2".to_string());
        mapping.insert("a2".to_string(), "t2".to_string());
        let s = p.score(&mapping).unwrap();
        // Hand-summed: 5 + 7.
        assert_eq!(s.movement_cost, 12);
    }

    #[test]
    fn compare_is_lexicographic() {
        let a = ScoreVector {
            over_target: 0.0,
            resource_imbalance: 9.0,
            task_imbalance: 9.0,
            movement_cost: 9,
            critical_moves: 9.0,
        };
        let b = ScoreVector {
            over_target: 0.1,
            ..ScoreVector::ZERO
        };
        assert_eq!(compare(&a, &b, &DEFAULT_GOAL_ORDER), Ordering::Less);
        assert_eq!(compare(&a, &a, &DEFAULT_GOAL_ORDER), Ordering::Equal);
        // Within tolerance counts as equal on that component.
        let c = ScoreVector {
            over_target: 1e-12,
            ..a
        };
        assert_eq!(compare(&a, &c, &DEFAULT_GOAL_ORDER), Ordering::Equal);
    }

    #[test]
    fn add_avoid_is_idempotent_and_binding() {
        let snap = snapshot(
            vec![tier("t1", &["r1"], &[1]), tier("t2", &["r1"], &[1])],
            vec![app("a1", 1.0, 1, 1, "t1")],
        );
        let cfg = RunConfig {
            move_budget_fraction: 1.0,
            ..RunConfig::default()
        };
        let p = Problem::compile(snap.clone(), &cfg).unwrap();
        let before = p.avoid.len();
        let p1 = p.add_avoid("a1", "t2").unwrap();
        let p2 = p1.add_avoid("a1", "t2").unwrap();
        assert_eq!(p1.avoid.len(), before + 1);
        assert_eq!(p2.avoid.len(), p1.avoid.len());

        let mut mapping = snap.identity_mapping();
        mapping.insert("a1".to_string(), "t2".to_string());
        assert!(p.is_feasible(&mapping).unwrap());
        assert!(!p1.is_feasible(&mapping).unwrap());
        assert!(p1.add_avoid("nope", "t2").is_err());
    }

    #[test]
    fn avoiding_all_but_current_pins_the_app() {
        let snap = snapshot(
            vec![
                tier("t1", &["r1"], &[1]),
                tier("t2", &["r1"], &[1]),
                tier("t3", &["r1"], &[1]),
            ],
            vec![app("a1", 1.0, 1, 1, "t2")],
        );
        let cfg = RunConfig {
            move_budget_fraction: 1.0,
            ..RunConfig::default()
        };
        let mut p = Problem::compile(snap.clone(), &cfg).unwrap();
        p = p.add_avoid("a1", "t1").unwrap();
        p = p.add_avoid("a1", "t3").unwrap();
        // Enumerate all placements of the single app.
        let mut feasible_targets = Vec::new();
        for t in ["t1", "t2", "t3"] {
            let mut mapping = Mapping::new();
            mapping.insert("a1".to_string(), t.to_string());
            if p.is_feasible(&mapping).unwrap() {
                feasible_targets.push(t);
            }
        }
        assert_eq!(feasible_targets, vec!["t2"]);
    }

    #[test]
    fn median_threshold() {
        assert_eq!(median(vec![]), 0.0);
        assert_eq!(median(vec![3.0]), 3.0);
        assert_eq!(median(vec![1.0, 2.0, 10.0]), 2.0);
        assert_eq!(median(vec![1.0, 2.0, 3.0, 10.0]), 2.5);
    }
}
