//! Co-operation between the tier balancer and the lower-level region and
//! host schedulers.
//!
//! Proposed mappings pass through two gates: the region scheduler rejects a
//! move when the destination tier has no region acceptable to the app (an
//! app should stay near its data source), and the host scheduler rejects it
//! when no acceptable region of the tier has a free host slot. Every
//! rejection feeds back as an avoid constraint on the exact (app, tier) pair
//! and the balancer re-solves, so the loop makes strict progress and
//! terminates within the iteration limit or the shared timeout.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Mapping, ModelError, Snapshot};
use crate::problem::{Problem, RunConfig};
use crate::solvers::{solve, MoveRec, SolveError, Solution};

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("unknown app {0:?}")]
    UnknownApp(String),
    #[error("unknown tier {0:?}")]
    UnknownTier(String),
    #[error("app {0:?} has an empty acceptable-region set")]
    EmptyAcceptableRegions(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The region scheduler's view: per app, the regions it may land in; per
/// tier, the regions it has machines in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPolicy {
    acceptable: BTreeMap<String, BTreeSet<String>>,
    tier_regions: BTreeMap<String, BTreeSet<String>>,
}

impl RegionPolicy {
    /// Derives acceptability from each app's data-source region: the source
    /// region itself plus every region within `radius_ms` mean latency of it
    /// under the snapshot's latency model (when present).
    pub fn derive(snapshot: &Snapshot, radius_ms: f64) -> RegionPolicy {
        let mut all_regions: BTreeSet<String> = BTreeSet::new();
        for tier in snapshot.tiers() {
            all_regions.extend(tier.regions.keys().cloned());
        }
        let mut acceptable = BTreeMap::new();
        for app in snapshot.apps() {
            let mut regions: BTreeSet<String> = BTreeSet::new();
            regions.insert(app.source_region.clone());
            if let Some(model) = &snapshot.latency_model {
                for region in &all_regions {
                    if let Some(dist) = model.lookup(&app.source_region, region) {
                        if dist.mean_ms <= radius_ms {
                            regions.insert(region.clone());
                        }
                    }
                }
            }
            acceptable.insert(app.app_id.clone(), regions);
        }
        RegionPolicy {
            acceptable,
            tier_regions: snapshot
                .tiers()
                .iter()
                .map(|t| (t.tier_id.clone(), t.regions.keys().cloned().collect()))
                .collect(),
        }
    }

    /// Builds a policy from explicit acceptable-region sets (testing and
    /// what-if runs). Every app needs a non-empty set.
    pub fn explicit(
        snapshot: &Snapshot,
        acceptable: BTreeMap<String, BTreeSet<String>>,
    ) -> Result<RegionPolicy, HierarchyError> {
        for app in snapshot.apps() {
            match acceptable.get(&app.app_id) {
                None => return Err(HierarchyError::UnknownApp(app.app_id.clone())),
                Some(set) if set.is_empty() => {
                    return Err(HierarchyError::EmptyAcceptableRegions(app.app_id.clone()))
                }
                Some(_) => {}
            }
        }
        Ok(RegionPolicy {
            acceptable,
            tier_regions: snapshot
                .tiers()
                .iter()
                .map(|t| (t.tier_id.clone(), t.regions.keys().cloned().collect()))
                .collect(),
        })
    }

    pub fn acceptable_regions(&self, app_id: &str) -> Option<&BTreeSet<String>> {
        self.acceptable.get(app_id)
    }

    pub fn tier_regions(&self, tier_id: &str) -> Option<&BTreeSet<String>> {
        self.tier_regions.get(tier_id)
    }
}

/// Accept iff the destination tier has at least one region acceptable to the
/// app.
pub fn region_check(
    app_id: &str,
    dest_tier: &str,
    policy: &RegionPolicy,
) -> Result<bool, HierarchyError> {
    let acceptable = policy
        .acceptable_regions(app_id)
        .ok_or_else(|| HierarchyError::UnknownApp(app_id.to_string()))?;
    let tier_regions = policy
        .tier_regions(dest_tier)
        .ok_or_else(|| HierarchyError::UnknownTier(dest_tier.to_string()))?;
    Ok(acceptable.iter().any(|r| tier_regions.contains(r)))
}

/// Free host slots per (tier, region). One app costs one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostPool {
    slots: BTreeMap<String, BTreeMap<String, u64>>,
}

impl HostPool {
    pub fn from_snapshot(snapshot: &Snapshot) -> HostPool {
        HostPool {
            slots: snapshot
                .tiers()
                .iter()
                .map(|t| (t.tier_id.clone(), t.regions.clone()))
                .collect(),
        }
    }

    pub fn with_slots(slots: BTreeMap<String, BTreeMap<String, u64>>) -> HostPool {
        HostPool { slots }
    }

    pub fn free_slots(&self, tier_id: &str, region: &str) -> u64 {
        self.slots
            .get(tier_id)
            .and_then(|regions| regions.get(region))
            .copied()
            .unwrap_or(0)
    }

    pub fn total_free(&self) -> u64 {
        self.slots
            .values()
            .flat_map(|regions| regions.values())
            .sum()
    }
}

/// The host scheduler's verdict for one move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum HostDecision {
    Accepted { region: String },
    Rejected,
}

/// Places each move (in app-id order) into the acceptable region of its
/// destination tier with the most free slots, ties broken by region id, and
/// decrements that slot. A move whose acceptable regions are all full is
/// rejected and mutates nothing.
pub fn host_allocate(
    moves: &[(String, String)],
    policy: &RegionPolicy,
    pool: &mut HostPool,
) -> Result<Vec<(String, HostDecision)>, HierarchyError> {
    let mut ordered: Vec<&(String, String)> = moves.iter().collect();
    ordered.sort_by(|a, b| a.0.cmp(&b.0));
    let mut decisions = Vec::with_capacity(ordered.len());
    for (app_id, dest_tier) in ordered {
        let acceptable = policy
            .acceptable_regions(app_id)
            .ok_or_else(|| HierarchyError::UnknownApp(app_id.clone()))?;
        let tier_regions = policy
            .tier_regions(dest_tier)
            .ok_or_else(|| HierarchyError::UnknownTier(dest_tier.clone()))?;
        let mut chosen: Option<(&str, u64)> = None;
        for region in tier_regions {
            if !acceptable.contains(region) {
                continue;
            }
            let free = pool.free_slots(dest_tier, region);
            if free == 0 {
                continue;
            }
            // Most free slots wins; BTreeSet iteration order settles ties by
            // region id ascending.
            if chosen.map_or(true, |(_, best)| free > best) {
                chosen = Some((region.as_str(), free));
            }
        }
        match chosen {
            Some((region, free)) => {
                *pool
                    .slots
                    .get_mut(dest_tier)
                    .expect("tier present")
                    .get_mut(region)
                    .expect("region present") = free - 1;
                decisions.push((
                    app_id.clone(),
                    HostDecision::Accepted {
                        region: region.to_string(),
                    },
                ));
            }
            None => decisions.push((app_id.clone(), HostDecision::Rejected)),
        }
    }
    Ok(decisions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoopOutcome {
    Acknowledged,
    Timeout,
    IterationLimit,
    /// The solver reported the constrained problem unsatisfiable.
    SolverFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvoidPair {
    pub app_id: String,
    pub tier_id: String,
}

/// One round of propose → check → feed back.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoopIteration {
    pub proposed_moves: Vec<MoveRec>,
    pub region_rejections: Vec<AvoidPair>,
    pub host_rejections: Vec<AvoidPair>,
    pub avoid_added: Vec<AvoidPair>,
}

/// Full record of a co-operation session.
///
/// `final_solution` is the last fully accepted solution; `None` means the
/// loop ended unresolved and callers should fall back to the identity
/// mapping. `placements` maps each accepted moved app to the region the host
/// scheduler placed it in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoopTrace {
    pub iterations: Vec<CoopIteration>,
    pub outcome: CoopOutcome,
    pub final_solution: Option<Solution>,
    pub placements: BTreeMap<String, String>,
    pub final_pool: HostPool,
}

impl CoopTrace {
    pub fn resolved(&self) -> bool {
        self.final_solution.is_some()
    }

    pub fn final_mapping(&self, problem: &Problem) -> Mapping {
        match &self.final_solution {
            Some(solution) => solution.mapping.clone(),
            None => problem.snapshot().identity_mapping(),
        }
    }
}

/// Runs the co-operation loop: solve, pass the moves through the region and
/// host schedulers, turn every rejection into an avoid constraint, and
/// re-solve, until a mapping is fully acknowledged or the iteration limit or
/// shared timeout is reached.
pub fn cooperate(
    problem: &Problem,
    config: &RunConfig,
    policy: &RegionPolicy,
    pool: &HostPool,
) -> Result<CoopTrace, HierarchyError> {
    config.validate()?;
    let start = Instant::now();
    let deadline = Duration::from_secs_f64(config.timeout_secs);
    let mut current = problem.clone();
    let mut iterations = Vec::new();
    let mut outcome = CoopOutcome::IterationLimit;

    for _ in 0..config.max_hierarchy_iterations {
        let remaining = deadline.saturating_sub(start.elapsed());
        if remaining.is_zero() {
            outcome = CoopOutcome::Timeout;
            break;
        }
        let solve_config = RunConfig {
            timeout_secs: remaining.as_secs_f64().max(0.001),
            ..config.clone()
        };
        let solution = match solve(&current, &solve_config) {
            Ok(solution) => solution,
            Err(SolveError::Unsatisfiable { .. }) => {
                outcome = CoopOutcome::SolverFailed;
                break;
            }
            Err(SolveError::Model(e)) => return Err(HierarchyError::Model(e)),
        };

        let mut iteration = CoopIteration {
            proposed_moves: solution.moves.clone(),
            region_rejections: Vec::new(),
            host_rejections: Vec::new(),
            avoid_added: Vec::new(),
        };

        for mv in &solution.moves {
            if !region_check(&mv.app_id, &mv.to_tier, policy)? {
                iteration.region_rejections.push(AvoidPair {
                    app_id: mv.app_id.clone(),
                    tier_id: mv.to_tier.clone(),
                });
            }
        }
        if !iteration.region_rejections.is_empty() {
            for pair in &iteration.region_rejections {
                current = current.add_avoid(&pair.app_id, &pair.tier_id)?;
                iteration.avoid_added.push(pair.clone());
            }
            iterations.push(iteration);
            continue;
        }

        // Region gate passed; try host allocation on a fresh copy of the
        // pool (allocations release on loop restart).
        let mut session_pool = pool.clone();
        let moves: Vec<(String, String)> = solution
            .moves
            .iter()
            .map(|m| (m.app_id.clone(), m.to_tier.clone()))
            .collect();
        let decisions = host_allocate(&moves, policy, &mut session_pool)?;
        let mut placements = BTreeMap::new();
        for (app_id, decision) in &decisions {
            match decision {
                HostDecision::Accepted { region } => {
                    placements.insert(app_id.clone(), region.clone());
                }
                HostDecision::Rejected => {
                    let tier_id = moves
                        .iter()
                        .find(|(a, _)| a == app_id)
                        .map(|(_, t)| t.clone())
                        .expect("decision matches a move");
                    iteration.host_rejections.push(AvoidPair {
                        app_id: app_id.clone(),
                        tier_id,
                    });
                }
            }
        }
        if !iteration.host_rejections.is_empty() {
            for pair in &iteration.host_rejections {
                current = current.add_avoid(&pair.app_id, &pair.tier_id)?;
                iteration.avoid_added.push(pair.clone());
            }
            iterations.push(iteration);
            continue;
        }

        iterations.push(iteration);
        return Ok(CoopTrace {
            iterations,
            outcome: CoopOutcome::Acknowledged,
            final_solution: Some(solution),
            placements,
            final_pool: session_pool,
        });
    }

    Ok(CoopTrace {
        iterations,
        outcome,
        final_solution: None,
        placements: BTreeMap::new(),
        final_pool: pool.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AppRecord, TierSpec};

    fn snapshot_two_tiers() -> Snapshot {
        let tiers = vec![
            TierSpec {
                tier_id: "t1".into(),
                cpu_capacity: 100.0,
                mem_capacity: 100.0,
                task_limit: 100,
                util_target_cpu: 0.7,
                util_target_mem: 0.7,
                util_target_tasks: 0.8,
                supported_slos: [1].into(),
                regions: [("rA".to_string(), 5)].into(),
            },
            TierSpec {
                tier_id: "t2".into(),
                cpu_capacity: 100.0,
                mem_capacity: 100.0,
                task_limit: 100,
                util_target_cpu: 0.7,
                util_target_mem: 0.7,
                util_target_tasks: 0.8,
                supported_slos: [1].into(),
                regions: [("rB".to_string(), 5)].into(),
            },
        ];
        let apps = vec![AppRecord {
            app_id: "a1".into(),
            cpu_p99: 10.0,
            mem_p99: 10.0,
            task_count: 1,
            slo_score: 1,
            criticality_score: 1.0,
            source_region: "rA".into(),
            current_tier: "t1".into(),
        }];
        Snapshot::new(tiers, apps, None, true).unwrap().0
    }

    #[test]
    fn region_check_is_set_intersection() {
        let snap = snapshot_two_tiers();
        let policy = RegionPolicy::derive(&snap, 30.0);
        // a1's source is rA; t1 has rA, t2 only rB.
        assert!(region_check("a1", "t1", &policy).unwrap());
        assert!(!region_check("a1", "t2", &policy).unwrap());
        assert!(region_check("a1", "t3", &policy).is_err());
    }

    #[test]
    fn region_check_matches_bruteforce_on_random_sets() {
        use rand::Rng;
        let snap = snapshot_two_tiers();
        let mut rng = crate::rng::stream(3, "hierarchy/region-check");
        let universe = ["r1", "r2", "r3", "r4", "r5"];
        for _ in 0..100 {
            let acc: BTreeSet<String> = universe
                .iter()
                .filter(|_| rng.gen_bool(0.4))
                .map(|s| s.to_string())
                .chain(std::iter::once("rX".to_string()))
                .collect();
            let tier: BTreeSet<String> = universe
                .iter()
                .filter(|_| rng.gen_bool(0.4))
                .map(|s| s.to_string())
                .collect();
            let policy = RegionPolicy {
                acceptable: [("a1".to_string(), acc.clone())].into(),
                tier_regions: [("t1".to_string(), tier.clone())].into(),
            };
            let expected = acc.intersection(&tier).next().is_some();
            assert_eq!(region_check("a1", "t1", &policy).unwrap(), expected);
        }
    }

    #[test]
    fn host_allocate_decrements_and_rejects_when_full() {
        let snap = snapshot_two_tiers();
        let policy = RegionPolicy::explicit(
            &snap,
            [("a1".to_string(), ["rB".to_string()].into())].into(),
        )
        .unwrap();
        let mut pool = HostPool::with_slots(
            [(
                "t2".to_string(),
                [("rB".to_string(), 1u64)].into_iter().collect(),
            )]
            .into(),
        );
        let moves = vec![("a1".to_string(), "t2".to_string())];
        let decisions = host_allocate(&moves, &policy, &mut pool).unwrap();
        assert_eq!(
            decisions[0].1,
            HostDecision::Accepted {
                region: "rB".to_string()
            }
        );
        assert_eq!(pool.free_slots("t2", "rB"), 0);

        // Second allocation against the drained pool fails and mutates
        // nothing.
        let before = pool.clone();
        let decisions = host_allocate(&moves, &policy, &mut pool).unwrap();
        assert_eq!(decisions[0].1, HostDecision::Rejected);
        assert_eq!(pool, before);
    }

    #[test]
    fn host_allocate_prefers_most_free_then_region_id() {
        let snap = snapshot_two_tiers();
        let policy = RegionPolicy {
            acceptable: [(
                "a1".to_string(),
                ["rA".to_string(), "rB".to_string()].into(),
            )]
            .into(),
            tier_regions: [(
                "t1".to_string(),
                ["rA".to_string(), "rB".to_string()].into(),
            )]
            .into(),
        };
        let _ = snap;
        let mut pool = HostPool::with_slots(
            [(
                "t1".to_string(),
                [("rA".to_string(), 2u64), ("rB".to_string(), 7u64)]
                    .into_iter()
                    .collect(),
            )]
            .into(),
        );
        let moves = vec![("a1".to_string(), "t1".to_string())];
        let decisions = host_allocate(&moves, &policy, &mut pool).unwrap();
        assert_eq!(
            decisions[0].1,
            HostDecision::Accepted {
                region: "rB".to_string()
            }
        );

        // Equal slots: region id ascending wins.
        let mut pool = HostPool::with_slots(
            [(
                "t1".to_string(),
                [("rA".to_string(), 3u64), ("rB".to_string(), 3u64)]
                    .into_iter()
                    .collect(),
            )]
            .into(),
        );
        let decisions = host_allocate(&moves, &policy, &mut pool).unwrap();
        assert_eq!(
            decisions[0].1,
            HostDecision::Accepted {
                region: "rA".to_string()
            }
        );
    }

    #[test]
    fn host_allocate_matches_independent_first_fit_simulation() {
        use rand::Rng;
        let snap = snapshot_two_tiers();
        let mut rng = crate::rng::stream(9, "hierarchy/host-oracle");
        for _ in 0..50 {
            let regions = ["r1", "r2", "r3"];
            let mut slots: BTreeMap<String, u64> = BTreeMap::new();
            for r in regions {
                slots.insert(r.to_string(), rng.gen_range(0..3));
            }
            let napps = rng.gen_range(1..6);
            let mut acceptable = BTreeMap::new();
            let mut moves = Vec::new();
            for i in 0..napps {
                let app = format!("a{i}");
                let acc: BTreeSet<String> = regions
                    .iter()
                    .filter(|_| rng.gen_bool(0.6))
                    .map(|s| s.to_string())
                    .chain(std::iter::once("r1".to_string()))
                    .collect();
                acceptable.insert(app.clone(), acc);
                moves.push((app, "t1".to_string()));
            }
            let policy = RegionPolicy {
                acceptable: acceptable.clone(),
                tier_regions: [(
                    "t1".to_string(),
                    regions.iter().map(|s| s.to_string()).collect(),
                )]
                .into(),
            };
            let _ = &snap;
            let mut pool = HostPool::with_slots([("t1".to_string(), slots.clone())].into());
            let decisions = host_allocate(&moves, &policy, &mut pool).unwrap();

            // Re-simulate the rule independently: apps ascending, pick the
            // acceptable region with most slots (ties by id), decrement.
            let mut sim_slots = slots;
            let mut expected = Vec::new();
            let mut ordered = moves.clone();
            ordered.sort();
            for (app, _) in &ordered {
                let mut best: Option<(String, u64)> = None;
                for (r, &s) in sim_slots.iter() {
                    if s > 0 && acceptable[app].contains(r) {
                        let better = match &best {
                            None => true,
                            Some((_, bs)) => s > *bs,
                        };
                        if better {
                            best = Some((r.clone(), s));
                        }
                    }
                }
                match best {
                    Some((r, s)) => {
                        sim_slots.insert(r.clone(), s - 1);
                        expected.push((app.clone(), HostDecision::Accepted { region: r }));
                    }
                    None => expected.push((app.clone(), HostDecision::Rejected)),
                }
            }
            assert_eq!(decisions, expected);
        }
    }
}
