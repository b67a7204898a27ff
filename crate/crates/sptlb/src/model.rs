//! Domain types for apps, tiers, and cluster snapshots, plus the projected
//! metrics derived from an app-to-tier mapping.
//!
//! A [`Snapshot`] is immutable after construction and safe to share across
//! concurrent solver runs. All resource quantities are non-negative doubles;
//! task counts are integers. Utilization is always relative to each tier's
//! own capacity, never absolute units.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::LatencyModel;

/// An app-to-tier assignment, keyed by app id.
pub type Mapping = BTreeMap<String, String>;

/// The three balanced dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    Cpu,
    Mem,
    Tasks,
}

impl Resource {
    pub const ALL: [Resource; 3] = [Resource::Cpu, Resource::Mem, Resource::Tasks];

    pub fn name(self) -> &'static str {
        match self {
            Resource::Cpu => "cpu",
            Resource::Mem => "mem",
            Resource::Tasks => "tasks",
        }
    }
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One streaming application as captured in a snapshot.
///
/// Resource demands are p99 aggregates; `slo_score` is the app's service
/// class and `criticality_score` its importance relative to other apps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRecord {
    pub app_id: String,
    pub cpu_p99: f64,
    pub mem_p99: f64,
    pub task_count: u64,
    pub slo_score: u8,
    pub criticality_score: f64,
    pub source_region: String,
    pub current_tier: String,
}

impl AppRecord {
    pub fn demand(&self, resource: Resource) -> f64 {
        match resource {
            Resource::Cpu => self.cpu_p99,
            Resource::Mem => self.mem_p99,
            Resource::Tasks => self.task_count as f64,
        }
    }
}

/// One tier: hard capacity limits, soft utilization targets, the SLO classes
/// it supports, and the regions it has hosts in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierSpec {
    pub tier_id: String,
    pub cpu_capacity: f64,
    pub mem_capacity: f64,
    pub task_limit: u64,
    pub util_target_cpu: f64,
    pub util_target_mem: f64,
    pub util_target_tasks: f64,
    pub supported_slos: BTreeSet<u8>,
    /// region id → host slots available in that region.
    pub regions: BTreeMap<String, u64>,
}

impl TierSpec {
    pub fn capacity(&self, resource: Resource) -> f64 {
        match resource {
            Resource::Cpu => self.cpu_capacity,
            Resource::Mem => self.mem_capacity,
            Resource::Tasks => self.task_limit as f64,
        }
    }

    pub fn util_target(&self, resource: Resource) -> f64 {
        match resource {
            Resource::Cpu => self.util_target_cpu,
            Resource::Mem => self.util_target_mem,
            Resource::Tasks => self.util_target_tasks,
        }
    }

    pub fn supports_slo(&self, slo: u8) -> bool {
        self.supported_slos.contains(&slo)
    }
}

/// Per-tier usage and utilization under some mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierMetrics {
    pub tier_id: String,
    pub cpu_used: f64,
    pub mem_used: f64,
    pub tasks_used: u64,
    pub app_count: u64,
    pub cpu_util: f64,
    pub mem_util: f64,
    pub task_util: f64,
}

impl TierMetrics {
    pub fn util(&self, resource: Resource) -> f64 {
        match resource {
            Resource::Cpu => self.cpu_util,
            Resource::Mem => self.mem_util,
            Resource::Tasks => self.task_util,
        }
    }

    pub fn used(&self, resource: Resource) -> f64 {
        match resource {
            Resource::Cpu => self.cpu_used,
            Resource::Mem => self.mem_used,
            Resource::Tasks => self.tasks_used as f64,
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("app {app_id:?}: current_tier {tier_id:?} not present in snapshot")]
    DanglingTier { app_id: String, tier_id: String },
    #[error("{entity} {id:?}: {detail}")]
    InvalidField {
        entity: &'static str,
        id: String,
        detail: String,
    },
    #[error("app {app_id:?}: slo {slo} not supported by tier {tier_id:?}")]
    UnsupportedSlo {
        app_id: String,
        slo: u8,
        tier_id: String,
    },
    #[error("unknown app {0:?}")]
    UnknownApp(String),
    #[error("unknown tier {0:?}")]
    UnknownTier(String),
    #[error("mapping does not cover app {0:?}")]
    MissingApp(String),
    #[error("imbalance of an empty metrics list")]
    EmptyMetrics,
    #[error("latency model: {0}")]
    InvalidLatencyModel(String),
}

/// A validated, immutable view of the cluster at one point in time.
#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    tiers: Vec<TierSpec>,
    apps: Vec<AppRecord>,
    pub latency_model: Option<LatencyModel>,
    #[serde(skip)]
    tier_index: HashMap<String, usize>,
    #[serde(skip)]
    app_index: HashMap<String, usize>,
}

impl PartialEq for Snapshot {
    fn eq(&self, other: &Self) -> bool {
        self.tiers == other.tiers
            && self.apps == other.apps
            && self.latency_model == other.latency_model
    }
}

fn require_finite(
    value: f64,
    entity: &'static str,
    id: &str,
    field: &str,
) -> Result<(), ModelError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidField {
            entity,
            id: id.to_string(),
            detail: format!("{field} must be finite, got {value}"),
        })
    }
}

impl Snapshot {
    /// Validates and indexes the raw parts.
    ///
    /// Apps whose SLO is unsupported by their current tier are accepted with
    /// a warning by default (a balancer exists to fix bad states) and
    /// rejected when `strict` is set. Returned warnings are in app order.
    pub fn new(
        tiers: Vec<TierSpec>,
        apps: Vec<AppRecord>,
        latency_model: Option<LatencyModel>,
        strict: bool,
    ) -> Result<(Self, Vec<String>), ModelError> {
        let mut tier_index = HashMap::with_capacity(tiers.len());
        for (i, tier) in tiers.iter().enumerate() {
            if tier_index.insert(tier.tier_id.clone(), i).is_some() {
                return Err(ModelError::DuplicateId {
                    kind: "tier",
                    id: tier.tier_id.clone(),
                });
            }
            let id = &tier.tier_id;
            let bad = |detail: String| ModelError::InvalidField {
                entity: "tier",
                id: id.clone(),
                detail,
            };
            require_finite(tier.cpu_capacity, "tier", id, "cpu_capacity")?;
            require_finite(tier.mem_capacity, "tier", id, "mem_capacity")?;
            if tier.cpu_capacity <= 0.0 {
                return Err(bad(format!("cpu_capacity must be > 0, got {}", tier.cpu_capacity)));
            }
            if tier.mem_capacity <= 0.0 {
                return Err(bad(format!("mem_capacity must be > 0, got {}", tier.mem_capacity)));
            }
            if tier.task_limit == 0 {
                return Err(bad("task_limit must be > 0".to_string()));
            }
            for (name, target) in [
                ("util_target_cpu", tier.util_target_cpu),
                ("util_target_mem", tier.util_target_mem),
                ("util_target_tasks", tier.util_target_tasks),
            ] {
                require_finite(target, "tier", id, name)?;
                if !(target > 0.0 && target <= 1.0) {
                    return Err(bad(format!("{name} must be in (0, 1], got {target}")));
                }
            }
            if tier.supported_slos.is_empty() {
                return Err(bad("supported_slos must be non-empty".to_string()));
            }
            if tier.regions.is_empty() {
                return Err(bad("regions must be non-empty".to_string()));
            }
        }

        let mut warnings = Vec::new();
        let mut app_index = HashMap::with_capacity(apps.len());
        for (i, app) in apps.iter().enumerate() {
            if app_index.insert(app.app_id.clone(), i).is_some() {
                return Err(ModelError::DuplicateId {
                    kind: "app",
                    id: app.app_id.clone(),
                });
            }
            let id = &app.app_id;
            let bad = |detail: String| ModelError::InvalidField {
                entity: "app",
                id: id.clone(),
                detail,
            };
            require_finite(app.cpu_p99, "app", id, "cpu_p99")?;
            require_finite(app.mem_p99, "app", id, "mem_p99")?;
            require_finite(app.criticality_score, "app", id, "criticality_score")?;
            if app.cpu_p99 < 0.0 {
                return Err(bad(format!("cpu_p99 must be >= 0, got {}", app.cpu_p99)));
            }
            if app.mem_p99 < 0.0 {
                return Err(bad(format!("mem_p99 must be >= 0, got {}", app.mem_p99)));
            }
            if app.task_count == 0 {
                return Err(bad("task_count must be >= 1".to_string()));
            }
            if app.criticality_score < 0.0 {
                return Err(bad(format!(
                    "criticality_score must be >= 0, got {}",
                    app.criticality_score
                )));
            }
            let tier_pos = tier_index.get(&app.current_tier).copied().ok_or_else(|| {
                ModelError::DanglingTier {
                    app_id: app.app_id.clone(),
                    tier_id: app.current_tier.clone(),
                }
            })?;
            if !tiers[tier_pos].supports_slo(app.slo_score) {
                if strict {
                    return Err(ModelError::UnsupportedSlo {
                        app_id: app.app_id.clone(),
                        slo: app.slo_score,
                        tier_id: app.current_tier.clone(),
                    });
                }
                warnings.push(format!(
                    "app {:?}: slo {} not supported by current tier {:?}",
                    app.app_id, app.slo_score, app.current_tier
                ));
            }
        }

        if let Some(model) = &latency_model {
            model.validate().map_err(ModelError::InvalidLatencyModel)?;
        }

        Ok((
            Snapshot {
                tiers,
                apps,
                latency_model,
                tier_index,
                app_index,
            },
            warnings,
        ))
    }

    pub fn tiers(&self) -> &[TierSpec] {
        &self.tiers
    }

    pub fn apps(&self) -> &[AppRecord] {
        &self.apps
    }

    pub fn tier(&self, tier_id: &str) -> Option<&TierSpec> {
        self.tier_index.get(tier_id).map(|&i| &self.tiers[i])
    }

    pub fn app(&self, app_id: &str) -> Option<&AppRecord> {
        self.app_index.get(app_id).map(|&i| &self.apps[i])
    }

    pub fn tier_position(&self, tier_id: &str) -> Option<usize> {
        self.tier_index.get(tier_id).copied()
    }

    pub fn app_position(&self, app_id: &str) -> Option<usize> {
        self.app_index.get(app_id).copied()
    }

    /// The mapping that keeps every app on its current tier.
    pub fn identity_mapping(&self) -> Mapping {
        self.apps
            .iter()
            .map(|a| (a.app_id.clone(), a.current_tier.clone()))
            .collect()
    }

    /// Metrics of the snapshot as captured, i.e. under the identity mapping.
    pub fn initial_metrics(&self) -> Vec<TierMetrics> {
        project_metrics(self, &self.identity_mapping())
            .expect("identity mapping is total by construction")
    }
}

/// Per-tier sums of the assigned apps' demands and the derived utilization
/// fractions. Tiers with no apps report zeros. The mapping must cover exactly
/// the snapshot's apps.
pub fn project_metrics(
    snapshot: &Snapshot,
    mapping: &Mapping,
) -> Result<Vec<TierMetrics>, ModelError> {
    for app_id in mapping.keys() {
        if snapshot.app_position(app_id).is_none() {
            return Err(ModelError::UnknownApp(app_id.clone()));
        }
    }
    let n = snapshot.tiers.len();
    let mut cpu = vec![0.0f64; n];
    let mut mem = vec![0.0f64; n];
    let mut tasks = vec![0u64; n];
    let mut count = vec![0u64; n];
    for app in &snapshot.apps {
        let tier_id = mapping
            .get(&app.app_id)
            .ok_or_else(|| ModelError::MissingApp(app.app_id.clone()))?;
        let t = snapshot
            .tier_position(tier_id)
            .ok_or_else(|| ModelError::UnknownTier(tier_id.clone()))?;
        cpu[t] += app.cpu_p99;
        mem[t] += app.mem_p99;
        tasks[t] += app.task_count;
        count[t] += 1;
    }
    Ok(snapshot
        .tiers
        .iter()
        .enumerate()
        .map(|(t, tier)| TierMetrics {
            tier_id: tier.tier_id.clone(),
            cpu_used: cpu[t],
            mem_used: mem[t],
            tasks_used: tasks[t],
            app_count: count[t],
            cpu_util: cpu[t] / tier.cpu_capacity,
            mem_util: mem[t] / tier.mem_capacity,
            task_util: tasks[t] as f64 / tier.task_limit as f64,
        })
        .collect())
}

/// Spread of capacity-normalized utilization across tiers for one resource:
/// max util minus min util. Zero iff all tiers sit at the same utilization.
pub fn imbalance(metrics: &[TierMetrics], resource: Resource) -> Result<f64, ModelError> {
    if metrics.is_empty() {
        return Err(ModelError::EmptyMetrics);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for m in metrics {
        let u = m.util(resource);
        lo = lo.min(u);
        hi = hi.max(u);
    }
    Ok(hi - lo)
}

/// Reads and validates a snapshot file (see [`crate::io::snapshot`] for the
/// format). Returns the snapshot and any non-fatal validation warnings.
pub fn load_snapshot(
    path: impl AsRef<Path>,
    strict: bool,
) -> Result<(Snapshot, Vec<String>), crate::io::IoError> {
    crate::io::snapshot::load_snapshot(path, strict)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tier(id: &str, cpu: f64, mem: f64, tasks: u64, slos: &[u8]) -> TierSpec {
        TierSpec {
            tier_id: id.to_string(),
            cpu_capacity: cpu,
            mem_capacity: mem,
            task_limit: tasks,
            util_target_cpu: 0.7,
            util_target_mem: 0.7,
            util_target_tasks: 0.8,
            supported_slos: slos.iter().copied().collect(),
            regions: [("r1".to_string(), 10)].into_iter().collect(),
        }
    }

    pub(crate) fn app(id: &str, cpu: f64, mem: f64, tasks: u64, tier: &str) -> AppRecord {
        AppRecord {
            app_id: id.to_string(),
            cpu_p99: cpu,
            mem_p99: mem,
            task_count: tasks,
            slo_score: 1,
            criticality_score: 1.0,
            source_region: "r1".to_string(),
            current_tier: tier.to_string(),
        }
    }

    #[test]
    fn empty_workload_snapshot() {
        let (snap, warnings) =
            Snapshot::new(vec![tier("t1", 100.0, 100.0, 10, &[1])], vec![], None, true).unwrap();
        assert_eq!(snap.tiers().len(), 1);
        assert_eq!(snap.apps().len(), 0);
        assert!(warnings.is_empty());
        let metrics = snap.initial_metrics();
        assert_eq!(metrics[0].app_count, 0);
        assert_eq!(metrics[0].cpu_util, 0.0);
    }

    #[test]
    fn dangling_tier_reference_names_the_tier() {
        let err = Snapshot::new(
            vec![tier("t1", 100.0, 100.0, 10, &[1])],
            vec![app("a1", 1.0, 1.0, 1, "t9")],
            None,
            false,
        )
        .unwrap_err();
        assert!(err.to_string().contains("t9"), "{err}");
    }

    #[test]
    fn unsupported_slo_warns_by_default_and_fails_strict() {
        let tiers = vec![tier("t1", 100.0, 100.0, 10, &[2])];
        let apps = vec![app("a1", 1.0, 1.0, 1, "t1")];
        let (_, warnings) = Snapshot::new(tiers.clone(), apps.clone(), None, false).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(Snapshot::new(tiers, apps, None, true).is_err());
    }

    #[test]
    fn negative_capacity_rejected() {
        let mut t = tier("t1", 100.0, 100.0, 10, &[1]);
        t.cpu_capacity = -5.0;
        let err = Snapshot::new(vec![t], vec![], None, true).unwrap_err();
        assert!(err.to_string().contains("cpu_capacity"), "{err}");
    }

    #[test]
    fn projected_utilization_is_forced_by_sums() {
        let (snap, _) = Snapshot::new(
            vec![tier("t1", 100.0, 100.0, 100, &[1])],
            vec![app("a1", 30.0, 5.0, 3, "t1"), app("a2", 40.0, 5.0, 4, "t1")],
            None,
            true,
        )
        .unwrap();
        let m = snap.initial_metrics();
        assert_eq!(m[0].cpu_used, 70.0);
        assert_eq!(m[0].cpu_util, 0.70);
        assert_eq!(m[0].tasks_used, 7);
        assert_eq!(m[0].app_count, 2);
    }

    #[test]
    fn identity_projection_matches_initial_state_exactly() {
        let (snap, _) = Snapshot::new(
            vec![
                tier("t1", 100.0, 100.0, 100, &[1]),
                tier("t2", 50.0, 80.0, 40, &[1]),
            ],
            vec![
                app("a1", 30.0, 5.5, 3, "t1"),
                app("a2", 0.125, 5.25, 4, "t2"),
                app("a3", 17.3, 2.2, 9, "t1"),
            ],
            None,
            true,
        )
        .unwrap();
        let identity = snap.identity_mapping();
        assert_eq!(project_metrics(&snap, &identity).unwrap(), snap.initial_metrics());
    }

    #[test]
    fn moved_app_shifts_exactly_its_demand() {
        let (snap, _) = Snapshot::new(
            vec![
                tier("t1", 100.0, 100.0, 100, &[1]),
                tier("t2", 100.0, 100.0, 100, &[1]),
            ],
            vec![
                app("a1", 10.0, 4.0, 2, "t1"),
                app("a2", 20.0, 8.0, 3, "t1"),
                app("a3", 5.0, 2.0, 1, "t2"),
                app("a4", 7.5, 3.0, 4, "t2"),
            ],
            None,
            true,
        )
        .unwrap();
        let mut mapping = snap.identity_mapping();
        mapping.insert("a2".to_string(), "t2".to_string());
        let metrics = project_metrics(&snap, &mapping).unwrap();

        // Independent recomputation from scratch.
        let mut exp_cpu = [0.0f64; 2];
        let mut exp_mem = [0.0f64; 2];
        let mut exp_tasks = [0u64; 2];
        for a in snap.apps() {
            let t = if mapping[&a.app_id] == "t1" { 0 } else { 1 };
            exp_cpu[t] += a.cpu_p99;
            exp_mem[t] += a.mem_p99;
            exp_tasks[t] += a.task_count;
        }
        for t in 0..2 {
            assert_eq!(metrics[t].cpu_used, exp_cpu[t]);
            assert_eq!(metrics[t].mem_used, exp_mem[t]);
            assert_eq!(metrics[t].tasks_used, exp_tasks[t]);
        }
    }

    #[test]
    fn mapping_must_cover_apps() {
        let (snap, _) = Snapshot::new(
            vec![tier("t1", 100.0, 100.0, 10, &[1])],
            vec![app("a1", 1.0, 1.0, 1, "t1")],
            None,
            true,
        )
        .unwrap();
        let empty = Mapping::new();
        assert!(matches!(
            project_metrics(&snap, &empty),
            Err(ModelError::MissingApp(_))
        ));
        let mut bad = snap.identity_mapping();
        bad.insert("ghost".to_string(), "t1".to_string());
        assert!(matches!(
            project_metrics(&snap, &bad),
            Err(ModelError::UnknownApp(_))
        ));
    }

    fn metrics_with_utils(utils: &[f64]) -> Vec<TierMetrics> {
        utils
            .iter()
            .enumerate()
            .map(|(i, &u)| TierMetrics {
                tier_id: format!("t{i}"),
                cpu_used: u * 100.0,
                mem_used: 0.0,
                tasks_used: 0,
                app_count: 0,
                cpu_util: u,
                mem_util: 0.0,
                task_util: 0.0,
            })
            .collect()
    }

    #[test]
    fn imbalance_examples() {
        assert_eq!(
            imbalance(&metrics_with_utils(&[0.4, 0.4, 0.4]), Resource::Cpu).unwrap(),
            0.0
        );
        let v = imbalance(&metrics_with_utils(&[0.9, 0.5, 0.7]), Resource::Cpu).unwrap();
        assert!((v - 0.4).abs() < 1e-12);
        assert!(matches!(
            imbalance(&[], Resource::Cpu),
            Err(ModelError::EmptyMetrics)
        ));
    }

    #[test]
    fn imbalance_matches_bruteforce_on_random_metrics() {
        use rand::Rng;
        let mut rng = crate::rng::stream(11, "model/imbalance");
        for _ in 0..50 {
            let utils: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.5)).collect();
            let m = metrics_with_utils(&utils);
            let got = imbalance(&m, Resource::Cpu).unwrap();
            let max = utils.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = utils.iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(got, max - min);
        }
    }
}
