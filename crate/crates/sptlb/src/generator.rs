//! Deterministic synthetic workload generation.
//!
//! Generated snapshots always validate strictly: every app sits on a tier
//! that supports its SLO and fits within capacity. A hot tier can be skewed
//! high to reproduce the one-overloaded-tier shape, and the demand profile
//! can anti-correlate resources (cpu-heavy apps are mem-light and vice
//! versa), which is the regime where single-objective greedy balancing
//! breaks down.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{LatencyDist, LatencyModel};
use crate::model::{AppRecord, ModelError, Snapshot, TierSpec};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandProfile {
    /// Independent uniform draws per resource.
    Uniform,
    /// Three app archetypes, each heavy in one resource and light in the
    /// other two.
    AntiCorrelated,
}

impl fmt::Display for DemandProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemandProfile::Uniform => "uniform",
            DemandProfile::AntiCorrelated => "anti_correlated",
        })
    }
}

impl FromStr for DemandProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(DemandProfile::Uniform),
            "anti_correlated" => Ok(DemandProfile::AntiCorrelated),
            _ => Err(format!("unknown profile {s:?} (expected uniform or anti_correlated)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLayout {
    /// Tiers split into two region groups (mirroring the SLO split), so
    /// cross-group moves are cross-region.
    Split,
    /// Every tier has machines in every region.
    Shared,
}

impl fmt::Display for RegionLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionLayout::Split => "split",
            RegionLayout::Shared => "shared",
        })
    }
}

impl FromStr for RegionLayout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "split" => Ok(RegionLayout::Split),
            "shared" => Ok(RegionLayout::Shared),
            _ => Err(format!("unknown region layout {s:?} (expected split or shared)")),
        }
    }
}

/// Everything the generator needs. Ranges are inclusive-exclusive for reals
/// and inclusive for integers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub tier_count: usize,
    pub app_count: usize,
    pub region_count: usize,
    /// Tier (by position) whose initial utilization is skewed high.
    pub hot_tier_index: Option<usize>,
    /// Placement-weight multiplier for the hot tier.
    pub hot_skew: f64,
    /// Fill level the hot tier is driven toward, as a fraction of capacity.
    pub hot_fill: f64,
    /// Fill level the remaining tiers are driven toward.
    pub base_fill: f64,
    pub demand_profile: DemandProfile,
    pub region_layout: RegionLayout,
    /// slo class → supported tier positions. `None` selects the default
    /// tiered layout (low SLO classes on the front tiers, the highest class
    /// on the back tiers, class 3 everywhere).
    pub slo_layout: Option<BTreeMap<u8, BTreeSet<usize>>>,
    pub seed: u64,
    pub cpu_capacity_range: (f64, f64),
    pub mem_capacity_range: (f64, f64),
    pub task_limit_range: (u64, u64),
    pub cpu_demand_range: (f64, f64),
    pub mem_demand_range: (f64, f64),
    pub task_demand_range: (u64, u64),
    pub criticality_range: (f64, f64),
    pub util_target_cpu: f64,
    pub util_target_mem: f64,
    pub util_target_tasks: f64,
    pub host_slots_range: (u64, u64),
    pub with_latency_model: bool,
    pub intra_region_mean_ms: (f64, f64),
    pub cross_region_mean_ms: (f64, f64),
    pub latency_stddev_frac: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            tier_count: 5,
            app_count: 100,
            region_count: 4,
            hot_tier_index: None,
            hot_skew: 6.0,
            hot_fill: 0.92,
            base_fill: 0.55,
            demand_profile: DemandProfile::Uniform,
            region_layout: RegionLayout::Split,
            slo_layout: None,
            seed: 0,
            cpu_capacity_range: (400.0, 600.0),
            mem_capacity_range: (400.0, 600.0),
            task_limit_range: (200, 300),
            cpu_demand_range: (2.0, 30.0),
            mem_demand_range: (2.0, 30.0),
            task_demand_range: (1, 12),
            criticality_range: (0.0, 10.0),
            util_target_cpu: 0.7,
            util_target_mem: 0.7,
            util_target_tasks: 0.8,
            host_slots_range: (40, 80),
            with_latency_model: true,
            intra_region_mean_ms: (1.0, 3.0),
            cross_region_mean_ms: (40.0, 60.0),
            latency_stddev_frac: 0.1,
        }
    }
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("impossible spec: app {app_index} cannot be placed — {detail}")]
    Impossible { app_index: usize, detail: String },
    #[error(transparent)]
    Validation(#[from] ModelError),
}

impl GeneratorSpec {
    /// Front tiers carry the low SLO classes, back tiers the highest class,
    /// class 3 runs everywhere. For five tiers this is the classic
    /// SLO1/2 → t1–t3, SLO3 → t1–t5, SLO4 → t4/t5 table.
    pub fn default_slo_layout(tier_count: usize) -> BTreeMap<u8, BTreeSet<usize>> {
        let split = ((3 * tier_count + 4) / 5).clamp(1, tier_count);
        let front: BTreeSet<usize> = (0..split).collect();
        let all: BTreeSet<usize> = (0..tier_count).collect();
        let back: BTreeSet<usize> = (split.min(tier_count - 1)..tier_count).collect();
        [(1u8, front.clone()), (2, front), (3, all), (4, back)].into()
    }

    fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |msg: String| Err(GeneratorError::InvalidSpec(msg));
        if self.tier_count == 0 {
            return bad("tier_count must be >= 1".into());
        }
        if self.region_count == 0 {
            return bad("region_count must be >= 1".into());
        }
        if let Some(hot) = self.hot_tier_index {
            if hot >= self.tier_count {
                return bad(format!("hot_tier_index {hot} out of range"));
            }
        }
        for (name, (lo, hi)) in [
            ("cpu_capacity_range", self.cpu_capacity_range),
            ("mem_capacity_range", self.mem_capacity_range),
            ("cpu_demand_range", self.cpu_demand_range),
            ("mem_demand_range", self.mem_demand_range),
            ("criticality_range", self.criticality_range),
            ("intra_region_mean_ms", self.intra_region_mean_ms),
            ("cross_region_mean_ms", self.cross_region_mean_ms),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi < lo {
                return bad(format!("{name} must satisfy 0 <= lo <= hi, got ({lo}, {hi})"));
            }
        }
        for (name, (lo, hi)) in [
            ("task_limit_range", self.task_limit_range),
            ("task_demand_range", self.task_demand_range),
            ("host_slots_range", self.host_slots_range),
        ] {
            if hi < lo {
                return bad(format!("{name} must satisfy lo <= hi, got ({lo}, {hi})"));
            }
        }
        if self.task_limit_range.0 == 0 {
            return bad("task_limit_range lower bound must be >= 1".into());
        }
        if self.task_demand_range.0 == 0 {
            return bad("task_demand_range lower bound must be >= 1".into());
        }
        for (name, v) in [
            ("hot_fill", self.hot_fill),
            ("base_fill", self.base_fill),
            ("util_target_cpu", self.util_target_cpu),
            ("util_target_mem", self.util_target_mem),
            ("util_target_tasks", self.util_target_tasks),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} must be in (0, 1], got {v}"));
            }
        }
        if let Some(layout) = &self.slo_layout {
            if layout.is_empty() {
                return bad("slo_layout must be non-empty".into());
            }
            for (slo, tiers) in layout {
                if tiers.is_empty() {
                    return bad(format!("slo_layout: class {slo} has no tiers"));
                }
                if let Some(&bad_tier) = tiers.iter().find(|&&t| t >= self.tier_count) {
                    return bad(format!("slo_layout: class {slo} names tier index {bad_tier}, have {}", self.tier_count));
                }
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.gen_range(range.0..range.1)
    }
}

fn uniform_u64(rng: &mut ChaCha8Rng, range: (u64, u64)) -> u64 {
    rng.gen_range(range.0..=range.1)
}

/// Heavy draw: upper 35% of the range. Light draw: lower 12%.
fn heavy(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    let lo = range.0 + 0.65 * (range.1 - range.0);
    uniform(rng, (lo, range.1))
}

fn light(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    let hi = range.0 + 0.12 * (range.1 - range.0);
    uniform(rng, (range.0, hi.max(range.0)))
}

fn heavy_u64(rng: &mut ChaCha8Rng, range: (u64, u64)) -> u64 {
    let lo = range.0 + (65 * (range.1 - range.0)) / 100;
    uniform_u64(rng, (lo.max(range.0), range.1))
}

fn light_u64(rng: &mut ChaCha8Rng, range: (u64, u64)) -> u64 {
    let hi = range.0 + (12 * (range.1 - range.0)) / 100;
    uniform_u64(rng, (range.0, hi.max(range.0)))
}

struct Demand {
    cpu: f64,
    mem: f64,
    tasks: u64,
}

fn draw_demand(spec: &GeneratorSpec, rng: &mut ChaCha8Rng, app_index: usize) -> Demand {
    match spec.demand_profile {
        DemandProfile::Uniform => Demand {
            cpu: uniform(rng, spec.cpu_demand_range),
            mem: uniform(rng, spec.mem_demand_range),
            tasks: uniform_u64(rng, spec.task_demand_range),
        },
        DemandProfile::AntiCorrelated => match app_index % 3 {
            0 => Demand {
                cpu: heavy(rng, spec.cpu_demand_range),
                mem: light(rng, spec.mem_demand_range),
                tasks: light_u64(rng, spec.task_demand_range),
            },
            1 => Demand {
                cpu: light(rng, spec.cpu_demand_range),
                mem: heavy(rng, spec.mem_demand_range),
                tasks: light_u64(rng, spec.task_demand_range),
            },
            _ => Demand {
                cpu: light(rng, spec.cpu_demand_range),
                mem: light(rng, spec.mem_demand_range),
                tasks: heavy_u64(rng, spec.task_demand_range),
            },
        },
    }
}

/// Builds a snapshot deterministically from the spec. The same spec always
/// yields the same snapshot, byte for byte once serialized.
pub fn generate(spec: &GeneratorSpec) -> Result<Snapshot, GeneratorError> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, "generate");

    let regions: Vec<String> = (1..=spec.region_count).map(|i| format!("r{i}")).collect();
    let slo_layout = spec
        .slo_layout
        .clone()
        .unwrap_or_else(|| GeneratorSpec::default_slo_layout(spec.tier_count));
    let split = ((3 * spec.tier_count + 4) / 5).clamp(1, spec.tier_count);
    let front_regions: Vec<&String> = regions.iter().take(regions.len().div_ceil(2)).collect();
    let back_regions: Vec<&String> = regions.iter().skip(regions.len().div_ceil(2)).collect();

    let mut tiers = Vec::with_capacity(spec.tier_count);
    for t in 0..spec.tier_count {
        let tier_regions: Vec<&String> = match spec.region_layout {
            RegionLayout::Shared => regions.iter().collect(),
            RegionLayout::Split => {
                if back_regions.is_empty() {
                    regions.iter().collect()
                } else if t < split {
                    front_regions.clone()
                } else {
                    back_regions.clone()
                }
            }
        };
        let supported_slos: BTreeSet<u8> = slo_layout
            .iter()
            .filter(|(_, tiers)| tiers.contains(&t))
            .map(|(&slo, _)| slo)
            .collect();
        if supported_slos.is_empty() {
            return Err(GeneratorError::InvalidSpec(format!(
                "tier index {t} supports no SLO class under the layout"
            )));
        }
        let mut region_slots = BTreeMap::new();
        for region in tier_regions {
            region_slots.insert(region.clone(), uniform_u64(&mut rng, spec.host_slots_range));
        }
        tiers.push(TierSpec {
            tier_id: format!("t{}", t + 1),
            cpu_capacity: uniform(&mut rng, spec.cpu_capacity_range),
            mem_capacity: uniform(&mut rng, spec.mem_capacity_range),
            task_limit: uniform_u64(&mut rng, spec.task_limit_range),
            util_target_cpu: spec.util_target_cpu,
            util_target_mem: spec.util_target_mem,
            util_target_tasks: spec.util_target_tasks,
            supported_slos,
            regions: region_slots,
        });
    }

    let latency_model = if spec.with_latency_model {
        let mut model = LatencyModel::default();
        let mut diag_means = Vec::with_capacity(regions.len());
        for region in &regions {
            let mean = uniform(&mut rng, spec.intra_region_mean_ms);
            diag_means.push(mean);
            model.insert(
                region,
                region,
                LatencyDist {
                    mean_ms: mean,
                    stddev_ms: mean * spec.latency_stddev_frac,
                },
            );
        }
        let max_diag = diag_means.iter().cloned().fold(0.0, f64::max);
        for i in 0..regions.len() {
            for j in (i + 1)..regions.len() {
                // Cross-region latency never undercuts the slowest
                // intra-region pair.
                let mean = uniform(&mut rng, spec.cross_region_mean_ms).max(max_diag);
                model.insert(
                    &regions[i],
                    &regions[j],
                    LatencyDist {
                        mean_ms: mean,
                        stddev_ms: mean * spec.latency_stddev_frac,
                    },
                );
            }
        }
        Some(model)
    } else {
        None
    };

    let slo_classes: Vec<u8> = slo_layout.keys().copied().collect();
    let id_width = spec.app_count.to_string().len();
    let mut cpu_used = vec![0.0f64; spec.tier_count];
    let mut mem_used = vec![0.0f64; spec.tier_count];
    let mut tasks_used = vec![0u64; spec.tier_count];
    let mut apps = Vec::with_capacity(spec.app_count);

    for i in 0..spec.app_count {
        let slo = slo_classes[rng.gen_range(0..slo_classes.len())];
        let candidates: Vec<usize> = slo_layout[&slo].iter().copied().collect();
        let mut placed = None;
        let mut demand = draw_demand(spec, &mut rng, i);
        for _attempt in 0..32 {
            let fits = |t: usize, fill: f64| {
                cpu_used[t] + demand.cpu <= fill * tiers[t].cpu_capacity
                    && mem_used[t] + demand.mem <= fill * tiers[t].mem_capacity
                    && (tasks_used[t] + demand.tasks) as f64 <= fill * tiers[t].task_limit as f64
            };
            let fill_of = |t: usize| {
                if spec.hot_tier_index == Some(t) {
                    spec.hot_fill
                } else {
                    spec.base_fill
                }
            };
            let weight_of = |t: usize| {
                if spec.hot_tier_index == Some(t) {
                    spec.hot_skew
                } else {
                    1.0
                }
            };
            // Prefer tiers under their fill level; fall back to anything
            // still within hard capacity.
            let mut eligible: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&t| fits(t, fill_of(t)))
                .collect();
            if eligible.is_empty() {
                eligible = candidates.iter().copied().filter(|&t| fits(t, 1.0)).collect();
            }
            if eligible.is_empty() {
                demand = draw_demand(spec, &mut rng, i);
                continue;
            }
            let total: f64 = eligible.iter().map(|&t| weight_of(t)).sum();
            let mut x = rng.gen_range(0.0..total);
            let mut chosen = eligible[eligible.len() - 1];
            for &t in &eligible {
                x -= weight_of(t);
                if x <= 0.0 {
                    chosen = t;
                    break;
                }
            }
            placed = Some(chosen);
            break;
        }
        let tier_pos = placed.ok_or_else(|| GeneratorError::Impossible {
            app_index: i,
            detail: format!(
                "no tier supporting slo {slo} has capacity left after 32 demand redraws"
            ),
        })?;
        cpu_used[tier_pos] += demand.cpu;
        mem_used[tier_pos] += demand.mem;
        tasks_used[tier_pos] += demand.tasks;
        let tier = &tiers[tier_pos];
        let tier_region_list: Vec<&String> = tier.regions.keys().collect();
        let source_region = tier_region_list[rng.gen_range(0..tier_region_list.len())].clone();
        apps.push(AppRecord {
            app_id: format!("a{:0width$}", i + 1, width = id_width),
            cpu_p99: demand.cpu,
            mem_p99: demand.mem,
            task_count: demand.tasks,
            slo_score: slo,
            criticality_score: uniform(&mut rng, spec.criticality_range),
            source_region,
            current_tier: tier.tier_id.clone(),
        });
    }

    let (snapshot, warnings) = Snapshot::new(tiers, apps, latency_model, true)?;
    debug_assert!(warnings.is_empty());
    Ok(snapshot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_workload_is_valid() {
        let spec = GeneratorSpec {
            app_count: 0,
            ..GeneratorSpec::default()
        };
        let snapshot = generate(&spec).unwrap();
        assert_eq!(snapshot.apps().len(), 0);
        assert_eq!(snapshot.tiers().len(), 5);
    }

    #[test]
    fn default_layout_matches_five_tier_table() {
        let layout = GeneratorSpec::default_slo_layout(5);
        assert_eq!(layout[&1], (0..3).collect());
        assert_eq!(layout[&2], (0..3).collect());
        assert_eq!(layout[&3], (0..5).collect());
        assert_eq!(layout[&4], (3..5).collect());
        // Degenerate tier counts still give every class at least one tier.
        for t in 1..=8 {
            for set in GeneratorSpec::default_slo_layout(t).values() {
                assert!(!set.is_empty());
                assert!(set.iter().all(|&i| i < t));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GeneratorSpec {
            app_count: 60,
            hot_tier_index: Some(2),
            ..GeneratorSpec::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hot_tier_ends_up_hottest() {
        let spec = GeneratorSpec {
            app_count: 120,
            hot_tier_index: Some(2),
            seed: 5,
            ..GeneratorSpec::default()
        };
        let snapshot = generate(&spec).unwrap();
        let metrics = snapshot.initial_metrics();
        let hot = &metrics[2];
        for (i, m) in metrics.iter().enumerate() {
            if i != 2 {
                assert!(
                    hot.cpu_util > m.cpu_util,
                    "hot tier {} vs t{} {}",
                    hot.cpu_util,
                    i + 1,
                    m.cpu_util
                );
            }
        }
        assert!(hot.cpu_util > 0.8, "hot cpu util {}", hot.cpu_util);
    }

    #[test]
    fn generated_snapshots_fit_capacity_and_slos() {
        for seed in 0..10 {
            let spec = GeneratorSpec {
                app_count: 80,
                tier_count: 4,
                seed,
                demand_profile: DemandProfile::AntiCorrelated,
                ..GeneratorSpec::default()
            };
            let snapshot = generate(&spec).unwrap();
            for (m, tier) in snapshot.initial_metrics().iter().zip(snapshot.tiers()) {
                assert!(m.cpu_used <= tier.cpu_capacity);
                assert!(m.mem_used <= tier.mem_capacity);
                assert!(m.tasks_used <= tier.task_limit);
            }
            for app in snapshot.apps() {
                assert!(snapshot.tier(&app.current_tier).unwrap().supports_slo(app.slo_score));
            }
        }
    }

    #[test]
    fn cross_region_latency_dominates_intra() {
        let snapshot = generate(&GeneratorSpec::default()).unwrap();
        let model = snapshot.latency_model.as_ref().unwrap();
        let mut max_diag: f64 = 0.0;
        let mut min_cross = f64::INFINITY;
        for (a, row) in &model.pairs {
            for (b, dist) in row {
                if a == b {
                    max_diag = max_diag.max(dist.mean_ms);
                } else {
                    min_cross = min_cross.min(dist.mean_ms);
                }
            }
        }
        assert!(max_diag <= min_cross);
    }
}
