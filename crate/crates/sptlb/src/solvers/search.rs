//! Index-based search state shared by the solvers.
//!
//! Mappings are held as `Vec<u32>` (tier position per app position) with
//! per-tier usage sums maintained alongside, so candidate single-app
//! relocations evaluate in O(tiers) without allocation. Accepted moves are
//! followed by a full resync of the sums, which keeps float drift from
//! accumulating across iterations.

use crate::model::Resource;
use crate::problem::{Problem, ScoreVector};

pub(crate) struct Workspace<'p> {
    pub problem: &'p Problem,
    pub napps: usize,
    pub ntiers: usize,
    pub budget: usize,
    pub app_cpu: Vec<f64>,
    pub app_mem: Vec<f64>,
    pub app_tasks: Vec<u64>,
    /// Criticality contribution when moved: the score itself above the
    /// high-criticality threshold, zero otherwise.
    pub app_crit: Vec<f64>,
    /// Tier position of each app's current tier.
    pub current: Vec<u32>,
    pub cpu_cap: Vec<f64>,
    pub mem_cap: Vec<f64>,
    pub task_cap: Vec<u64>,
    pub inv_cpu_cap: Vec<f64>,
    pub inv_mem_cap: Vec<f64>,
    pub inv_task_cap: Vec<f64>,
    pub cpu_target: Vec<f64>,
    pub mem_target: Vec<f64>,
    pub task_target: Vec<f64>,
}

impl<'p> Workspace<'p> {
    pub fn new(problem: &'p Problem) -> Self {
        let snapshot = problem.snapshot();
        let apps = snapshot.apps();
        let tiers = snapshot.tiers();
        let threshold = problem.criticality_high_threshold;
        Workspace {
            problem,
            napps: apps.len(),
            ntiers: tiers.len(),
            budget: problem.move_budget,
            app_cpu: apps.iter().map(|a| a.cpu_p99).collect(),
            app_mem: apps.iter().map(|a| a.mem_p99).collect(),
            app_tasks: apps.iter().map(|a| a.task_count).collect(),
            app_crit: apps
                .iter()
                .map(|a| {
                    if a.criticality_score > threshold {
                        a.criticality_score
                    } else {
                        0.0
                    }
                })
                .collect(),
            current: apps
                .iter()
                .map(|a| {
                    snapshot
                        .tier_position(&a.current_tier)
                        .expect("validated at snapshot construction") as u32
                })
                .collect(),
            cpu_cap: tiers.iter().map(|t| t.cpu_capacity).collect(),
            mem_cap: tiers.iter().map(|t| t.mem_capacity).collect(),
            task_cap: tiers.iter().map(|t| t.task_limit).collect(),
            inv_cpu_cap: tiers.iter().map(|t| 1.0 / t.cpu_capacity).collect(),
            inv_mem_cap: tiers.iter().map(|t| 1.0 / t.mem_capacity).collect(),
            inv_task_cap: tiers.iter().map(|t| 1.0 / t.task_limit as f64).collect(),
            cpu_target: tiers.iter().map(|t| t.util_target_cpu).collect(),
            mem_target: tiers.iter().map(|t| t.util_target_mem).collect(),
            task_target: tiers.iter().map(|t| t.util_target_tasks).collect(),
        }
    }

    /// Whether the app may sit on the tier at all: the pair is not avoided
    /// and, when it would be a move, the tier transition rule holds. The
    /// transition predicate is evaluated from the region sets on every call —
    /// the region-aware variant pays for its extra constraint inside the
    /// search loop, like a constraint solver would.
    pub fn placement_allowed(&self, app: usize, tier: usize) -> bool {
        if self.problem.avoided_at(app, tier) {
            return false;
        }
        let cur = self.current[app] as usize;
        tier == cur || self.problem.transition_allowed_at(cur, tier)
    }

    /// Same, with the avoid check optionally lifted (greedy ablation mode).
    pub fn placement_allowed_raw(&self, app: usize, tier: usize, ignore_avoid: bool) -> bool {
        if !ignore_avoid && self.problem.avoided_at(app, tier) {
            return false;
        }
        let cur = self.current[app] as usize;
        tier == cur || self.problem.transition_allowed_at(cur, tier)
    }

    pub fn identity_state(&self) -> State {
        self.state_of(self.current.clone())
    }

    pub fn state_of(&self, assign: Vec<u32>) -> State {
        let mut state = State {
            assign,
            cpu_used: vec![0.0; self.ntiers],
            mem_used: vec![0.0; self.ntiers],
            tasks_used: vec![0; self.ntiers],
            moved: 0,
            move_cost: 0,
            crit_cost: 0.0,
            avoid_hits: 0,
        };
        state.resync(self);
        state
    }

    pub fn app_size(&self, app: usize, objective: Resource) -> f64 {
        match objective {
            Resource::Cpu => self.app_cpu[app],
            Resource::Mem => self.app_mem[app],
            Resource::Tasks => self.app_tasks[app] as f64,
        }
    }
}

/// What a candidate relocation would look like.
pub(crate) struct CandidateEval {
    pub score: ScoreVector,
    /// All tiers within cpu/mem capacity and task limit.
    pub caps_ok: bool,
    pub new_moved: usize,
}

pub(crate) struct State {
    pub assign: Vec<u32>,
    pub cpu_used: Vec<f64>,
    pub mem_used: Vec<f64>,
    pub tasks_used: Vec<u64>,
    pub moved: usize,
    pub move_cost: u64,
    pub crit_cost: f64,
    pub avoid_hits: usize,
}

impl State {
    /// Recomputes sums and move bookkeeping from scratch, in app order (the
    /// same order `project_metrics` uses, so the views agree bit for bit).
    pub fn resync(&mut self, ws: &Workspace) {
        self.cpu_used.iter_mut().for_each(|v| *v = 0.0);
        self.mem_used.iter_mut().for_each(|v| *v = 0.0);
        self.tasks_used.iter_mut().for_each(|v| *v = 0);
        self.moved = 0;
        self.move_cost = 0;
        self.crit_cost = 0.0;
        self.avoid_hits = 0;
        for app in 0..ws.napps {
            let t = self.assign[app] as usize;
            self.cpu_used[t] += ws.app_cpu[app];
            self.mem_used[t] += ws.app_mem[app];
            self.tasks_used[t] += ws.app_tasks[app];
            if self.assign[app] != ws.current[app] {
                self.moved += 1;
                self.move_cost += ws.app_tasks[app];
                self.crit_cost += ws.app_crit[app];
            }
            if ws.problem.avoided_at(app, t) {
                self.avoid_hits += 1;
            }
        }
    }

    pub fn apply(&mut self, ws: &Workspace, app: usize, to: usize) {
        let from = self.assign[app] as usize;
        debug_assert_ne!(from, to);
        self.cpu_used[from] -= ws.app_cpu[app];
        self.mem_used[from] -= ws.app_mem[app];
        self.tasks_used[from] -= ws.app_tasks[app];
        self.cpu_used[to] += ws.app_cpu[app];
        self.mem_used[to] += ws.app_mem[app];
        self.tasks_used[to] += ws.app_tasks[app];
        let was_moved = self.assign[app] != ws.current[app];
        let is_moved = to as u32 != ws.current[app];
        match (was_moved, is_moved) {
            (false, true) => {
                self.moved += 1;
                self.move_cost += ws.app_tasks[app];
                self.crit_cost += ws.app_crit[app];
            }
            (true, false) => {
                self.moved -= 1;
                self.move_cost -= ws.app_tasks[app];
                self.crit_cost -= ws.app_crit[app];
            }
            _ => {}
        }
        if ws.problem.avoided_at(app, from) {
            self.avoid_hits -= 1;
        }
        if ws.problem.avoided_at(app, to) {
            self.avoid_hits += 1;
        }
        self.assign[app] = to as u32;
    }

    fn moved_count_after(&self, ws: &Workspace, app: usize, to: usize) -> usize {
        let was_moved = self.assign[app] != ws.current[app];
        let is_moved = to as u32 != ws.current[app];
        match (was_moved, is_moved) {
            (false, true) => self.moved + 1,
            (true, false) => self.moved - 1,
            _ => self.moved,
        }
    }

    /// Scores the current assignment. O(tiers).
    pub fn score(&self, ws: &Workspace) -> ScoreVector {
        self.score_shifted(ws, usize::MAX, usize::MAX).score
    }

    /// Scores the assignment as if `app` were relocated to `to`, without
    /// mutating the state. O(tiers), allocation free.
    pub fn eval_move(&self, ws: &Workspace, app: usize, to: usize) -> CandidateEval {
        debug_assert_ne!(self.assign[app] as usize, to);
        let mut eval = self.score_shifted(ws, app, to);
        eval.new_moved = self.moved_count_after(ws, app, to);
        let d_cost = ws.app_tasks[app];
        let d_crit = ws.app_crit[app];
        let was_moved = self.assign[app] != ws.current[app];
        let is_moved = to as u32 != ws.current[app];
        let (mc, cc) = match (was_moved, is_moved) {
            (false, true) => (self.move_cost + d_cost, self.crit_cost + d_crit),
            (true, false) => (self.move_cost - d_cost, self.crit_cost - d_crit),
            _ => (self.move_cost, self.crit_cost),
        };
        eval.score.movement_cost = mc;
        eval.score.critical_moves = cc.max(0.0);
        eval
    }

    /// Walks all tiers once, substituting the usage of the two tiers touched
    /// by an (optional) hypothetical relocation of `app` to `to`.
    fn score_shifted(&self, ws: &Workspace, app: usize, to: usize) -> CandidateEval {
        let from = if app == usize::MAX {
            usize::MAX
        } else {
            self.assign[app] as usize
        };
        let mut over = 0.0f64;
        let mut caps_ok = true;
        let (mut cpu_lo, mut cpu_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut mem_lo, mut mem_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut task_lo, mut task_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in 0..ws.ntiers {
            let mut cpu = self.cpu_used[t];
            let mut mem = self.mem_used[t];
            let mut tasks = self.tasks_used[t] as f64;
            if t == to {
                cpu += ws.app_cpu[app];
                mem += ws.app_mem[app];
                tasks += ws.app_tasks[app] as f64;
            } else if t == from {
                cpu -= ws.app_cpu[app];
                mem -= ws.app_mem[app];
                tasks -= ws.app_tasks[app] as f64;
            }
            caps_ok = caps_ok
                && cpu <= ws.cpu_cap[t]
                && mem <= ws.mem_cap[t]
                && tasks <= ws.task_cap[t] as f64;
            let cpu_util = cpu * ws.inv_cpu_cap[t];
            let mem_util = mem * ws.inv_mem_cap[t];
            let task_util = tasks * ws.inv_task_cap[t];
            over += (cpu_util - ws.cpu_target[t]).max(0.0)
                + (mem_util - ws.mem_target[t]).max(0.0)
                + (task_util - ws.task_target[t]).max(0.0);
            cpu_lo = cpu_lo.min(cpu_util);
            cpu_hi = cpu_hi.max(cpu_util);
            mem_lo = mem_lo.min(mem_util);
            mem_hi = mem_hi.max(mem_util);
            task_lo = task_lo.min(task_util);
            task_hi = task_hi.max(task_util);
        }
        let (resource_imbalance, task_imbalance) = if ws.ntiers == 0 {
            (0.0, 0.0)
        } else {
            ((cpu_hi - cpu_lo) + (mem_hi - mem_lo), task_hi - task_lo)
        };
        CandidateEval {
            score: ScoreVector {
                over_target: over,
                resource_imbalance,
                task_imbalance,
                movement_cost: self.move_cost,
                critical_moves: self.crit_cost,
            },
            caps_ok,
            new_moved: self.moved,
        }
    }

    /// Hard-constraint violation magnitude of the current assignment:
    /// capacity overages as fractions of capacity plus one unit per app
    /// sitting on an avoided pair. Zero iff C1/C2/C4 hold (the movers keep
    /// C3 and the transition rule by construction).
    pub fn magnitude(&self, ws: &Workspace) -> f64 {
        self.magnitude_shifted(ws, usize::MAX, usize::MAX)
    }

    /// Magnitude as if `app` were relocated to `to`, without mutating.
    pub fn magnitude_with(&self, ws: &Workspace, app: usize, to: usize) -> f64 {
        self.magnitude_shifted(ws, app, to)
    }

    fn magnitude_shifted(&self, ws: &Workspace, app: usize, to: usize) -> f64 {
        let from = if app == usize::MAX {
            usize::MAX
        } else {
            self.assign[app] as usize
        };
        let mut total = 0.0;
        for t in 0..ws.ntiers {
            let mut cpu = self.cpu_used[t];
            let mut mem = self.mem_used[t];
            let mut tasks = self.tasks_used[t] as f64;
            if t == to {
                cpu += ws.app_cpu[app];
                mem += ws.app_mem[app];
                tasks += ws.app_tasks[app] as f64;
            } else if t == from {
                cpu -= ws.app_cpu[app];
                mem -= ws.app_mem[app];
                tasks -= ws.app_tasks[app] as f64;
            }
            total += (cpu - ws.cpu_cap[t]).max(0.0) * ws.inv_cpu_cap[t]
                + (mem - ws.mem_cap[t]).max(0.0) * ws.inv_mem_cap[t]
                + (tasks - ws.task_cap[t] as f64).max(0.0) * ws.inv_task_cap[t];
        }
        let mut hits = self.avoid_hits;
        if app != usize::MAX {
            if ws.problem.avoided_at(app, from) {
                hits -= 1;
            }
            if ws.problem.avoided_at(app, to) {
                hits += 1;
            }
        }
        total + hits as f64
    }

    /// Whether the destination tier still fits after receiving the app.
    pub fn fits(&self, ws: &Workspace, app: usize, to: usize) -> bool {
        self.cpu_used[to] + ws.app_cpu[app] <= ws.cpu_cap[to]
            && self.mem_used[to] + ws.app_mem[app] <= ws.mem_cap[to]
            && self.tasks_used[to] + ws.app_tasks[app] <= ws.task_cap[to]
    }
}
