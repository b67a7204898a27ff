//! Exact lexicographic optimization via branch-and-bound over app-to-tier
//! assignments.
//!
//! Apps are assigned one by one in decreasing-demand order; each app either
//! stays on its current tier or moves (consuming the budget, subject to
//! avoid pairs, capacity, and the tier transition rule). Subtrees are pruned
//! with a relaxed per-goal lower bound: partial capacity overage, partial
//! movement cost, and partial critical-move cost only ever grow as more apps
//! are placed, while the balance goals relax to zero. Once the budget is
//! spent the remaining apps are pinned to their current tiers in one step.
//!
//! The search is warm-started with the identity mapping, the local-search
//! result, and the greedy baselines, so a budget-exhausted run is never worse
//! than any of those. The work budget is a deterministic node count derived
//! from the timeout (with the wall clock as a backstop), which keeps results
//! reproducible run to run.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use crate::model::Resource;
use crate::problem::{compare, Problem, RunConfig, ScoreVector};
use crate::solvers::search::Workspace;
use crate::solvers::{finish, greedy, local, mapping_of, moved_ids, SolveError, Solution, TerminatedBy};

/// Deterministic node budget per configured timeout second. Conservative on
/// purpose: the cap fires well before the wall clock on commodity hardware,
/// so reruns explore the same tree.
const NODES_PER_SECOND: f64 = 500_000.0;

pub fn solve_optimal(problem: &Problem, config: &RunConfig) -> Result<Solution, SolveError> {
    config.validate()?;
    let start = Instant::now();
    let deadline = Duration::from_secs_f64(config.timeout_secs);
    let node_budget = ((config.timeout_secs * NODES_PER_SECOND) as u64).max(10_000);
    let ws = Workspace::new(problem);

    let mut search = Search {
        ws: &ws,
        problem,
        order: demand_order(&ws),
        incumbent: None,
        nodes: 0,
        node_budget,
        start,
        deadline,
        timed_out: false,
    };

    // Warm starts. Each candidate is a feasible mapping already; keeping the
    // best of them guarantees the result never ranks below local or greedy.
    let identity = ws.current.clone();
    if assignment_feasible(problem, &ws, &identity) {
        search.offer(&identity);
    }
    let warm_cfg = RunConfig {
        timeout_secs: (config.timeout_secs * 0.25).max(0.05),
        ..config.clone()
    };
    if let Ok(sol) = local::solve_local(problem, &warm_cfg) {
        search.offer(&assignment_of(problem, &sol));
    }
    for objective in Resource::ALL {
        if let Ok(sol) = greedy::solve_greedy(problem, objective, &warm_cfg) {
            search.offer(&assignment_of(problem, &sol));
        }
    }

    let mut node = NodeState::root(&ws);
    search.dfs(0, &mut node);

    let elapsed = start.elapsed().as_secs_f64();
    match search.incumbent {
        Some(inc) => finish(
            problem,
            mapping_of(problem, &inc.assign),
            "optimal",
            elapsed,
            search.nodes,
            if search.timed_out {
                TerminatedBy::Timeout
            } else {
                TerminatedBy::Converged
            },
        ),
        None => {
            let best_effort = mapping_of(problem, &ws.current);
            let violations = problem.violations(&best_effort)?;
            Err(SolveError::Unsatisfiable {
                solver_name: "optimal".to_string(),
                best_effort,
                violations,
            })
        }
    }
}

/// Apps sorted by capacity-normalized total demand, largest first, so
/// capacity pruning bites early. Ties keep snapshot order.
fn demand_order(ws: &Workspace) -> Vec<usize> {
    let mean_cpu: f64 = ws.cpu_cap.iter().sum::<f64>().max(1.0) / ws.ntiers.max(1) as f64;
    let mean_mem: f64 = ws.mem_cap.iter().sum::<f64>().max(1.0) / ws.ntiers.max(1) as f64;
    let mean_tasks: f64 =
        ws.task_cap.iter().map(|&v| v as f64).sum::<f64>().max(1.0) / ws.ntiers.max(1) as f64;
    let mut order: Vec<usize> = (0..ws.napps).collect();
    let key = |a: usize| {
        ws.app_cpu[a] / mean_cpu + ws.app_mem[a] / mean_mem + ws.app_tasks[a] as f64 / mean_tasks
    };
    order.sort_by(|&a, &b| key(b).partial_cmp(&key(a)).unwrap().then(a.cmp(&b)));
    order
}

fn assignment_of(problem: &Problem, solution: &Solution) -> Vec<u32> {
    let snapshot = problem.snapshot();
    snapshot
        .apps()
        .iter()
        .map(|a| {
            snapshot
                .tier_position(&solution.mapping[&a.app_id])
                .expect("solution tiers exist") as u32
        })
        .collect()
}

fn assignment_feasible(problem: &Problem, ws: &Workspace, assign: &[u32]) -> bool {
    let mut state = ws.state_of(assign.to_vec());
    state.resync(ws);
    if state.moved > ws.budget || state.avoid_hits > 0 {
        return false;
    }
    for t in 0..ws.ntiers {
        if state.cpu_used[t] > ws.cpu_cap[t]
            || state.mem_used[t] > ws.mem_cap[t]
            || state.tasks_used[t] > ws.task_cap[t]
        {
            return false;
        }
    }
    for app in 0..ws.napps {
        let tier = assign[app] as usize;
        if tier != ws.current[app] as usize
            && !problem.transition_allowed_at(ws.current[app] as usize, tier)
        {
            return false;
        }
    }
    true
}

struct Incumbent {
    score: ScoreVector,
    assign: Vec<u32>,
    moved: usize,
}

/// Partial-assignment accumulator along the DFS path.
struct NodeState {
    assign: Vec<u32>,
    cpu: Vec<f64>,
    mem: Vec<f64>,
    tasks: Vec<u64>,
    moved: usize,
    move_cost: u64,
    crit_cost: f64,
}

impl NodeState {
    fn root(ws: &Workspace) -> NodeState {
        NodeState {
            assign: ws.current.clone(),
            cpu: vec![0.0; ws.ntiers],
            mem: vec![0.0; ws.ntiers],
            tasks: vec![0; ws.ntiers],
            moved: 0,
            move_cost: 0,
            crit_cost: 0.0,
        }
    }

    fn place(&mut self, ws: &Workspace, app: usize, tier: usize) {
        self.assign[app] = tier as u32;
        self.cpu[tier] += ws.app_cpu[app];
        self.mem[tier] += ws.app_mem[app];
        self.tasks[tier] += ws.app_tasks[app];
        if tier != ws.current[app] as usize {
            self.moved += 1;
            self.move_cost += ws.app_tasks[app];
            self.crit_cost += ws.app_crit[app];
        }
    }

    fn unplace(&mut self, ws: &Workspace, app: usize, tier: usize) {
        self.cpu[tier] -= ws.app_cpu[app];
        self.mem[tier] -= ws.app_mem[app];
        self.tasks[tier] -= ws.app_tasks[app];
        if tier != ws.current[app] as usize {
            self.moved -= 1;
            self.move_cost -= ws.app_tasks[app];
            self.crit_cost -= ws.app_crit[app];
        }
        self.assign[app] = ws.current[app];
    }

    fn fits(&self, ws: &Workspace, app: usize, tier: usize) -> bool {
        self.cpu[tier] + ws.app_cpu[app] <= ws.cpu_cap[tier]
            && self.mem[tier] + ws.app_mem[app] <= ws.mem_cap[tier]
            && self.tasks[tier] + ws.app_tasks[app] <= ws.task_cap[tier]
    }

    /// Capacity-target overage of the partial sums. Usage only grows as more
    /// apps are placed, so this is a lower bound on the final over-target
    /// component.
    fn partial_over(&self, ws: &Workspace) -> f64 {
        let mut over = 0.0;
        for t in 0..ws.ntiers {
            over += (self.cpu[t] * ws.inv_cpu_cap[t] - ws.cpu_target[t]).max(0.0)
                + (self.mem[t] * ws.inv_mem_cap[t] - ws.mem_target[t]).max(0.0)
                + (self.tasks[t] as f64 * ws.inv_task_cap[t] - ws.task_target[t]).max(0.0);
        }
        over
    }

    fn full_score(&self, ws: &Workspace) -> ScoreVector {
        let mut over = 0.0;
        let (mut cpu_lo, mut cpu_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut mem_lo, mut mem_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut task_lo, mut task_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in 0..ws.ntiers {
            let cpu_util = self.cpu[t] * ws.inv_cpu_cap[t];
            let mem_util = self.mem[t] * ws.inv_mem_cap[t];
            let task_util = self.tasks[t] as f64 * ws.inv_task_cap[t];
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
        ScoreVector {
            over_target: over,
            resource_imbalance,
            task_imbalance,
            movement_cost: self.move_cost,
            critical_moves: self.crit_cost,
        }
    }
}

struct Search<'a, 'p> {
    ws: &'a Workspace<'p>,
    problem: &'a Problem,
    order: Vec<usize>,
    incumbent: Option<Incumbent>,
    nodes: u64,
    node_budget: u64,
    start: Instant,
    deadline: Duration,
    timed_out: bool,
}

impl Search<'_, '_> {
    fn out_of_budget(&mut self) -> bool {
        if self.timed_out {
            return true;
        }
        self.nodes += 1;
        if self.nodes > self.node_budget
            || (self.nodes % 4096 == 0 && self.start.elapsed() >= self.deadline)
        {
            self.timed_out = true;
        }
        self.timed_out
    }

    /// Considers a complete feasible assignment for the incumbent slot.
    fn offer(&mut self, assign: &[u32]) {
        let mut node = NodeState::root(self.ws);
        node.cpu.iter_mut().for_each(|v| *v = 0.0);
        for app in 0..self.ws.napps {
            node.place(self.ws, app, assign[app] as usize);
        }
        let score = node.full_score(self.ws);
        self.consider(score, assign, node.moved);
    }

    fn consider(&mut self, score: ScoreVector, assign: &[u32], moved: usize) {
        let replace = match &self.incumbent {
            None => true,
            Some(inc) => match compare(&score, &inc.score, &self.problem.goal_priorities) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => {
                    moved < inc.moved
                        || (moved == inc.moved && {
                            let apps = self.problem.snapshot().apps();
                            moved_ids(apps, &self.ws.current, assign)
                                < moved_ids(apps, &self.ws.current, &inc.assign)
                        })
                }
            },
        };
        if replace {
            self.incumbent = Some(Incumbent {
                score,
                assign: assign.to_vec(),
                moved,
            });
        }
    }

    /// Lower bound pruning: a completion can only grow over-target, movement
    /// cost, and critical cost, while the balance goals are relaxed to zero.
    fn prunable(&self, node: &NodeState) -> bool {
        let Some(inc) = &self.incumbent else {
            return false;
        };
        let bound = ScoreVector {
            over_target: node.partial_over(self.ws),
            resource_imbalance: 0.0,
            task_imbalance: 0.0,
            movement_cost: node.move_cost,
            critical_moves: node.crit_cost,
        };
        compare(&bound, &inc.score, &self.problem.goal_priorities) != Ordering::Less
    }

    fn dfs(&mut self, depth: usize, node: &mut NodeState) {
        if self.out_of_budget() {
            return;
        }
        if self.prunable(node) {
            return;
        }
        if depth == self.order.len() {
            let score = node.full_score(self.ws);
            let assign = node.assign.clone();
            self.consider(score, &assign, node.moved);
            return;
        }
        // Budget spent: the rest of the apps are pinned to their current
        // tiers; place them all or give up on this branch.
        if node.moved == self.ws.budget {
            let mut placed = Vec::with_capacity(self.order.len() - depth);
            let mut ok = true;
            for &app in &self.order[depth..] {
                let cur = self.ws.current[app] as usize;
                if self.problem.avoided_at(app, cur) || !node.fits(self.ws, app, cur) {
                    ok = false;
                    break;
                }
                node.place(self.ws, app, cur);
                placed.push((app, cur));
            }
            if ok && !self.prunable(node) {
                let score = node.full_score(self.ws);
                let assign = node.assign.clone();
                self.consider(score, &assign, node.moved);
            }
            for &(app, tier) in placed.iter().rev() {
                node.unplace(self.ws, app, tier);
            }
            return;
        }

        let app = self.order[depth];
        let cur = self.ws.current[app] as usize;
        // Staying put first: it is free under the movement goals.
        if !self.problem.avoided_at(app, cur) && node.fits(self.ws, app, cur) {
            node.place(self.ws, app, cur);
            self.dfs(depth + 1, node);
            node.unplace(self.ws, app, cur);
        }
        for tier in 0..self.ws.ntiers {
            if tier == cur {
                continue;
            }
            if self.problem.avoided_at(app, tier)
                || !self.problem.transition_allowed_at(cur, tier)
                || !node.fits(self.ws, app, tier)
            {
                continue;
            }
            node.place(self.ws, app, tier);
            self.dfs(depth + 1, node);
            node.unplace(self.ws, app, tier);
            if self.timed_out {
                return;
            }
        }
    }
}
