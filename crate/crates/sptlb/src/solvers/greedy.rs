//! The single-objective greedy baseline.
//!
//! Loop: find the tier with the most resources used relative to its
//! utilization target (used / (capacity × target)) and the tier with the
//! least; take the largest not-yet-moved app from the hottest tier and
//! relocate it to the coolest, provided the move keeps capacity, task-limit,
//! and placement restrictions intact; repeat until the movement budget is
//! spent, no candidate can move, or the timeout fires. Each app moves at most
//! once per run.
//!
//! Ties on tier selection break by tier id ascending; ties on app size by
//! app id ascending, so runs are deterministic without a seed.

use std::time::{Duration, Instant};

use crate::model::Resource;
use crate::problem::{Problem, RunConfig};
use crate::solvers::search::Workspace;
use crate::solvers::{finish, mapping_of, SolveError, Solution, TerminatedBy};

pub fn solve_greedy(
    problem: &Problem,
    objective: Resource,
    config: &RunConfig,
) -> Result<Solution, SolveError> {
    config.validate()?;
    let start = Instant::now();
    let deadline = Duration::from_secs_f64(config.timeout_secs);
    let ws = Workspace::new(problem);
    let mut state = ws.identity_state();
    let mut moved_once = vec![false; ws.napps];
    let mut iterations: u64 = 0;
    let solver_name = match objective {
        Resource::Cpu => "greedy_cpu",
        Resource::Mem => "greedy_mem",
        Resource::Tasks => "greedy_tasks",
    };

    let tier_ids: Vec<&str> = problem
        .snapshot()
        .tiers()
        .iter()
        .map(|t| t.tier_id.as_str())
        .collect();
    let target_ratio = |state: &crate::solvers::search::State, t: usize| -> f64 {
        match objective {
            Resource::Cpu => state.cpu_used[t] / (ws.cpu_cap[t] * ws.cpu_target[t]),
            Resource::Mem => state.mem_used[t] / (ws.mem_cap[t] * ws.mem_target[t]),
            Resource::Tasks => {
                state.tasks_used[t] as f64 / (ws.task_cap[t] as f64 * ws.task_target[t])
            }
        }
    };

    let terminated_by = loop {
        if start.elapsed() >= deadline {
            break TerminatedBy::Timeout;
        }
        if state.moved >= ws.budget {
            break TerminatedBy::BudgetExhausted;
        }
        iterations += 1;

        let mut hottest = 0usize;
        let mut coolest = 0usize;
        for t in 1..ws.ntiers {
            let r = target_ratio(&state, t);
            let hot = target_ratio(&state, hottest);
            let cool = target_ratio(&state, coolest);
            if r > hot || (r == hot && tier_ids[t] < tier_ids[hottest]) {
                hottest = t;
            }
            if r < cool || (r == cool && tier_ids[t] < tier_ids[coolest]) {
                coolest = t;
            }
        }
        if hottest == coolest {
            break TerminatedBy::Converged;
        }

        let mut candidates: Vec<usize> = (0..ws.napps)
            .filter(|&a| state.assign[a] as usize == hottest && !moved_once[a])
            .collect();
        let apps = problem.snapshot().apps();
        candidates.sort_by(|&a, &b| {
            ws.app_size(b, objective)
                .partial_cmp(&ws.app_size(a, objective))
                .unwrap()
                .then_with(|| apps[a].app_id.cmp(&apps[b].app_id))
        });

        let mut performed = false;
        for app in candidates {
            if !ws.placement_allowed_raw(app, coolest, config.greedy_raw) {
                continue;
            }
            if !state.fits(&ws, app, coolest) {
                continue;
            }
            state.apply(&ws, app, coolest);
            state.resync(&ws);
            moved_once[app] = true;
            performed = true;
            break;
        }
        if !performed {
            break TerminatedBy::Converged;
        }
    };

    finish(
        problem,
        mapping_of(problem, &state.assign),
        solver_name,
        start.elapsed().as_secs_f64(),
        iterations,
        terminated_by,
    )
}
