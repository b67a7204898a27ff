//! Greedy exploration of the single-app relocation neighborhood.
//!
//! Starting from the identity mapping, every scan evaluates all (app, tier)
//! relocations and accepts the best strictly improving feasible one; the
//! search stops at a local minimum, on timeout, or when only the movement
//! budget blocks further improvement. When the initial state already violates
//! hard constraints a repair phase runs first, accepting only moves that
//! strictly shrink the total violation magnitude.
//!
//! The seed shuffles the neighbor enumeration order, which settles residual
//! ties; everything else is deterministic.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;

use crate::problem::{compare, Problem, RunConfig, ScoreVector};
use crate::rng;
use crate::solvers::search::{State, Workspace};
use crate::solvers::{finish, mapping_of, moved_ids, SolveError, Solution, TerminatedBy};

const MAGNITUDE_EPS: f64 = 1e-12;

pub fn solve_local(problem: &Problem, config: &RunConfig) -> Result<Solution, SolveError> {
    config.validate()?;
    let start = Instant::now();
    let deadline = Duration::from_secs_f64(config.timeout_secs);
    let ws = Workspace::new(problem);
    let mut state = ws.identity_state();
    let mut iterations: u64 = 0;

    let mut order: Vec<(u32, u32)> = Vec::with_capacity(ws.napps * ws.ntiers);
    for app in 0..ws.napps as u32 {
        for tier in 0..ws.ntiers as u32 {
            order.push((app, tier));
        }
    }
    order.shuffle(&mut rng::stream(config.seed, "solver/local/neighbor-order"));

    // Repair phase: drive hard-constraint violations to zero before
    // optimizing. Moves never target avoided pairs or forbidden transitions,
    // so the magnitude is capacity overage plus apps stuck on avoided pairs,
    // and accepted steps shrink it strictly.
    let mut magnitude = state.magnitude(&ws);
    while magnitude > MAGNITUDE_EPS {
        if start.elapsed() >= deadline {
            return unsatisfiable(problem, &ws, &state);
        }
        iterations += 1;
        let mut best: Option<(f64, usize, usize)> = None;
        for &(app, tier) in &order {
            let (app, tier) = (app as usize, tier as usize);
            if state.assign[app] as usize == tier {
                continue;
            }
            if !ws.placement_allowed(app, tier) {
                continue;
            }
            if state.eval_move(&ws, app, tier).new_moved > ws.budget {
                continue;
            }
            let m = state.magnitude_with(&ws, app, tier);
            if m < magnitude - MAGNITUDE_EPS && best.map_or(true, |(bm, _, _)| m < bm) {
                best = Some((m, app, tier));
            }
        }
        match best {
            Some((_, app, tier)) => {
                state.apply(&ws, app, tier);
                state.resync(&ws);
                magnitude = state.magnitude(&ws);
            }
            None => return unsatisfiable(problem, &ws, &state),
        }
    }

    // Improvement phase: best-improvement hill climbing under the
    // lexicographic goal order.
    let terminated_by = loop {
        if start.elapsed() >= deadline {
            break TerminatedBy::Timeout;
        }
        iterations += 1;
        let current = state.score(&ws);
        let mut best: Option<Candidate> = None;
        let mut blocked_only_by_budget = false;
        for &(app, tier) in &order {
            let (app, tier) = (app as usize, tier as usize);
            if state.assign[app] as usize == tier {
                continue;
            }
            if !ws.placement_allowed(app, tier) {
                continue;
            }
            let eval = state.eval_move(&ws, app, tier);
            if !eval.caps_ok {
                continue;
            }
            if compare(&eval.score, &current, &problem.goal_priorities) != Ordering::Less {
                continue;
            }
            if eval.new_moved > ws.budget {
                blocked_only_by_budget = true;
                continue;
            }
            let candidate = Candidate {
                score: eval.score,
                moved: eval.new_moved,
                app,
                tier,
            };
            if best
                .as_ref()
                .map_or(true, |b| candidate.beats(b, problem, &ws, &state))
            {
                best = Some(candidate);
            }
        }
        match best {
            Some(c) => {
                state.apply(&ws, c.app, c.tier);
                state.resync(&ws);
            }
            None => {
                break if blocked_only_by_budget {
                    TerminatedBy::BudgetExhausted
                } else {
                    TerminatedBy::Converged
                };
            }
        }
    };

    finish(
        problem,
        mapping_of(problem, &state.assign),
        "local",
        start.elapsed().as_secs_f64(),
        iterations,
        terminated_by,
    )
}

struct Candidate {
    score: ScoreVector,
    moved: usize,
    app: usize,
    tier: usize,
}

impl Candidate {
    /// Strictly better score wins; ties break toward fewer moves, then the
    /// lexicographically smallest moved-app-id set, then the earlier
    /// candidate in the (seeded) enumeration order.
    fn beats(&self, other: &Candidate, problem: &Problem, ws: &Workspace, state: &State) -> bool {
        match compare(&self.score, &other.score, &problem.goal_priorities) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => {
                if self.moved != other.moved {
                    return self.moved < other.moved;
                }
                let mine = moved_set_with(ws, state, self.app, self.tier);
                let theirs = moved_set_with(ws, state, other.app, other.tier);
                mine < theirs
            }
        }
    }
}

fn moved_set_with(ws: &Workspace, state: &State, app: usize, tier: usize) -> Vec<&str> {
    let apps = ws.problem.snapshot().apps();
    let mut assign = state.assign.clone();
    assign[app] = tier as u32;
    moved_ids(apps, &ws.current, &assign)
}

fn unsatisfiable(
    problem: &Problem,
    _ws: &Workspace,
    state: &State,
) -> Result<Solution, SolveError> {
    let best_effort = mapping_of(problem, &state.assign);
    let violations = problem.violations(&best_effort)?;
    Err(SolveError::Unsatisfiable {
        solver_name: "local".to_string(),
        best_effort,
        violations,
    })
}
