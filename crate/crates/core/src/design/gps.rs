//! Coordinate pattern search with an extreme barrier.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Objective value and aggregate constraint violation of one point. A point is
/// feasible exactly when `penalty == 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub penalty: f64,
}

impl Evaluation {
    pub fn feasible(&self) -> bool {
        self.penalty == 0.0
    }

    /// Strict improvement under the two-phase rule: feasible beats infeasible,
    /// infeasible points compare by penalty, feasible ones by objective.
    pub fn improves_on(&self, other: &Evaluation) -> bool {
        match (self.feasible(), other.feasible()) {
            (true, false) => true,
            (false, true) => false,
            (false, false) => self.penalty < other.penalty,
            (true, true) => self.objective < other.objective,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    pub initial_mesh: f64,
    pub min_mesh: f64,
    pub max_mesh: f64,
    pub max_evals: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            initial_mesh: 0.05,
            min_mesh: 1e-4,
            max_mesh: 0.4,
            max_evals: 5000,
        }
    }
}

/// One poll step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub iter: usize,
    /// Mesh size used by the poll.
    pub mesh: f64,
    /// Incumbent objective after the poll.
    pub objective: f64,
    /// Incumbent penalty after the poll.
    pub penalty: f64,
    /// Feasible points seen so far, start included.
    pub feasible_count: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub point: Vec<f64>,
    pub evaluation: Evaluation,
    pub history: Vec<HistoryEntry>,
    pub evals: usize,
}

/// Polls `+-mesh * e_i` for every index in `active`, moving to the first
/// improving point. The last successful direction is tried first. The mesh
/// doubles (up to `max_mesh`) after a success and halves after a failure.
///
/// While the incumbent is infeasible the penalty is minimized; once a feasible
/// point is found, infeasible polls are rejected and the objective is minimized.
pub fn pattern_search<F>(
    mut f: F,
    start: &[f64],
    active: &[usize],
    opts: &SearchOptions,
) -> Result<SearchResult>
where
    F: FnMut(&[f64]) -> Evaluation,
{
    let mut x = start.to_vec();
    let mut best = f(&x);
    let mut evals = 1;
    let mut feasible_count = usize::from(best.feasible());
    let mut mesh = opts.initial_mesh;
    let mut history = Vec::new();
    let mut last: Option<(usize, f64)> = None;

    let mut directions: Vec<(usize, f64)> = Vec::with_capacity(2 * active.len());
    for &i in active {
        directions.push((i, 1.0));
        directions.push((i, -1.0));
    }

    let mut iter = 0;
    while mesh >= opts.min_mesh && evals < opts.max_evals {
        let order = last.into_iter().chain(directions.iter().copied().filter(|d| Some(*d) != last));
        let mut accepted = false;
        let mut trial = x.clone();
        for (i, sign) in order {
            if evals >= opts.max_evals {
                break;
            }
            trial[i] = x[i] + sign * mesh;
            let e = f(&trial);
            evals += 1;
            if e.feasible() {
                feasible_count += 1;
            }
            if e.improves_on(&best) {
                x[i] = trial[i];
                best = e;
                last = Some((i, sign));
                accepted = true;
                break;
            }
            trial[i] = x[i];
        }
        history.push(HistoryEntry {
            iter,
            mesh,
            objective: best.objective,
            penalty: best.penalty,
            feasible_count,
            accepted,
        });
        iter += 1;
        mesh = if accepted { (2.0 * mesh).min(opts.max_mesh) } else { 0.5 * mesh };
    }

    if !best.feasible() {
        return Err(Error::NoFeasibleStart);
    }
    Ok(SearchResult {
        point: x,
        evaluation: best,
        history,
        evals,
    })
}
