//! Welfare-optimal joint play in iterated matrix games.
//!
//! Candidates are constant joint actions, period-2 alternations and
//! lotteries between two joint actions drawn each step from the public
//! signal. Lotteries reach every point of the feasible hull's boundary, so
//! the search attains the same optimum as the geometric solver.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{JointAction, MatrixGame, MatrixState};
use crate::math::abs;
use crate::welfare::{evaluate_welfare, feasible_set, FeasibleSet, WelfareKind, WelfareSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant(JointAction),
    /// `even` on even steps, `odd` on odd steps.
    Alternate { even: JointAction, odd: JointAction },
    /// `first` when the step's public signal is below `p`, else `second`.
    Lottery { p: f64, first: JointAction, second: JointAction },
}

impl Schedule {
    pub fn joint_action(&self, state: &MatrixState) -> JointAction {
        match *self {
            Schedule::Constant(ja) => ja,
            Schedule::Alternate { even, odd } => {
                if state.t % 2 == 0 {
                    even
                } else {
                    odd
                }
            }
            Schedule::Lottery { p, first, second } => {
                if state.signal < p {
                    first
                } else {
                    second
                }
            }
        }
    }

    /// Expected discounted values from step 0.
    pub fn values(&self, game: &MatrixGame, gamma: f64) -> [f64; 2] {
        match *self {
            Schedule::Constant(ja) => {
                let r = game.payoff(ja);
                [r[0] / (1.0 - gamma), r[1] / (1.0 - gamma)]
            }
            Schedule::Alternate { even, odd } => {
                let (a, b) = (game.payoff(even), game.payoff(odd));
                let k = 1.0 / (1.0 - gamma * gamma);
                [(a[0] + gamma * b[0]) * k, (a[1] + gamma * b[1]) * k]
            }
            Schedule::Lottery { p, first, second } => {
                let (a, b) = (game.payoff(first), game.payoff(second));
                let k = 1.0 / (1.0 - gamma);
                [(p * a[0] + (1.0 - p) * b[0]) * k, (p * a[1] + (1.0 - p) * b[1]) * k]
            }
        }
    }
}

struct Candidate {
    schedule: Schedule,
    values: [f64; 2],
    welfare: f64,
}

fn prefer(w: &WelfareSpec, c: &Candidate, best: &Candidate) -> bool {
    let tol = 1e-9 * (1.0 + abs(best.welfare));
    if abs(c.welfare - best.welfare) > tol {
        return c.welfare > best.welfare;
    }
    // Pareto-constrained kinds can tie with dominated points; prefer more total.
    if w.kind.pareto_constrained() {
        let (sc, sb) = (c.values[0] + c.values[1], best.values[0] + best.values[1]);
        if abs(sc - sb) > 1e-9 * (1.0 + abs(sb)) {
            return sc > sb;
        }
    }
    let d = w.disagreement;
    let spread = |v: [f64; 2]| abs((v[0] - d[0]) - (v[1] - d[1]));
    let (pc, pb) = (spread(c.values), spread(best.values));
    if abs(pc - pb) > 1e-9 * (1.0 + pb) {
        return pc < pb;
    }
    // Remaining ties keep the earlier, simpler schedule.
    let tol = 1e-9 * (1.0 + abs(best.values[0]) + abs(best.values[1]));
    if abs(c.values[0] - best.values[0]) > tol {
        return c.values[0] > best.values[0];
    }
    c.values[1] > best.values[1] + tol
}

/// Maximize a unimodal function on [0, 1] by golden-section search.
fn golden_max(f: impl Fn(f64) -> f64) -> f64 {
    let phi = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..90 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// The welfare-maximizing schedule and its values.
pub fn optimal_schedule(game: &MatrixGame, w: &WelfareSpec, gamma: f64) -> Result<(Schedule, [f64; 2])> {
    w.validate()?;
    let set: FeasibleSet = feasible_set(game, gamma)?;
    let n = game.joint_actions();
    let actions: Vec<JointAction> = (0..n).map(|i| JointAction::from_index(i, game.actions)).collect();

    let score = |v: [f64; 2]| -> Option<f64> { evaluate_welfare(w, v, &set).ok() };
    let mut schedules: Vec<Schedule> = Vec::new();
    for &a in &actions {
        schedules.push(Schedule::Constant(a));
        for &b in &actions {
            if a != b {
                schedules.push(Schedule::Alternate { even: a, odd: b });
            }
        }
    }
    for (i, &a) in actions.iter().enumerate() {
        for &b in &actions[i + 1..] {
            let lottery = |p: f64| Schedule::Lottery { p, first: a, second: b };
            let at = |p: f64| score(lottery(p).values(game, gamma)).unwrap_or(f64::NEG_INFINITY);
            let mut ps = alloc::vec![golden_max(at)];
            // Even split of gains; the natural tie-break when welfare is flat.
            let (va, vb) = (Schedule::Constant(a).values(game, gamma), Schedule::Constant(b).values(game, gamma));
            let d = w.disagreement;
            let (ga, gb) = ((va[0] - d[0]) - (va[1] - d[1]), (vb[0] - d[0]) - (vb[1] - d[1]));
            if ga != gb {
                ps.push(gb / (gb - ga));
            }
            for p in ps {
                if p > 1e-9 && p < 1.0 - 1e-9 {
                    schedules.push(lottery(p));
                }
            }
        }
    }

    let mut best: Option<Candidate> = None;
    for schedule in schedules {
        let values = schedule.values(game, gamma);
        let Some(welfare) = score(values) else { continue };
        // Nash and KS are only meaningful on gains over the disagreement point.
        if matches!(w.kind, WelfareKind::Nash | WelfareKind::KalaiSmorodinsky)
            && (values[0] < w.disagreement[0] || values[1] < w.disagreement[1])
        {
            continue;
        }
        let cand = Candidate { schedule, values, welfare };
        if best.as_ref().map_or(true, |b| prefer(w, &cand, b)) {
            best = Some(cand);
        }
    }
    let best = best.ok_or_else(|| Error::Degenerate(alloc::format!("no admissible schedule for {}", w.kind)))?;
    Ok((best.schedule, best.values))
}
