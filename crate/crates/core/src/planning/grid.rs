//! Exact planning on the gridworlds.
//!
//! States are reduced by torus translation (red at the origin). The model
//! stores, for every state and joint move, the rewards and either the
//! deterministic successor or the fact that coins respawn, in which case the
//! successor is uniform over the respawn layouts for the new relative
//! positions.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GridConfig, GridState, JointAction, MOVES};
use crate::math::abs;

pub(crate) const JOINT: usize = MOVES * MOVES;
const RESPAWN: u32 = 1 << 31;

/// Largest state space the planners accept (ledger buckets included).
pub const STATE_LIMIT: usize = 2_000_000;

#[derive(Clone, Debug)]
pub struct GridModel {
    pub config: GridConfig,
    states: usize,
    valid: Vec<bool>,
    rewards: Vec<[f64; 2]>,
    next: Vec<u32>,
    /// Canonical timer-0 layouts reachable by a respawn, per relative blue cell.
    respawn: Vec<Vec<u32>>,
    /// Initial states: blue anywhere but on red, fresh coins.
    initial: Vec<u32>,
}

impl GridModel {
    pub fn new(config: &GridConfig) -> Result<Self> {
        config.validate()?;
        let states = config.canonical_count();
        if states > STATE_LIMIT {
            return Err(Error::StateBoundExceeded { states, limit: STATE_LIMIT });
        }
        let cells = config.cells();
        let respawn: Vec<Vec<u32>> = (0..cells)
            .map(|blue| {
                config
                    .respawn_outcomes([0, blue as u8])
                    .into_iter()
                    .map(|coins| {
                        let s = GridState { positions: [0, blue as u8], coins, timer: 0 };
                        config.canonical_index(&s) as u32
                    })
                    .collect()
            })
            .collect();
        let initial = (1..cells).flat_map(|b| respawn[b].iter().copied()).collect();

        let mut valid = vec![false; states];
        let mut rewards = vec![[0.0; 2]; states * JOINT];
        let mut next = vec![0u32; states * JOINT];
        for s in 0..states {
            let Some(state) = config.canonical_state(s) else { continue };
            valid[s] = true;
            for ja in 0..JOINT {
                let action = JointAction::from_index(ja, MOVES);
                let res = config.resolve(&state, action);
                rewards[s * JOINT + ja] = res.rewards;
                next[s * JOINT + ja] = if res.respawn {
                    let blue = relative(config, res.positions[0], res.positions[1]);
                    RESPAWN | blue as u32
                } else {
                    let succ = GridState {
                        positions: res.positions,
                        coins: state.coins,
                        timer: state.timer + 1,
                    };
                    config.canonical_index(&succ) as u32
                };
            }
        }
        Ok(GridModel { config: config.clone(), states, valid, rewards, next, respawn, initial })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn rewards(&self, s: usize, ja: usize) -> [f64; 2] {
        self.rewards[s * JOINT + ja]
    }

    /// Successor distribution as `(state, probability)` pairs.
    pub fn successors(&self, s: usize, ja: usize) -> Successor<'_> {
        let n = self.next[s * JOINT + ja];
        if n & RESPAWN != 0 {
            Successor::Respawn(&self.respawn[(n & !RESPAWN) as usize])
        } else {
            Successor::Fixed(n as usize)
        }
    }

    pub fn initial_states(&self) -> &[u32] {
        &self.initial
    }

    pub fn is_valid(&self, s: usize) -> bool {
        self.valid[s]
    }
}

#[derive(Debug)]
pub enum Successor<'a> {
    Fixed(usize),
    Respawn(&'a [u32]),
}

fn relative(config: &GridConfig, origin: u8, cell: u8) -> usize {
    let s = config.size;
    let (ro, co) = (origin as usize / s, origin as usize % s);
    let (r, c) = (cell as usize / s, cell as usize % s);
    ((r + s - ro) % s) * s + (c + s - co) % s
}

// Sweeps run from high to low index: the timer is the fastest-varying part of
// the canonical index and only grows within a coin round, so a reverse
// Gauss-Seidel sweep carries values back through a whole round at once.
const VI_TOL: f64 = 1e-7;
const VI_MAX_SWEEPS: usize = 5000;
const LEDGER_TOL: f64 = 1e-4;

fn argmax_first(q: &[f64]) -> usize {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * (1.0 + abs(max));
    q.iter().position(|&x| x >= max - tol).unwrap_or(0)
}

/// Joint value iteration on the team reward `weights · r`. Returns the
/// greedy joint move per state.
pub fn weighted_plan(model: &GridModel, weights: [f64; 2], gamma: f64) -> Vec<u8> {
    let n = model.states;
    let mut v = vec![0.0; n];
    let mut respawn_mean = vec![0.0; model.respawn.len()];
    let mut q = [0.0; JOINT];
    for _ in 0..VI_MAX_SWEEPS {
        for (b, set) in model.respawn.iter().enumerate() {
            respawn_mean[b] = set.iter().map(|&s| v[s as usize]).sum::<f64>() / set.len() as f64;
        }
        let mut delta: f64 = 0.0;
        for s in (0..n).rev() {
            if !model.valid[s] {
                continue;
            }
            for (ja, qa) in q.iter_mut().enumerate() {
                let r = model.rewards[s * JOINT + ja];
                let nx = model.next[s * JOINT + ja];
                let cont = if nx & RESPAWN != 0 { respawn_mean[(nx & !RESPAWN) as usize] } else { v[nx as usize] };
                *qa = weights[0] * r[0] + weights[1] * r[1] + gamma * cont;
            }
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max(abs(best - v[s]));
            v[s] = best;
        }
        if delta < VI_TOL {
            break;
        }
    }
    greedy(model, &v, weights, gamma)
}

fn greedy(model: &GridModel, v: &[f64], weights: [f64; 2], gamma: f64) -> Vec<u8> {
    let respawn_mean: Vec<f64> = model
        .respawn
        .iter()
        .map(|set| set.iter().map(|&s| v[s as usize]).sum::<f64>() / set.len() as f64)
        .collect();
    let mut policy = vec![0u8; model.states];
    let mut q = [0.0; JOINT];
    for (s, slot) in policy.iter_mut().enumerate() {
        if !model.valid[s] {
            continue;
        }
        for (ja, qa) in q.iter_mut().enumerate() {
            let r = model.rewards[s * JOINT + ja];
            let nx = model.next[s * JOINT + ja];
            let cont = if nx & RESPAWN != 0 { respawn_mean[(nx & !RESPAWN) as usize] } else { v[nx as usize] };
            *qa = weights[0] * r[0] + weights[1] * r[1] + gamma * cont;
        }
        *slot = argmax_first(&q) as u8;
    }
    policy
}

/// Expected values of an episode under a joint policy given as a function
/// of the canonical state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeValues {
    /// Mean per-step reward over the episode, in value units (`/(1-γ)`).
    pub average: [f64; 2],
    pub discounted: [f64; 2],
}

pub fn episode_values(
    model: &GridModel,
    policy: impl Fn(usize) -> usize,
    length: usize,
    gamma: f64,
) -> EpisodeValues {
    let n = model.states;
    let mut dist = vec![0.0; n];
    let p0 = 1.0 / model.initial.len() as f64;
    for &s in &model.initial {
        dist[s as usize] += p0;
    }
    let mut total = [0.0; 2];
    let mut discounted = [0.0; 2];
    let mut weight = 1.0;
    let mut next = vec![0.0; n];
    let mut respawn_mass = vec![0.0; model.respawn.len()];
    for _ in 0..length {
        next.iter_mut().for_each(|x| *x = 0.0);
        respawn_mass.iter_mut().for_each(|x| *x = 0.0);
        let mut step = [0.0; 2];
        for s in 0..n {
            let p = dist[s];
            if p == 0.0 {
                continue;
            }
            let ja = policy(s);
            let r = model.rewards[s * JOINT + ja];
            step[0] += p * r[0];
            step[1] += p * r[1];
            let nx = model.next[s * JOINT + ja];
            if nx & RESPAWN != 0 {
                respawn_mass[(nx & !RESPAWN) as usize] += p;
            } else {
                next[nx as usize] += p;
            }
        }
        for (b, &mass) in respawn_mass.iter().enumerate() {
            if mass > 0.0 {
                let share = mass / model.respawn[b].len() as f64;
                for &s in &model.respawn[b] {
                    next[s as usize] += share;
                }
            }
        }
        for i in 0..2 {
            total[i] += step[i];
            discounted[i] += weight * step[i];
        }
        weight *= gamma;
        core::mem::swap(&mut dist, &mut next);
    }
    let scale = 1.0 / (length as f64 * (1.0 - gamma));
    EpisodeValues {
        average: [total[0] * scale, total[1] * scale],
        discounted,
    }
}

/// Discounted value, from the initial distribution, for player `seat` when
/// choosing its own move optimally against `opponent` (a move per state).
pub fn best_response_value(model: &GridModel, seat: usize, opponent: impl Fn(usize) -> usize, gamma: f64) -> f64 {
    let n = model.states;
    let mut v = vec![0.0; n];
    let mut respawn_mean = vec![0.0; model.respawn.len()];
    for _ in 0..VI_MAX_SWEEPS {
        for (b, set) in model.respawn.iter().enumerate() {
            respawn_mean[b] = set.iter().map(|&s| v[s as usize]).sum::<f64>() / set.len() as f64;
        }
        let mut delta: f64 = 0.0;
        for s in (0..n).rev() {
            if !model.valid[s] {
                continue;
            }
            let other = opponent(s);
            let mut best = f64::NEG_INFINITY;
            for own in 0..MOVES {
                let ja = if seat == 0 { own * MOVES + other } else { other * MOVES + own };
                let r = model.rewards[s * JOINT + ja][seat];
                let nx = model.next[s * JOINT + ja];
                let cont = if nx & RESPAWN != 0 { respawn_mean[(nx & !RESPAWN) as usize] } else { v[nx as usize] };
                best = best.max(r + gamma * cont);
            }
            delta = delta.max(abs(best - v[s]));
            v[s] = best;
        }
        if delta < VI_TOL {
            break;
        }
    }
    model.initial.iter().map(|&s| v[s as usize]).sum::<f64>() / model.initial.len() as f64
}

/// Discounted values from the initial distribution under a joint policy.
pub fn policy_values(model: &GridModel, policy: impl Fn(usize) -> usize, gamma: f64) -> [f64; 2] {
    let n = model.states;
    let mut v = vec![[0.0; 2]; n];
    let mut respawn_mean = vec![[0.0; 2]; model.respawn.len()];
    for _ in 0..VI_MAX_SWEEPS {
        for (b, set) in model.respawn.iter().enumerate() {
            let k = set.len() as f64;
            let mut m = [0.0; 2];
            for &s in set {
                m[0] += v[s as usize][0];
                m[1] += v[s as usize][1];
            }
            respawn_mean[b] = [m[0] / k, m[1] / k];
        }
        let mut delta: f64 = 0.0;
        for s in (0..n).rev() {
            if !model.valid[s] {
                continue;
            }
            let ja = policy(s);
            let r = model.rewards[s * JOINT + ja];
            let nx = model.next[s * JOINT + ja];
            let cont = if nx & RESPAWN != 0 { respawn_mean[(nx & !RESPAWN) as usize] } else { v[nx as usize] };
            let new = [r[0] + gamma * cont[0], r[1] + gamma * cont[1]];
            delta = delta.max(abs(new[0] - v[s][0])).max(abs(new[1] - v[s][1]));
            v[s] = new;
        }
        if delta < VI_TOL {
            break;
        }
    }
    let k = model.initial.len() as f64;
    let mut out = [0.0; 2];
    for &s in &model.initial {
        out[0] += v[s as usize][0] / k;
        out[1] += v[s as usize][1] / k;
    }
    out
}

/// Discretization of the inequity ledger `e1 - e2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerGrid {
    pub buckets: usize,
    pub bound: f64,
}

impl Default for LedgerGrid {
    fn default() -> Self {
        LedgerGrid { buckets: 21, bound: 20.0 }
    }
}

impl LedgerGrid {
    fn step(&self) -> f64 {
        2.0 * self.bound / (self.buckets - 1) as f64
    }

    pub fn center(&self, b: usize) -> f64 {
        -self.bound + b as f64 * self.step()
    }

    pub fn nearest(&self, gap: f64) -> usize {
        let x = ((gap.clamp(-self.bound, self.bound) + self.bound) / self.step()) + 0.5;
        (x as usize).min(self.buckets - 1)
    }

    /// Stochastic rounding of `gap` onto the two neighbouring buckets.
    pub(crate) fn split(&self, gap: f64) -> (usize, usize, f64) {
        let x = (gap.clamp(-self.bound, self.bound) + self.bound) / self.step();
        let lo = (x as usize).min(self.buckets - 1);
        let hi = (lo + 1).min(self.buckets - 1);
        let w_hi = if hi == lo { 0.0 } else { x - lo as f64 };
        (lo, hi, w_hi)
    }
}

/// Joint value iteration for inequity-averse welfare on the state space
/// augmented with the ledger bucket. The per-step team reward is
/// `r1 + r2 - beta (1 - gamma) |d'|` with `d' = gamma lambda d + r1 - r2`.
/// Returns the greedy joint move per `(state, bucket)`, bucket-minor.
pub fn ledger_plan(model: &GridModel, beta: f64, lambda: f64, gamma: f64, grid: LedgerGrid) -> Result<Vec<u8>> {
    let nb = grid.buckets;
    if nb < 2 {
        return Err(Error::InvalidParameter("ledger needs at least two buckets".into()));
    }
    let total = model.states * nb;
    if total > STATE_LIMIT {
        return Err(Error::StateBoundExceeded { states: total, limit: STATE_LIMIT });
    }
    let decay = gamma * lambda;
    let mut v = vec![0.0; total];
    let mut respawn_mean = vec![0.0; model.respawn.len() * nb];
    let q_at = |v: &[f64], respawn_mean: &[f64], s: usize, b: usize, ja: usize| -> f64 {
        let r = model.rewards[s * JOINT + ja];
        let gap = decay * grid.center(b) + r[0] - r[1];
        let team = r[0] + r[1] - beta * (1.0 - gamma) * abs(gap);
        let (lo, hi, w_hi) = grid.split(gap);
        let nx = model.next[s * JOINT + ja];
        let cont = if nx & RESPAWN != 0 {
            let base = (nx & !RESPAWN) as usize * nb;
            (1.0 - w_hi) * respawn_mean[base + lo] + w_hi * respawn_mean[base + hi]
        } else {
            let base = nx as usize * nb;
            (1.0 - w_hi) * v[base + lo] + w_hi * v[base + hi]
        };
        team + gamma * cont
    };
    for _ in 0..VI_MAX_SWEEPS {
        for (bl, set) in model.respawn.iter().enumerate() {
            for b in 0..nb {
                respawn_mean[bl * nb + b] =
                    set.iter().map(|&s| v[s as usize * nb + b]).sum::<f64>() / set.len() as f64;
            }
        }
        let mut delta: f64 = 0.0;
        for s in (0..model.states).rev() {
            if !model.valid[s] {
                continue;
            }
            for b in 0..nb {
                let best = (0..JOINT)
                    .map(|ja| q_at(&v, &respawn_mean, s, b, ja))
                    .fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max(abs(best - v[s * nb + b]));
                v[s * nb + b] = best;
            }
        }
        if delta < LEDGER_TOL {
            break;
        }
    }
    for (bl, set) in model.respawn.iter().enumerate() {
        for b in 0..nb {
            respawn_mean[bl * nb + b] = set.iter().map(|&s| v[s as usize * nb + b]).sum::<f64>() / set.len() as f64;
        }
    }
    let mut policy = vec![0u8; total];
    let mut q = [0.0; JOINT];
    for s in 0..model.states {
        if !model.valid[s] {
            continue;
        }
        for b in 0..nb {
            for (ja, qa) in q.iter_mut().enumerate() {
                *qa = q_at(&v, &respawn_mean, s, b, ja);
            }
            policy[s * nb + b] = argmax_first(&q) as u8;
        }
    }
    Ok(policy)
}

pub(crate) fn ledger_episode_values(
    model: &GridModel,
    actions: &[u8],
    grid: LedgerGrid,
    decay: f64,
    length: usize,
    gamma: f64,
) -> EpisodeValues {
    let nb = grid.buckets;
    let total = model.states * nb;
    let mut dist = vec![0.0; total];
    let zero = grid.nearest(0.0);
    let p0 = 1.0 / model.initial.len() as f64;
    for &s in &model.initial {
        dist[s as usize * nb + zero] += p0;
    }
    let mut sums = [0.0; 2];
    let mut discounted = [0.0; 2];
    let mut weight = 1.0;
    let mut next = vec![0.0; total];
    let mut respawn_mass = vec![0.0; model.respawn.len() * nb];
    for _ in 0..length {
        next.iter_mut().for_each(|x| *x = 0.0);
        respawn_mass.iter_mut().for_each(|x| *x = 0.0);
        let mut step = [0.0; 2];
        for (i, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let (s, b) = (i / nb, i % nb);
            let ja = actions[i] as usize;
            let r = model.rewards[s * JOINT + ja];
            step[0] += p * r[0];
            step[1] += p * r[1];
            let (lo, hi, w_hi) = grid.split(decay * grid.center(b) + r[0] - r[1]);
            let nx = model.next[s * JOINT + ja];
            let (target, base) = if nx & RESPAWN != 0 {
                (&mut respawn_mass, (nx & !RESPAWN) as usize * nb)
            } else {
                (&mut next, nx as usize * nb)
            };
            target[base + lo] += p * (1.0 - w_hi);
            target[base + hi] += p * w_hi;
        }
        for (bl, set) in model.respawn.iter().enumerate() {
            for b in 0..nb {
                let mass = respawn_mass[bl * nb + b];
                if mass > 0.0 {
                    let share = mass / set.len() as f64;
                    for &s in set {
                        next[s as usize * nb + b] += share;
                    }
                }
            }
        }
        for i in 0..2 {
            sums[i] += step[i];
            discounted[i] += weight * step[i];
        }
        weight *= gamma;
        core::mem::swap(&mut dist, &mut next);
    }
    let scale = 1.0 / (length as f64 * (1.0 - gamma));
    EpisodeValues { average: [sums[0] * scale, sums[1] * scale], discounted }
}
