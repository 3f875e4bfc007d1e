//! Tabular policies, Q-learning best responses and pure minimax values.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::grid::{best_response_value, policy_values, GridModel};
use crate::error::{Error, Result};
use crate::game::{other, Agent, EnvSpec, EnvState, JointAction, MatrixGame, Seat};
use crate::math::abs;
use crate::{seeded_rng, Rng};

/// Canonical description of an environment, stored with every policy so a
/// table cannot be loaded against a different environment.
pub fn env_fingerprint(env: &EnvSpec) -> String {
    match env {
        EnvSpec::Matrix(g) => format!("matrix:{}:{:?}", g.name, g.payoffs),
        EnvSpec::Grid(c) => format!(
            "grid:{:?}:{}:{}:{}:{}:{:?}:{}:{}",
            c.kind,
            c.size,
            c.episode_length,
            c.pickup_reward,
            c.steal_penalty,
            c.coop_reward,
            c.disagreement_reward,
            c.respawn_timeout
        ),
    }
}

/// Number of tabular states: the previous joint action (or none) for matrix
/// games, the translation-canonical configuration for gridworlds.
pub fn state_count(env: &EnvSpec) -> usize {
    match env {
        EnvSpec::Matrix(g) => g.joint_actions() + 1,
        EnvSpec::Grid(c) => c.canonical_count(),
    }
}

pub fn state_index(env: &EnvSpec, state: &EnvState) -> usize {
    match (env, state) {
        (EnvSpec::Matrix(g), EnvState::Matrix(m)) => m.prev.map_or(0, |p| 1 + p.index(g.actions)),
        (EnvSpec::Grid(c), EnvState::Grid(s)) => c.canonical_index(s),
        _ => 0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub fingerprint: String,
    pub seat: Seat,
    pub actions: usize,
    /// Row-major `states × actions` action distributions.
    pub table: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(env: &EnvSpec, seat: Seat, table: Vec<f64>) -> Result<Self> {
        let policy = TabularPolicy { fingerprint: env_fingerprint(env), seat, actions: env.actions(), table };
        policy.validate(env)?;
        Ok(policy)
    }

    /// Deterministic policy from one action per state.
    pub fn deterministic(env: &EnvSpec, seat: Seat, choice: impl Fn(usize) -> usize) -> Self {
        let n = env.actions();
        let states = state_count(env);
        let mut table = vec![0.0; states * n];
        for s in 0..states {
            table[s * n + choice(s)] = 1.0;
        }
        TabularPolicy { fingerprint: env_fingerprint(env), seat, actions: n, table }
    }

    pub fn constant(env: &EnvSpec, seat: Seat, action: usize) -> Self {
        Self::deterministic(env, seat, |_| action)
    }

    pub fn states(&self) -> usize {
        self.table.len() / self.actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.table[s * self.actions..(s + 1) * self.actions]
    }

    /// Most likely action, lowest index on ties.
    pub fn greedy(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn validate(&self, env: &EnvSpec) -> Result<()> {
        if self.fingerprint != env_fingerprint(env) {
            return Err(Error::EnvironmentMismatch(format!(
                "policy built for `{}`, not `{}`",
                self.fingerprint,
                env_fingerprint(env)
            )));
        }
        if self.actions != env.actions() || self.table.len() != state_count(env) * self.actions {
            return Err(Error::EnvironmentMismatch("policy table has the wrong shape".into()));
        }
        for s in 0..self.states() {
            let row = self.row(s);
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || abs(sum - 1.0) > 1e-9 {
                return Err(Error::InvalidParameter(format!("row {s} is not a probability vector")));
            }
        }
        Ok(())
    }

    fn sample(&self, s: usize, rng: &mut Rng) -> usize {
        let row = self.row(s);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        self.greedy(s)
    }
}

/// Plays a tabular policy, sampling from its rows.
#[derive(Clone, Debug)]
pub struct TabularAgent {
    pub policy: TabularPolicy,
}

impl Agent for TabularAgent {
    fn act(&mut self, env: &EnvSpec, state: &EnvState, rng: &mut Rng) -> usize {
        let s = state_index(env, state);
        let row = self.policy.row(s);
        if row.iter().any(|&p| p == 1.0) {
            return self.policy.greedy(s);
        }
        self.policy.sample(s, rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MaximizeOwn,
    MinimizeOpponent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QLearningConfig {
    /// Training episodes; 0 uses the environment's default (5000 for matrix
    /// games, 4000 for gridworlds).
    pub episodes: usize,
    /// Steps per training episode; 0 uses the environment's default.
    pub episode_length: usize,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub gamma: f64,
    /// Matrix games: start each episode from a uniformly drawn previous joint
    /// action (or none) so every table row gets trained.
    pub exploring_starts: bool,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        QLearningConfig {
            episodes: 0,
            episode_length: 0,
            learning_rate: 0.1,
            epsilon_start: 0.3,
            epsilon_end: 0.05,
            gamma: crate::DEFAULT_GAMMA,
            exploring_starts: true,
        }
    }
}

/// Epsilon-greedy tabular Q-learning for `seat` against a fixed opponent.
/// Returns the greedy policy of the learned table.
pub fn q_learning_best_response(
    env: &EnvSpec,
    seat: Seat,
    opponent: &mut dyn Agent,
    objective: Objective,
    config: &QLearningConfig,
    seed: u64,
) -> Result<TabularPolicy> {
    if !(config.learning_rate > 0.0 && config.learning_rate <= 1.0) {
        return Err(Error::InvalidParameter("learning rate must be in (0, 1]".into()));
    }
    let n = env.actions();
    let states = state_count(env);
    let length = if config.episode_length == 0 { env.default_episode_length() } else { config.episode_length };
    let episodes = match (config.episodes, env) {
        (0, EnvSpec::Matrix(_)) => 5000,
        (0, EnvSpec::Grid(_)) => 4000,
        (n, _) => n,
    };
    let mut q = vec![0.0; states * n];
    let mut rng = seeded_rng(seed);
    let max_row = |q: &[f64], s: usize| q[s * n..(s + 1) * n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let argmax_row = |q: &[f64], s: usize| {
        let row = &q[s * n..(s + 1) * n];
        let mut best = 0;
        for a in 1..n {
            if row[a] > row[best] {
                best = a;
            }
        }
        best
    };
    for ep in 0..episodes {
        let frac = if episodes > 1 { ep as f64 / (episodes - 1) as f64 } else { 1.0 };
        let eps = config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac;
        let mut state = env.initial_state(&mut rng);
        if let (true, EnvSpec::Matrix(g), EnvState::Matrix(m)) = (config.exploring_starts, env, &mut state) {
            let k = rng.random_range(0..=g.joint_actions());
            m.prev = (k > 0).then(|| JointAction::from_index(k - 1, g.actions));
        }
        opponent.reset();
        for _ in 0..length {
            let s = state_index(env, &state);
            let own = if rng.random::<f64>() < eps { rng.random_range(0..n) } else { argmax_row(&q, s) };
            let theirs = opponent.act(env, &state, &mut rng);
            let action = if seat == 0 { JointAction::new(own, theirs) } else { JointAction::new(theirs, own) };
            let (next, rewards) = env.step(&state, action, &mut rng)?;
            opponent.observe(env, &state, action, rewards, &next);
            let r = match objective {
                Objective::MaximizeOwn => rewards[seat],
                Objective::MinimizeOpponent => -rewards[other(seat)],
            };
            let target = r + config.gamma * max_row(&q, state_index(env, &next));
            let cell = &mut q[s * n + own];
            *cell += config.learning_rate * (target - *cell);
            state = next;
        }
    }
    Ok(TabularPolicy::deterministic(env, seat, |s| argmax_row(&q, s)))
}

fn matrix_next(game: &MatrixGame, a1: usize, a2: usize) -> usize {
    1 + JointAction::new(a1, a2).index(game.actions)
}

const EVAL_SWEEPS: usize = 1500;

/// Exact discounted value of a tabular best response for `seat` against
/// `opponent`, from the initial state. Gridworld opponents are taken at
/// their greedy action.
pub fn exact_best_response_value(env: &EnvSpec, seat: Seat, opponent: &TabularPolicy, gamma: f64) -> Result<f64> {
    opponent.validate(env)?;
    match env {
        EnvSpec::Matrix(g) => {
            let n = g.actions;
            let states = g.joint_actions() + 1;
            let mut v = vec![0.0; states];
            for _ in 0..EVAL_SWEEPS {
                let mut next = vec![0.0; states];
                for (s, slot) in next.iter_mut().enumerate() {
                    let row = opponent.row(s);
                    *slot = (0..n)
                        .map(|own| {
                            (0..n)
                                .map(|b| {
                                    let (a1, a2) = if seat == 0 { (own, b) } else { (b, own) };
                                    let r = g.payoff(JointAction::new(a1, a2))[seat];
                                    row[b] * (r + gamma * v[matrix_next(g, a1, a2)])
                                })
                                .sum::<f64>()
                        })
                        .fold(f64::NEG_INFINITY, f64::max);
                }
                v = next;
            }
            Ok(v[0])
        }
        EnvSpec::Grid(c) => {
            let model = GridModel::new(c)?;
            Ok(best_response_value(&model, seat, |s| opponent.greedy(s), gamma))
        }
    }
}

/// Exact discounted values of a pair of tabular policies from the initial
/// state (gridworld policies at their greedy actions).
pub fn tabular_policy_values(env: &EnvSpec, policies: [&TabularPolicy; 2], gamma: f64) -> Result<[f64; 2]> {
    for p in policies {
        p.validate(env)?;
    }
    match env {
        EnvSpec::Matrix(g) => {
            let n = g.actions;
            let states = g.joint_actions() + 1;
            let mut v = vec![[0.0; 2]; states];
            for _ in 0..EVAL_SWEEPS {
                let mut next = vec![[0.0; 2]; states];
                for (s, slot) in next.iter_mut().enumerate() {
                    let (r1, r2) = (policies[0].row(s), policies[1].row(s));
                    for a1 in 0..n {
                        for a2 in 0..n {
                            let p = r1[a1] * r2[a2];
                            if p == 0.0 {
                                continue;
                            }
                            let r = g.payoff(JointAction::new(a1, a2));
                            let cont = v[matrix_next(g, a1, a2)];
                            slot[0] += p * (r[0] + gamma * cont[0]);
                            slot[1] += p * (r[1] + gamma * cont[1]);
                        }
                    }
                }
                v = next;
            }
            Ok(v[0])
        }
        EnvSpec::Grid(c) => {
            let model = GridModel::new(c)?;
            let n = crate::game::MOVES;
            Ok(policy_values(&model, |s| policies[0].greedy(s) * n + policies[1].greedy(s), gamma))
        }
    }
}

/// Pure-action minimax value of one player in a stage game.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaxResult {
    pub per_step: f64,
    pub discounted: f64,
    /// The opponent's action that holds the player down.
    pub minimizing_action: usize,
    /// The player's best reply to it.
    pub maximizing_response: usize,
}

/// `min over opponent actions of max over own actions of r_player`.
pub fn minimax(game: &MatrixGame, player: Seat, gamma: f64) -> MinimaxResult {
    let n = game.actions;
    let mut best: Option<MinimaxResult> = None;
    for b in 0..n {
        let (mut top, mut reply) = (f64::NEG_INFINITY, 0);
        for a in 0..n {
            let ja = if player == 0 { JointAction::new(a, b) } else { JointAction::new(b, a) };
            let r = game.payoff(ja)[player];
            if r > top {
                top = r;
                reply = a;
            }
        }
        if best.is_none_or(|m| top < m.per_step) {
            best = Some(MinimaxResult {
                per_step: top,
                discounted: top / (1.0 - gamma),
                minimizing_action: b,
                maximizing_response: reply,
            });
        }
    }
    best.expect("games have at least one action")
}
