//! Two-player environments, rollouts and the stage-game taxonomy.

mod grid;
mod matrix;

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::{seeded_rng, Rng};

pub use grid::{
    Coin, CoinColor, CoinKind, GridConfig, GridKind, GridState, Resolution, MOVES, MOVE_NAMES,
};
pub use matrix::{classify_game, GameClass, MatrixGame};

/// Player index: 0 is the row player (red), 1 the column player (blue).
pub type Seat = usize;

pub fn other(seat: Seat) -> Seat {
    1 - seat
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointAction {
    pub a1: usize,
    pub a2: usize,
}

impl JointAction {
    pub fn new(a1: usize, a2: usize) -> Self {
        JointAction { a1, a2 }
    }

    pub fn from_index(index: usize, actions: usize) -> Self {
        JointAction::new(index / actions, index % actions)
    }

    pub fn index(self, actions: usize) -> usize {
        self.a1 * actions + self.a2
    }

    pub fn get(self, seat: Seat) -> usize {
        if seat == 0 {
            self.a1
        } else {
            self.a2
        }
    }

    pub fn with(self, seat: Seat, action: usize) -> Self {
        if seat == 0 {
            JointAction::new(action, self.a2)
        } else {
            JointAction::new(self.a1, action)
        }
    }
}

/// State of an iterated matrix game: the previous joint action, the step
/// counter, and a public uniform signal both players observe (a shared
/// correlation device).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixState {
    pub prev: Option<JointAction>,
    pub t: usize,
    pub signal: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EnvState {
    Matrix(MatrixState),
    Grid(GridState),
}

impl EnvState {
    pub fn as_matrix(&self) -> Option<&MatrixState> {
        match self {
            EnvState::Matrix(m) => Some(m),
            EnvState::Grid(_) => None,
        }
    }

    pub fn as_grid(&self) -> Option<&GridState> {
        match self {
            EnvState::Grid(g) => Some(g),
            EnvState::Matrix(_) => None,
        }
    }
}

/// One of the bundled environments. Immutable and freely shareable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EnvSpec {
    Matrix(MatrixGame),
    Grid(GridConfig),
}

impl EnvSpec {
    pub fn ipd() -> Self {
        EnvSpec::Matrix(MatrixGame::ipd())
    }

    pub fn asym_bos() -> Self {
        EnvSpec::Matrix(MatrixGame::asym_bos())
    }

    pub fn coin_game() -> Self {
        EnvSpec::Grid(GridConfig::coin_game())
    }

    pub fn abcg() -> Self {
        EnvSpec::Grid(GridConfig::abcg())
    }

    pub fn name(&self) -> String {
        match self {
            EnvSpec::Matrix(g) => g.name.clone(),
            EnvSpec::Grid(g) => match g.kind {
                GridKind::CoinGame => "CG".into(),
                GridKind::Abcg => "ABCG".into(),
            },
        }
    }

    pub fn actions(&self) -> usize {
        match self {
            EnvSpec::Matrix(g) => g.actions,
            EnvSpec::Grid(_) => MOVES,
        }
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self, EnvSpec::Matrix(_))
    }

    pub fn matrix(&self) -> Option<&MatrixGame> {
        match self {
            EnvSpec::Matrix(g) => Some(g),
            EnvSpec::Grid(_) => None,
        }
    }

    pub fn grid(&self) -> Option<&GridConfig> {
        match self {
            EnvSpec::Grid(g) => Some(g),
            EnvSpec::Matrix(_) => None,
        }
    }

    /// Per-step reward profile of cooperation failure, used as the baseline
    /// of welfare gains and scores.
    pub fn disagreement_rewards(&self) -> [f64; 2] {
        match self {
            EnvSpec::Matrix(g) => g.disagreement_rewards(),
            EnvSpec::Grid(_) => [0.0, 0.0],
        }
    }

    pub fn default_episode_length(&self) -> usize {
        match self {
            EnvSpec::Matrix(_) => 20,
            EnvSpec::Grid(g) => g.episode_length,
        }
    }

    pub fn initial_state(&self, rng: &mut Rng) -> EnvState {
        match self {
            EnvSpec::Matrix(_) => EnvState::Matrix(MatrixState {
                prev: None,
                t: 0,
                signal: rng.random(),
            }),
            EnvSpec::Grid(g) => EnvState::Grid(g.initial_state(rng)),
        }
    }

    /// Advance one step. Deterministic given the state, the action and the
    /// random source's state.
    pub fn step(&self, state: &EnvState, action: JointAction, rng: &mut Rng) -> Result<(EnvState, [f64; 2])> {
        match (self, state) {
            (EnvSpec::Matrix(g), EnvState::Matrix(m)) => {
                g.validate(action)?;
                let rewards = g.payoff(action);
                let next = MatrixState {
                    prev: Some(action),
                    t: m.t + 1,
                    signal: rng.random(),
                };
                Ok((EnvState::Matrix(next), rewards))
            }
            (EnvSpec::Grid(g), EnvState::Grid(s)) => {
                let (next, rewards) = g.step(s, action, rng)?;
                Ok((EnvState::Grid(next), rewards))
            }
            _ => Err(crate::Error::EnvironmentMismatch(
                "state does not belong to this environment".into(),
            )),
        }
    }

    /// Rewards of a joint action at a state, without advancing the state.
    pub fn immediate_rewards(&self, state: &EnvState, action: JointAction) -> [f64; 2] {
        match (self, state) {
            (EnvSpec::Matrix(g), _) => g.payoff(action),
            (EnvSpec::Grid(g), EnvState::Grid(s)) => g.immediate_rewards(s, action),
            (EnvSpec::Grid(_), EnvState::Matrix(_)) => [0.0, 0.0],
        }
    }
}

impl MatrixGame {
    /// Cooperation-failure rewards: the equilibrium payoff when the stage game
    /// has a single pure equilibrium (the prisoner's dilemma's mutual
    /// defection), otherwise the best miscoordination outcome.
    pub fn disagreement_rewards(&self) -> [f64; 2] {
        let eqs = self.pure_equilibria();
        if eqs.len() == 1 {
            return self.payoff(eqs[0]);
        }
        let mut best: Option<[f64; 2]> = None;
        for idx in 0..self.joint_actions() {
            let ja = JointAction::from_index(idx, self.actions);
            if eqs.contains(&ja) {
                continue;
            }
            let p = self.payoff(ja);
            best = Some(match best {
                None => p,
                Some(b) => [b[0].max(p[0]), b[1].max(p[1])],
            });
        }
        best.unwrap_or([0.0, 0.0])
    }
}

/// A decision maker occupying one seat of an environment.
pub trait Agent {
    /// Start of a new episode.
    fn reset(&mut self) {}

    fn act(&mut self, env: &EnvSpec, state: &EnvState, rng: &mut Rng) -> usize;

    /// Called after every step with the joint action and both rewards.
    fn observe(
        &mut self,
        _env: &EnvSpec,
        _state: &EnvState,
        _action: JointAction,
        _rewards: [f64; 2],
        _next: &EnvState,
    ) {
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: EnvState,
    pub action: JointAction,
    pub rewards: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub discount: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn discounted_values(&self) -> [f64; 2] {
        let mut v = [0.0; 2];
        let mut weight = 1.0;
        for step in &self.steps {
            v[0] += weight * step.rewards[0];
            v[1] += weight * step.rewards[1];
            weight *= self.discount;
        }
        v
    }

    pub fn mean_rewards(&self) -> [f64; 2] {
        let n = self.steps.len().max(1) as f64;
        let mut v = [0.0; 2];
        for step in &self.steps {
            v[0] += step.rewards[0];
            v[1] += step.rewards[1];
        }
        [v[0] / n, v[1] / n]
    }

    /// Mean per-step reward expressed in discounted-value units, i.e. the
    /// value of a stationary stream with the same average.
    pub fn average_values(&self) -> [f64; 2] {
        let m = self.mean_rewards();
        let scale = 1.0 / (1.0 - self.discount);
        [m[0] * scale, m[1] * scale]
    }

    pub fn rewards(&self, seat: Seat) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(move |s| s.rewards[seat])
    }
}

/// Play `length` steps from a fresh episode seeded with `seed`.
pub fn rollout(
    env: &EnvSpec,
    agents: [&mut dyn Agent; 2],
    length: usize,
    seed: u64,
    discount: f64,
) -> Result<Trajectory> {
    if length == 0 {
        return Err(crate::Error::InvalidParameter("rollout length must be at least 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let start = env.initial_state(&mut rng);
    let [a, b] = agents;
    a.reset();
    b.reset();
    rollout_from(env, start, [a, b], length, &mut rng, discount)
}

/// Play `length` steps from `start` without resetting the agents.
pub fn rollout_from(
    env: &EnvSpec,
    start: EnvState,
    agents: [&mut dyn Agent; 2],
    length: usize,
    rng: &mut Rng,
    discount: f64,
) -> Result<Trajectory> {
    let [a, b] = agents;
    let mut state = start;
    let mut steps = Vec::with_capacity(length);
    for _ in 0..length {
        let action = JointAction::new(a.act(env, &state, rng), b.act(env, &state, rng));
        let (next, rewards) = env.step(&state, action, rng)?;
        a.observe(env, &state, action, rewards, &next);
        b.observe(env, &state, action, rewards, &next);
        steps.push(Step { state, action, rewards });
        state = next;
    }
    Ok(Trajectory { steps, discount })
}

/// Plays the same action forever.
#[derive(Clone, Copy, Debug)]
pub struct ConstantAgent(pub usize);

impl Agent for ConstantAgent {
    fn act(&mut self, _env: &EnvSpec, _state: &EnvState, _rng: &mut Rng) -> usize {
        self.0
    }
}

/// Uniformly random play.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformAgent;

impl Agent for UniformAgent {
    fn act(&mut self, env: &EnvSpec, _state: &EnvState, rng: &mut Rng) -> usize {
        rng.random_range(0..env.actions())
    }
}
