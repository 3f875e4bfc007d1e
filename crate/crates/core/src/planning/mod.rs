//! Exact cooperative planning, tabular best responses and minimax values.

mod grid;
mod schedule;
mod tabular;

pub use grid::{
    best_response_value, episode_values, ledger_plan, policy_values, weighted_plan, EpisodeValues, GridModel,
    LedgerGrid, Successor, STATE_LIMIT,
};
pub use schedule::{optimal_schedule, Schedule};
pub use tabular::{
    env_fingerprint, exact_best_response_value, minimax, q_learning_best_response, state_count, state_index,
    tabular_policy_values, MinimaxResult, Objective, QLearningConfig, TabularAgent, TabularPolicy,
};

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Agent, EnvSpec, EnvState, GridConfig, GridState, JointAction, Seat, MOVES};
use crate::welfare::{evaluate_welfare, FeasibleSet, WelfareKind, WelfareSpec};
use crate::Rng;

/// Ledger-augmented part of an inequity-averse grid plan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerPlan {
    pub grid: LedgerGrid,
    /// Per-step decay of the ledger, `gamma * lambda`.
    pub decay: f64,
}

/// Deterministic joint policy on a gridworld, keyed by canonical state (and
/// ledger bucket for inequity-averse plans).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPlan {
    pub fingerprint: String,
    pub actions: Vec<u8>,
    pub ledger: Option<LedgerPlan>,
    /// Expected episode values (mean reward in value units) in self-play.
    pub values: [f64; 2],
}

impl GridPlan {
    pub fn joint_action(&self, config: &GridConfig, state: &GridState, gap: f64) -> JointAction {
        let s = config.canonical_index(state);
        let idx = match &self.ledger {
            None => s,
            Some(l) => s * l.grid.buckets + l.grid.nearest(gap),
        };
        JointAction::from_index(self.actions[idx] as usize, MOVES)
    }
}

/// A welfare-optimal joint policy: what both seats play under a convention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointPlan {
    Schedule { schedule: Schedule, values: [f64; 2] },
    Grid(GridPlan),
}

impl JointPlan {
    /// Joint action prescribed at `state`; `gap` is the running ledger
    /// `e1 - e2`, ignored by plans that do not track it.
    pub fn joint_action(&self, env: &EnvSpec, state: &EnvState, gap: f64) -> JointAction {
        match (self, env, state) {
            (JointPlan::Schedule { schedule, .. }, _, EnvState::Matrix(m)) => schedule.joint_action(m),
            (JointPlan::Grid(plan), EnvSpec::Grid(cfg), EnvState::Grid(s)) => plan.joint_action(cfg, s, gap),
            _ => JointAction::new(0, 0),
        }
    }

    pub fn values(&self) -> [f64; 2] {
        match self {
            JointPlan::Schedule { values, .. } => *values,
            JointPlan::Grid(p) => p.values,
        }
    }

    pub fn ledger_decay(&self) -> Option<f64> {
        match self {
            JointPlan::Grid(GridPlan { ledger: Some(l), .. }) => Some(l.decay),
            _ => None,
        }
    }

    /// Check that the plan was built for `env`.
    pub fn check_env(&self, env: &EnvSpec) -> Result<()> {
        match self {
            JointPlan::Schedule { .. } if env.is_matrix() => Ok(()),
            JointPlan::Grid(p) if p.fingerprint == env_fingerprint(env) => Ok(()),
            _ => Err(Error::EnvironmentMismatch("plan was built for a different environment".into())),
        }
    }
}

/// Running inequity ledger `e1 - e2` with exponential decay.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Ledger {
    pub gap: f64,
    pub decay: f64,
}

impl Ledger {
    pub fn new(decay: f64) -> Self {
        Ledger { gap: 0.0, decay }
    }

    pub fn update(&mut self, rewards: [f64; 2]) {
        self.gap = self.decay * self.gap + rewards[0] - rewards[1];
    }
}

/// Plays one seat of a joint plan.
#[derive(Clone, Debug)]
pub struct PlanAgent {
    pub plan: Arc<JointPlan>,
    pub seat: Seat,
    ledger: Ledger,
}

impl PlanAgent {
    pub fn new(plan: Arc<JointPlan>, seat: Seat) -> Self {
        let decay = plan.ledger_decay().unwrap_or(0.0);
        PlanAgent { plan, seat, ledger: Ledger::new(decay) }
    }

    /// Start from a running ledger value instead of zero.
    pub fn with_gap(mut self, gap: f64) -> Self {
        self.ledger.gap = gap;
        self
    }
}

impl Agent for PlanAgent {
    fn reset(&mut self) {
        self.ledger.gap = 0.0;
    }

    fn act(&mut self, env: &EnvSpec, state: &EnvState, _rng: &mut Rng) -> usize {
        self.plan.joint_action(env, state, self.ledger.gap).get(self.seat)
    }

    fn observe(&mut self, _env: &EnvSpec, _state: &EnvState, _action: JointAction, rewards: [f64; 2], _next: &EnvState) {
        self.ledger.update(rewards);
    }
}

/// One point of the weighted-utilitarian sweep on a gridworld.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub alpha: f64,
    pub actions: Vec<u8>,
    pub values: EpisodeValues,
}

/// Exact planner for one gridworld: the transition model plus the sweep of
/// weighted-utilitarian joint policies that spans its Pareto front.
#[derive(Clone, Debug)]
pub struct GridPlanner {
    pub env: EnvSpec,
    pub model: GridModel,
    pub gamma: f64,
    pub sweep: Vec<SweepPoint>,
}

/// Weight steps of the sweep; `alpha` is the weight on red's reward.
pub const SWEEP_STEPS: usize = 20;

impl GridPlanner {
    pub fn new(config: &GridConfig, gamma: f64) -> Result<Self> {
        let model = GridModel::new(config)?;
        let length = config.episode_length;
        let sweep = (0..=SWEEP_STEPS)
            .map(|i| {
                let alpha = i as f64 / SWEEP_STEPS as f64;
                let actions = weighted_plan(&model, [alpha, 1.0 - alpha], gamma);
                let values = episode_values(&model, |s| actions[s] as usize, length, gamma);
                SweepPoint { alpha, actions, values }
            })
            .collect();
        Ok(GridPlanner { env: EnvSpec::Grid(config.clone()), model, gamma, sweep })
    }

    /// Achievable episode values: the sweep's points plus the all-zero profile.
    pub fn feasible_set(&self) -> FeasibleSet {
        let mut pts: Vec<[f64; 2]> = self.sweep.iter().map(|p| p.values.average).collect();
        pts.push([0.0, 0.0]);
        FeasibleSet::new(pts).expect("sweep values are finite")
    }

    pub fn plan(&self, w: &WelfareSpec) -> Result<GridPlan> {
        w.validate()?;
        let config = self.env.grid().expect("grid planner holds a grid environment");
        let fingerprint = env_fingerprint(&self.env);
        match w.kind {
            WelfareKind::Utilitarian => {
                let actions = weighted_plan(&self.model, [1.0, 1.0], self.gamma);
                let values = episode_values(&self.model, |s| actions[s] as usize, config.episode_length, self.gamma);
                Ok(GridPlan { fingerprint, actions, ledger: None, values: values.average })
            }
            WelfareKind::InequityAverse => {
                let ia = w.ia_params();
                let grid = LedgerGrid::default();
                let actions = ledger_plan(&self.model, ia.beta, ia.lambda, self.gamma, grid)?;
                let ledger = LedgerPlan { grid, decay: self.gamma * ia.lambda };
                let values = ledger_episode_values(&self.model, &actions, ledger, config.episode_length, self.gamma);
                Ok(GridPlan { fingerprint, actions, ledger: Some(ledger), values: values.average })
            }
            _ => {
                let set = self.feasible_set();
                let mut best: Option<(&SweepPoint, f64)> = None;
                for p in &self.sweep {
                    let v = p.values.average;
                    if v[0] < w.disagreement[0] || v[1] < w.disagreement[1] {
                        continue;
                    }
                    let Ok(score) = evaluate_welfare(w, v, &set) else { continue };
                    let better = match best {
                        None => true,
                        Some((_, b)) => score > b + 1e-9 * (1.0 + crate::math::abs(b)),
                    };
                    if better {
                        best = Some((p, score));
                    }
                }
                let (p, _) = best.ok_or_else(|| Error::Degenerate(alloc::format!("no admissible sweep point for {}", w.kind)))?;
                Ok(GridPlan { fingerprint, actions: p.actions.clone(), ledger: None, values: p.values.average })
            }
        }
    }
}

/// Episode values of a ledger plan, propagating the joint distribution over
/// (state, ledger bucket) with the planner's stochastic rounding.
pub fn ledger_episode_values(
    model: &GridModel,
    actions: &[u8],
    ledger: LedgerPlan,
    length: usize,
    gamma: f64,
) -> EpisodeValues {
    grid::ledger_episode_values(model, actions, ledger.grid, ledger.decay, length, gamma)
}

/// The welfare-optimal cooperative joint policy of `env` under `w`.
pub fn welfare_optimal_joint_policy(env: &EnvSpec, w: &WelfareSpec, gamma: f64) -> Result<JointPlan> {
    match env {
        EnvSpec::Matrix(game) => {
            let (schedule, values) = optimal_schedule(game, w, gamma)?;
            Ok(JointPlan::Schedule { schedule, values })
        }
        EnvSpec::Grid(cfg) => Ok(JointPlan::Grid(GridPlanner::new(cfg, gamma)?.plan(w)?)),
    }
}

#[cfg(test)]
mod tests;
