//! Approximate Markov tit-for-tat with a welfare-optimal cooperative plan,
//! and its norm-adaptive extension over a set of welfare functions.
//!
//! An [`AmTftAgent`] follows its seat of the cooperative plan, accumulates a
//! debit from the opponent's gains from deviating, and once the debit
//! crosses a threshold punishes for just long enough to cost the opponent
//! `alpha` times the debit. A [`NormAdaptiveAgent`] first asks whether the
//! opponent is simply following another welfare function; if that function
//! is one it also accepts, it resamples its own instead of punishing.

mod detect;
mod norm;

pub use detect::{detect_normative_disagreement, Verdict};
pub use norm::{check_trace, Norm};

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{other, rollout_from, Agent, EnvSpec, EnvState, JointAction, Seat};
use crate::planning::{
    env_fingerprint, q_learning_best_response, state_index, welfare_optimal_joint_policy, JointPlan, Ledger,
    Objective, PlanAgent, QLearningConfig, TabularAgent, TabularPolicy,
};
use crate::welfare::{classify_convention, WelfareKind, WelfareSpec, CONVENTION_TOLERANCE};
use crate::{seeded_rng, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmTftConfig {
    pub gamma: f64,
    /// Debit (reward units) above which punishment starts.
    pub debit_threshold: f64,
    /// Punishment must cost the opponent `alpha` times the debit.
    pub alpha: f64,
    pub punish_rollouts: usize,
    pub rollout_length: usize,
    pub q_learning: QLearningConfig,
    /// Extra rounds of alternating best responses refining the punishment
    /// policy against an opponent that best-responds to it.
    pub refine_rounds: usize,
    /// Consecutive discarded training runs tolerated before giving up.
    pub max_discards: usize,
}

impl Default for AmTftConfig {
    fn default() -> Self {
        AmTftConfig {
            gamma: crate::DEFAULT_GAMMA,
            debit_threshold: 0.5,
            alpha: 2.0,
            punish_rollouts: 8,
            rollout_length: 20,
            q_learning: QLearningConfig::default(),
            refine_rounds: 0,
            max_discards: 5,
        }
    }
}

impl AmTftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.debit_threshold >= 0.0) || !(self.alpha > 0.0) {
            return Err(Error::InvalidParameter("debit threshold must be >= 0 and alpha > 0".into()));
        }
        if self.punish_rollouts == 0 || self.rollout_length == 0 {
            return Err(Error::InvalidParameter("punishment rollouts need a positive count and length".into()));
        }
        Ok(())
    }
}

/// Everything one amTFT(w) training run produces: the cooperative joint
/// plan and a punishment policy for each seat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmTftBundle {
    pub fingerprint: String,
    pub welfare: WelfareSpec,
    pub plan: Arc<JointPlan>,
    pub punish: [TabularPolicy; 2],
    pub seed: u64,
    /// Training runs thrown away before this one.
    pub discards: usize,
}

impl AmTftBundle {
    pub fn check_env(&self, env: &EnvSpec) -> Result<()> {
        if self.fingerprint != env_fingerprint(env) {
            return Err(Error::EnvironmentMismatch(format!("bundle trained on `{}`", self.fingerprint)));
        }
        self.plan.check_env(env)
    }
}

/// Train amTFT(w): plan the cooperative policy, then learn each seat's
/// punishment against the other seat's cooperative play.
pub fn train_amtft(env: &EnvSpec, w: &WelfareSpec, seed: u64, config: &AmTftConfig) -> Result<AmTftBundle> {
    let plan = Arc::new(welfare_optimal_joint_policy(env, w, config.gamma)?);
    train_amtft_with_plan(env, w, plan, seed, config)
}

/// As [`train_amtft`] with a cooperative plan computed beforehand (planning
/// is deterministic, so runs of one welfare function can share it).
pub fn train_amtft_with_plan(
    env: &EnvSpec,
    w: &WelfareSpec,
    plan: Arc<JointPlan>,
    seed: u64,
    config: &AmTftConfig,
) -> Result<AmTftBundle> {
    config.validate()?;
    plan.check_env(env)?;
    let mut discards = 0;
    loop {
        let run_seed = seed.wrapping_add(1_000_003 * discards as u64);
        if !discard_run(env, w, &plan) {
            let punish = [0, 1].map(|seat| train_punishment(env, seat, &plan, run_seed, config));
            let [p0, p1] = punish;
            return Ok(AmTftBundle {
                fingerprint: env_fingerprint(env),
                welfare: *w,
                plan,
                punish: [p0?, p1?],
                seed: run_seed,
                discards,
            });
        }
        discards += 1;
        if discards > config.max_discards {
            return Err(Error::TrainingAborted(format!(
                "{} consecutive {} runs settled on the egalitarian convention",
                discards,
                w.label()
            )));
        }
    }
}

/// A utilitarian run of the asymmetric Battle of the Sexes whose self-play
/// lands on the egalitarian outcome is thrown away.
fn discard_run(env: &EnvSpec, w: &WelfareSpec, plan: &JointPlan) -> bool {
    let EnvSpec::Matrix(game) = env else { return false };
    if w.kind != WelfareKind::Utilitarian || game.name != "IAsymBoS" {
        return false;
    }
    let optima = [WelfareKind::Utilitarian, WelfareKind::Egalitarian].map(|k| {
        let spec = WelfareSpec::new(k, w.disagreement);
        let (_, v) = crate::planning::optimal_schedule(game, &spec, crate::DEFAULT_GAMMA).expect("bundled game");
        (String::from(k.label()), v)
    });
    classify_convention(plan.values(), &optima, CONVENTION_TOLERANCE).as_deref() == Some("egal")
}

fn train_punishment(env: &EnvSpec, seat: Seat, plan: &Arc<JointPlan>, seed: u64, config: &AmTftConfig) -> Result<TabularPolicy> {
    let q = &config.q_learning;
    let mut opponent = PlanAgent::new(plan.clone(), other(seat));
    let mut punish = q_learning_best_response(env, seat, &mut opponent, Objective::MinimizeOpponent, q, seed)?;
    for round in 0..config.refine_rounds {
        let round_seed = seed ^ ((round as u64 + 1) << 32);
        let mut punisher = TabularAgent { policy: punish.clone() };
        let reply = q_learning_best_response(env, other(seat), &mut punisher, Objective::MaximizeOwn, q, round_seed)?;
        let mut replier = TabularAgent { policy: reply };
        punish = q_learning_best_response(env, seat, &mut replier, Objective::MinimizeOpponent, q, round_seed + 1)?;
    }
    Ok(punish)
}

/// Per-step debit increment: the opponent's reward gain from its actual
/// action over its cooperative one, with our own action held at its
/// cooperative value; floored at zero.
pub fn debit_update(env: &EnvSpec, state: &EnvState, seat: Seat, coop: JointAction, opponent_actual: usize) -> f64 {
    let opp = other(seat);
    let actual = coop.with(opp, opponent_actual);
    let gain = env.immediate_rewards(state, actual)[opp] - env.immediate_rewards(state, coop)[opp];
    gain.max(0.0)
}

/// Smallest number of punishment steps whose simulated cost to the
/// opponent reaches `alpha * debit`, capped at the rollout length.
///
/// The cost is the opponent's summed reward under mutual cooperation minus
/// its summed reward while we punish and it keeps cooperating, averaged
/// over seeded rollouts from `state`.
#[allow(clippy::too_many_arguments)]
pub fn punishment_length(
    bundle: &AmTftBundle,
    seat: Seat,
    env: &EnvSpec,
    state: &EnvState,
    gap: f64,
    debit: f64,
    config: &AmTftConfig,
    seed: u64,
) -> Result<usize> {
    if debit <= 0.0 {
        return Ok(0);
    }
    let len = config.rollout_length;
    let opp = other(seat);
    let mut loss = vec![0.0; len];
    for r in 0..config.punish_rollouts {
        let run_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64);
        let baseline = {
            let mut me = PlanAgent::new(bundle.plan.clone(), seat).with_gap(gap);
            let mut them = PlanAgent::new(bundle.plan.clone(), opp).with_gap(gap);
            play_from(env, state, seat, &mut me, &mut them, len, run_seed)?
        };
        let punished = {
            let mut me = TabularAgent { policy: bundle.punish[seat].clone() };
            let mut them = PlanAgent::new(bundle.plan.clone(), opp).with_gap(gap);
            play_from(env, state, seat, &mut me, &mut them, len, run_seed)?
        };
        for t in 0..len {
            loss[t] += (baseline[t][opp] - punished[t][opp]) / config.punish_rollouts as f64;
        }
    }
    let target = config.alpha * debit;
    let mut acc = 0.0;
    for (k, l) in loss.iter().enumerate() {
        acc += l;
        if acc >= target - 1e-12 {
            return Ok(k + 1);
        }
    }
    Ok(len)
}

fn play_from(
    env: &EnvSpec,
    state: &EnvState,
    seat: Seat,
    me: &mut dyn Agent,
    them: &mut dyn Agent,
    len: usize,
    seed: u64,
) -> Result<Vec<[f64; 2]>> {
    let mut rng = seeded_rng(seed);
    let agents: [&mut dyn Agent; 2] = if seat == 0 { [me, them] } else { [them, me] };
    let tr = rollout_from(env, state.clone(), agents, len, &mut rng, crate::DEFAULT_GAMMA)?;
    Ok(tr.steps.iter().map(|s| s.rewards).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Cooperate,
    Punish { remaining: usize },
}

/// One step of an agent's audit log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: usize,
    pub state: EnvState,
    /// Ledger `e1 - e2` seen when acting.
    pub gap: f64,
    pub phase: Phase,
    /// Index of the active welfare function within the agent's set.
    pub welfare: usize,
    pub welfare_label: String,
    pub action: usize,
    /// Debit after observing the step.
    pub debit: f64,
    pub verdict: Option<Verdict>,
}

/// amTFT(w) playing one seat.
#[derive(Clone, Debug)]
pub struct AmTftAgent {
    pub bundle: Arc<AmTftBundle>,
    pub seat: Seat,
    pub config: AmTftConfig,
    debit: f64,
    phase: Phase,
    ledger: Ledger,
    t: usize,
    punishments: usize,
}

impl AmTftAgent {
    pub fn new(bundle: Arc<AmTftBundle>, seat: Seat, config: AmTftConfig) -> Self {
        let decay = bundle.plan.ledger_decay().unwrap_or(0.0);
        AmTftAgent { bundle, seat, config, debit: 0.0, phase: Phase::Cooperate, ledger: Ledger::new(decay), t: 0, punishments: 0 }
    }

    pub fn debit(&self) -> f64 {
        self.debit
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn gap(&self) -> f64 {
        self.ledger.gap
    }

    /// Number of punishment episodes started so far.
    pub fn punishments(&self) -> usize {
        self.punishments
    }

    /// Joint action the cooperative plan prescribes at `state`.
    pub fn coop_action(&self, env: &EnvSpec, state: &EnvState) -> JointAction {
        self.bundle.plan.joint_action(env, state, self.ledger.gap)
    }

    fn clear(&mut self) {
        self.debit = 0.0;
        self.phase = Phase::Cooperate;
    }

    /// Process a step; `accrue` gates whether deviations count as debit.
    fn step(&mut self, env: &EnvSpec, state: &EnvState, action: JointAction, rewards: [f64; 2], next: &EnvState, accrue: bool) {
        match self.phase {
            Phase::Cooperate => {
                if accrue {
                    let coop = self.coop_action(env, state);
                    self.debit += debit_update(env, state, self.seat, coop, action.get(other(self.seat)));
                }
            }
            Phase::Punish { remaining } => {
                if remaining <= 1 {
                    self.clear();
                } else {
                    self.phase = Phase::Punish { remaining: remaining - 1 };
                }
            }
        }
        self.ledger.update(rewards);
        self.t += 1;
        if self.phase == Phase::Cooperate && self.debit > self.config.debit_threshold {
            let seed = self.bundle.seed ^ (self.t as u64).wrapping_mul(0xA24B_AED4_963E_E407);
            let k = punishment_length(&self.bundle, self.seat, env, next, self.ledger.gap, self.debit, &self.config, seed)
                .unwrap_or(self.config.rollout_length);
            if k > 0 {
                self.phase = Phase::Punish { remaining: k };
                self.punishments += 1;
            } else {
                self.debit = 0.0;
            }
        }
    }

    fn choose(&self, env: &EnvSpec, state: &EnvState) -> usize {
        match self.phase {
            Phase::Cooperate => self.coop_action(env, state).get(self.seat),
            Phase::Punish { .. } => self.bundle.punish[self.seat].greedy(state_index(env, state)),
        }
    }
}

impl Agent for AmTftAgent {
    fn reset(&mut self) {
        self.clear();
        self.ledger.gap = 0.0;
        self.t = 0;
        self.punishments = 0;
    }

    fn act(&mut self, env: &EnvSpec, state: &EnvState, _rng: &mut Rng) -> usize {
        self.choose(env, state)
    }

    fn observe(&mut self, env: &EnvSpec, state: &EnvState, action: JointAction, rewards: [f64; 2], next: &EnvState) {
        self.step(env, state, action, rewards, next, true);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    /// Window length M.
    pub window: usize,
    /// Match fraction ρ needed to recognise a convention.
    pub threshold: f64,
    /// Minimum steps between resamples.
    pub dwell: usize,
    /// Conventions the agent can recognise in its opponent.
    pub library: Vec<WelfareKind>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            window: 10,
            threshold: 0.9,
            dwell: 5,
            library: vec![
                WelfareKind::Utilitarian,
                WelfareKind::Egalitarian,
                WelfareKind::Nash,
                WelfareKind::InequityAverse,
            ],
        }
    }
}

/// A recognisable convention: a welfare function and its cooperative plan.
#[derive(Clone, Debug)]
pub struct Convention {
    pub welfare: WelfareSpec,
    pub plan: Arc<JointPlan>,
}

/// amTFT(W): norm-adaptive amTFT over a welfare set `W`.
#[derive(Clone, Debug)]
pub struct NormAdaptiveAgent {
    pub own: Vec<Arc<AmTftBundle>>,
    pub library: Vec<Convention>,
    pub detection: DetectionConfig,
    /// Resampling weights over `own`; uniform when empty.
    pub weights: Vec<f64>,
    /// Welfare function to start from; sampled when `None`.
    pub initial: Option<usize>,
    seat: Seat,
    config: AmTftConfig,
    seed: u64,
    rng: Rng,
    current: usize,
    inner: AmTftAgent,
    library_ledgers: Vec<Ledger>,
    window: VecDeque<Vec<bool>>,
    since_resample: usize,
    resamples: usize,
    t: usize,
    last_verdict: Option<Verdict>,
    trace: Option<Vec<TraceEntry>>,
}

impl NormAdaptiveAgent {
    /// `own` must be non-empty; every own welfare function is added to the
    /// recognition library if absent. Own conventions are moved to the front
    /// of the library, so an opponent whose play fits both an own and a
    /// foreign convention with the same plan is read as the own one.
    pub fn new(
        own: Vec<Arc<AmTftBundle>>,
        mut library: Vec<Convention>,
        seat: Seat,
        config: AmTftConfig,
        detection: DetectionConfig,
        seed: u64,
    ) -> Result<Self> {
        if own.is_empty() {
            return Err(Error::InvalidParameter("welfare set W is empty".into()));
        }
        for b in &own {
            if !library.iter().any(|c| c.welfare == b.welfare) {
                library.push(Convention { welfare: b.welfare, plan: b.plan.clone() });
            }
        }
        library.sort_by_key(|c| !own.iter().any(|b| b.welfare == c.welfare));
        let library_ledgers = library.iter().map(|c| Ledger::new(c.plan.ledger_decay().unwrap_or(0.0))).collect();
        let inner = AmTftAgent::new(own[0].clone(), seat, config);
        let mut agent = NormAdaptiveAgent {
            own,
            library,
            detection,
            weights: Vec::new(),
            initial: None,
            seat,
            config,
            seed,
            rng: seeded_rng(seed),
            current: 0,
            inner,
            library_ledgers,
            window: VecDeque::new(),
            since_resample: 0,
            resamples: 0,
            t: 0,
            last_verdict: None,
            trace: None,
        };
        agent.reset();
        Ok(agent)
    }

    /// Use a different seed for the agent's own randomness from the next reset.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn record_trace(&mut self, on: bool) {
        self.trace = on.then(Vec::new);
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    pub fn current_welfare(&self) -> &WelfareSpec {
        &self.own[self.current].welfare
    }

    pub fn current_index(&self) -> usize {
        self.current
    }

    pub fn resamples(&self) -> usize {
        self.resamples
    }

    pub fn inner(&self) -> &AmTftAgent {
        &self.inner
    }

    fn sample_index(&mut self) -> usize {
        let n = self.own.len();
        if n == 1 {
            return 0;
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.len() != n || !(total > 0.0) {
            return self.rng.random_range(0..n);
        }
        let mut u = self.rng.random::<f64>() * total;
        for (i, &w) in self.weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        n - 1
    }

    fn switch_to(&mut self, idx: usize) {
        let gap = self.inner.ledger.gap;
        self.current = idx;
        let mut inner = AmTftAgent::new(self.own[idx].clone(), self.seat, self.config);
        // The ledger reflects the shared reward history, not the convention.
        inner.ledger.gap = gap;
        inner.t = self.t;
        self.inner = inner;
        self.window.clear();
        self.since_resample = 0;
    }

    fn library_index(&self, w: &WelfareSpec) -> Option<usize> {
        self.library.iter().position(|c| c.welfare == *w)
    }

    fn own_index(&self, w: &WelfareSpec) -> Option<usize> {
        self.own.iter().position(|b| b.welfare == *w)
    }
}

impl Agent for NormAdaptiveAgent {
    fn reset(&mut self) {
        self.rng = seeded_rng(self.seed);
        self.t = 0;
        self.resamples = 0;
        for l in &mut self.library_ledgers {
            l.gap = 0.0;
        }
        let idx = match self.initial {
            Some(i) if i < self.own.len() => i,
            _ => self.sample_index(),
        };
        self.inner.ledger.gap = 0.0;
        self.switch_to(idx);
        self.inner.reset();
        self.last_verdict = None;
        if let Some(tr) = &mut self.trace {
            tr.clear();
        }
    }

    fn act(&mut self, env: &EnvSpec, state: &EnvState, _rng: &mut Rng) -> usize {
        let action = self.inner.choose(env, state);
        if let Some(tr) = &mut self.trace {
            tr.push(TraceEntry {
                t: self.t,
                state: state.clone(),
                gap: self.inner.ledger.gap,
                phase: self.inner.phase,
                welfare: self.current,
                welfare_label: String::from(self.own[self.current].welfare.label()),
                action,
                debit: self.inner.debit,
                verdict: None,
            });
        }
        action
    }

    fn observe(&mut self, env: &EnvSpec, state: &EnvState, action: JointAction, rewards: [f64; 2], next: &EnvState) {
        let opp = other(self.seat);
        let theirs = action.get(opp);
        let matches: Vec<bool> = self
            .library
            .iter()
            .zip(&self.library_ledgers)
            .map(|(c, l)| c.plan.joint_action(env, state, l.gap).get(opp) == theirs)
            .collect();
        for l in &mut self.library_ledgers {
            l.update(rewards);
        }
        self.window.push_back(matches.clone());
        while self.window.len() > self.detection.window {
            self.window.pop_front();
        }
        self.since_resample += 1;

        let current_w = self.own[self.current].welfare;
        let verdict = if self.window.len() >= self.detection.window {
            let window: Vec<Vec<bool>> = self.window.iter().cloned().collect();
            let lib: Vec<WelfareSpec> = self.library.iter().map(|c| c.welfare).collect();
            detect_normative_disagreement(&window, &lib, &current_w, self.detection.window, self.detection.threshold).ok()
        } else {
            None
        };

        // Deviations explained by a convention we are willing to adopt are
        // not defection; anything else accrues debit as in plain amTFT.
        let accrue = match &verdict {
            Some(Verdict::Disagreement(w)) => self.own_index(w).is_none(),
            Some(_) => true,
            None => !self.own.iter().any(|b| self.library_index(&b.welfare).is_some_and(|i| matches[i])),
        };
        self.inner.step(env, state, action, rewards, next, accrue);
        self.t += 1;
        if let Some(tr) = &mut self.trace {
            if let Some(last) = tr.last_mut() {
                last.debit = self.inner.debit;
                last.verdict = verdict.clone();
            }
        }
        self.last_verdict = verdict.clone();

        if let Some(Verdict::Disagreement(w)) = verdict {
            if self.own_index(&w).is_some() && self.own.len() > 1 && self.since_resample >= self.detection.dwell {
                let idx = self.sample_index();
                self.resamples += 1;
                self.switch_to(idx);
            }
        }
    }
}

/// Build the recognition library for `env`: the cooperative plan of every
/// listed welfare kind, with the environment's disagreement point.
pub fn convention_library(env: &EnvSpec, kinds: &[WelfareKind], ia: crate::welfare::IaParams, gamma: f64) -> Result<Vec<Convention>> {
    let d = disagreement_values(env, gamma);
    kinds
        .iter()
        .map(|&k| {
            let mut w = WelfareSpec::new(k, d);
            if k == WelfareKind::InequityAverse {
                w.ia = Some(ia);
            }
            Ok(Convention { welfare: w, plan: Arc::new(welfare_optimal_joint_policy(env, &w, gamma)?) })
        })
        .collect()
}

/// Disagreement profile of `env` in value units.
pub fn disagreement_values(env: &EnvSpec, gamma: f64) -> [f64; 2] {
    let d = env.disagreement_rewards();
    [d[0] / (1.0 - gamma), d[1] / (1.0 - gamma)]
}

#[cfg(test)]
mod tests;
