//! Grim welfare policies and the cross-play minimax bound.
//!
//! When two players each follow a deterministic profile that is optimal for a
//! different welfare function, and each switches for good to the action that
//! minimises the other's best reply as soon as the other leaves its profile,
//! both players eventually earn no more than their pure minimax value. The
//! verifier here plays that cross-play out and checks the bound, together
//! with the equilibrium inequality `V_i(π^w_1, π^{w'}_2) <= min(V_i(π^w), V_i(π^{w'}))`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::amtft::{
    convention_library, disagreement_values, train_amtft, AmTftConfig, DetectionConfig, NormAdaptiveAgent,
};
use crate::error::{Error, Result};
use crate::game::{rollout, Agent, EnvSpec, EnvState, JointAction, MatrixGame, MatrixState, Seat};
use crate::planning::{minimax, optimal_schedule, Schedule};
use crate::welfare::{IaParams, WelfareKind, WelfareSpec};
use crate::Rng;

const TOL: f64 = 1e-9;

/// Slack allowed on simulated tail values for the truncated horizon.
pub const TAIL_SLACK: f64 = 1e-6;

/// Default simulation horizon for the bound.
pub const DEFAULT_HORIZON: usize = 500;

/// Deterministic 0/1 sequence `x` with `(1 - γ) Σ γ^t x_t = p`.
///
/// The greedy expansion takes `x_t = 1` whenever the remaining target covers
/// a full step; for `γ >= 1/2` the remainder always stays reachable by the
/// tail, so the sum converges to `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscountExpansion {
    pub p: f64,
    pub gamma: f64,
    digits: Vec<bool>,
    remainder: f64,
    weight: f64,
}

impl DiscountExpansion {
    pub fn new(p: f64, gamma: f64) -> Result<Self> {
        if !(0.5..1.0).contains(&gamma) {
            return Err(Error::PremiseFailed(format!(
                "a lottery cannot be played deterministically at discount {gamma}"
            )));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("lottery weight {p} outside [0, 1]")));
        }
        Ok(DiscountExpansion { p, gamma, digits: Vec::new(), remainder: p, weight: 1.0 - gamma })
    }

    pub fn digit(&mut self, t: usize) -> bool {
        while self.digits.len() <= t {
            let take = self.remainder >= self.weight;
            if take {
                self.remainder -= self.weight;
            }
            self.digits.push(take);
            self.weight *= self.gamma;
        }
        self.digits[t]
    }
}

/// Follows one seat of a deterministic `w`-optimal profile until the
/// opponent first leaves it, then plays `minimax_action` forever.
///
/// A lottery optimum is played through its [`DiscountExpansion`], which has
/// the same discounted values.
#[derive(Clone, Debug, PartialEq)]
pub struct GrimWelfarePolicy {
    pub seat: Seat,
    pub welfare: WelfareSpec,
    pub base: Schedule,
    /// Own action minimising the opponent's best per-step reward.
    pub minimax_action: usize,
    expansion: Option<DiscountExpansion>,
    triggered: bool,
}

impl GrimWelfarePolicy {
    pub fn triggered(&self) -> bool {
        self.triggered
    }

    /// Joint action of the base profile at `state`.
    pub fn prescribed(&mut self, state: &MatrixState) -> JointAction {
        match (&mut self.expansion, self.base) {
            (Some(x), Schedule::Lottery { first, second, .. }) => {
                if x.digit(state.t) {
                    first
                } else {
                    second
                }
            }
            _ => self.base.joint_action(state),
        }
    }
}

impl Agent for GrimWelfarePolicy {
    fn reset(&mut self) {
        self.triggered = false;
    }

    fn act(&mut self, _env: &EnvSpec, state: &EnvState, _rng: &mut Rng) -> usize {
        match state.as_matrix() {
            Some(m) if !self.triggered => self.prescribed(m).get(self.seat),
            _ => self.minimax_action,
        }
    }

    fn observe(&mut self, _env: &EnvSpec, state: &EnvState, action: JointAction, _rewards: [f64; 2], _next: &EnvState) {
        if let Some(m) = state.as_matrix() {
            let other = 1 - self.seat;
            if action.get(other) != self.prescribed(m).get(other) {
                self.triggered = true;
            }
        }
    }
}

/// Grim version of the `w`-optimal profile for `seat`.
///
/// Fails with [`Error::PremiseFailed`] when the optimum needs a lottery and
/// the discount is too small to replace it by a deterministic sequence.
pub fn build_grim_policy(game: &MatrixGame, w: &WelfareSpec, seat: Seat, gamma: f64) -> Result<GrimWelfarePolicy> {
    if seat > 1 {
        return Err(Error::InvalidParameter(format!("seat must be 0 or 1, got {seat}")));
    }
    let (base, _) = optimal_schedule(game, w, gamma)?;
    let expansion = match base {
        Schedule::Lottery { p, .. } => Some(DiscountExpansion::new(p, gamma).map_err(|e| match e {
            Error::PremiseFailed(r) => Error::PremiseFailed(format!("{} has no deterministic optimum: {r}", w.label())),
            e => e,
        })?),
        _ => None,
    };
    Ok(GrimWelfarePolicy {
        seat,
        welfare: *w,
        base,
        minimax_action: minimax(game, 1 - seat, gamma).minimizing_action,
        expansion,
        triggered: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum BoundOutcome {
    Holds,
    Violated,
    PremiseFailed(String),
}

/// Result of checking the bound for one ordered welfare pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub game: String,
    pub welfare_p1: String,
    pub welfare_p2: String,
    pub outcome: BoundOutcome,
    /// First step from which both players are post-trigger.
    pub t_found: Option<usize>,
    /// Discounted values from `t_found` onwards.
    pub tail_values: [f64; 2],
    /// Pure minimax values in value units.
    pub bounds: [f64; 2],
    /// Whole-game cross-play values.
    pub cross_values: [f64; 2],
    /// Self-play values of the two welfare-optimal profiles.
    pub self_values: [[f64; 2]; 2],
    /// Whether cross-play is below both self-play values, per player.
    pub equilibrium_inequality: [bool; 2],
}

impl BoundReport {
    fn premise_failed(game: &MatrixGame, w: &WelfareSpec, w2: &WelfareSpec, reason: String) -> Self {
        BoundReport {
            game: game.name.clone(),
            welfare_p1: w.label().into(),
            welfare_p2: w2.label().into(),
            outcome: BoundOutcome::PremiseFailed(reason),
            t_found: None,
            tail_values: [0.0; 2],
            bounds: [0.0; 2],
            cross_values: [0.0; 2],
            self_values: [[0.0; 2]; 2],
            equilibrium_inequality: [false; 2],
        }
    }

    pub fn holds(&self) -> bool {
        self.outcome == BoundOutcome::Holds
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} vs {}: ", self.game, self.welfare_p1, self.welfare_p2)?;
        match &self.outcome {
            BoundOutcome::PremiseFailed(reason) => write!(f, "premise failed ({reason})"),
            outcome => {
                let status = if *outcome == BoundOutcome::Holds { "holds" } else { "VIOLATED" };
                let t = self.t_found.map_or_else(|| String::from("none"), |t| format!("{t}"));
                write!(
                    f,
                    "{status}; t={t} tail=({:.4}, {:.4}) bound=({:.4}, {:.4}) cross=({:.4}, {:.4})",
                    self.tail_values[0],
                    self.tail_values[1],
                    self.bounds[0],
                    self.bounds[1],
                    self.cross_values[0],
                    self.cross_values[1]
                )
            }
        }
    }
}

/// Play the grim `w` profile (seat 1) against the grim `w2` profile (seat 2)
/// for `horizon` steps and check the minimax bound on the tail values.
pub fn verify_bound(game: &MatrixGame, w: &WelfareSpec, w2: &WelfareSpec, gamma: f64, horizon: usize) -> Result<BoundReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("discount must lie in (0, 1), got {gamma}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    w.validate()?;
    w2.validate()?;
    let fail = |reason: String| Ok(BoundReport::premise_failed(game, w, w2, reason));

    let (p1, p2) = match (build_grim_policy(game, w, 0, gamma), build_grim_policy(game, w2, 1, gamma)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(Error::PremiseFailed(r)), _) | (_, Err(Error::PremiseFailed(r))) => return fail(r),
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let self_values = [p1.base.values(game, gamma), p2.base.values(game, gamma)];
    let same = (0..2).all(|i| (self_values[0][i] - self_values[1][i]).abs() <= TOL * (1.0 + self_values[0][i].abs()));
    if same {
        return fail(format!("{} and {} share their optimum", w.label(), w2.label()));
    }
    let bounds = [minimax(game, 0, gamma).discounted, minimax(game, 1, gamma).discounted];
    for i in 0..2 {
        let preferred = self_values[0][i].max(self_values[1][i]);
        if bounds[i] >= preferred - TOL * (1.0 + preferred.abs()) {
            return fail(format!("minimax value of player {} is not below its preferred optimum", i + 1));
        }
    }

    let env = EnvSpec::Matrix(game.clone());
    let mut agents = [p1, p2];
    let mut rng = crate::seeded_rng(0);
    let mut state = MatrixState { prev: None, t: 0, signal: 0.0 };
    let mut rewards = Vec::with_capacity(horizon);
    let mut t_found = None;
    let mut post = None;
    for k in 0..horizon {
        let s = EnvState::Matrix(state);
        let ja = JointAction::new(agents[0].act(&env, &s, &mut rng), agents[1].act(&env, &s, &mut rng));
        let r = game.payoff(ja);
        let next = EnvState::Matrix(MatrixState { prev: Some(ja), t: k + 1, signal: 0.0 });
        for a in agents.iter_mut() {
            a.observe(&env, &s, ja, r, &next);
        }
        rewards.push(r);
        if t_found.is_none() && agents.iter().all(|a| a.triggered()) {
            t_found = Some(k + 1);
            post = Some(JointAction::new(agents[0].minimax_action, agents[1].minimax_action));
        }
        state = MatrixState { prev: Some(ja), t: k + 1, signal: 0.0 };
    }

    let discounted = |from: usize| {
        let mut v = [0.0; 2];
        let mut weight = 1.0;
        for r in &rewards[from..] {
            v[0] += weight * r[0];
            v[1] += weight * r[1];
            weight *= gamma;
        }
        v
    };
    // Once both players are post-trigger the play is constant, so the whole
    // cross-play value has a closed form.
    let cross_values = match (t_found, post) {
        (Some(t), Some(a)) => {
            let head = {
                let mut v = [0.0; 2];
                let mut weight = 1.0;
                for r in &rewards[..t] {
                    v[0] += weight * r[0];
                    v[1] += weight * r[1];
                    weight *= gamma;
                }
                (v, weight)
            };
            let r = game.payoff(a);
            let (v, weight) = head;
            [v[0] + weight * r[0] / (1.0 - gamma), v[1] + weight * r[1] / (1.0 - gamma)]
        }
        _ => discounted(0),
    };
    let tail_values = t_found.map_or([f64::NAN; 2], discounted);
    let equilibrium_inequality: [bool; 2] = core::array::from_fn(|i| {
        let low = self_values[0][i].min(self_values[1][i]);
        cross_values[i] <= low + TOL * (1.0 + low.abs())
    });
    let holds = t_found.is_some() && (0..2).all(|i| tail_values[i] <= bounds[i] + TAIL_SLACK);
    Ok(BoundReport {
        game: game.name.clone(),
        welfare_p1: w.label().into(),
        welfare_p2: w2.label().into(),
        outcome: if holds { BoundOutcome::Holds } else { BoundOutcome::Violated },
        t_found,
        tail_values,
        bounds,
        cross_values,
        self_values,
        equilibrium_inequality,
    })
}

/// Every welfare kind with the game's disagreement point and default
/// inequity-aversion parameters.
pub fn default_welfare_specs(game: &MatrixGame, gamma: f64) -> Vec<WelfareSpec> {
    let d = disagreement_values(&EnvSpec::Matrix(game.clone()), gamma);
    WelfareKind::ALL.iter().map(|&k| WelfareSpec::new(k, d)).collect()
}

/// Check the bound for every ordered pair of distinct welfare kinds.
pub fn verify_game(game: &MatrixGame, gamma: f64, horizon: usize) -> Result<Vec<BoundReport>> {
    let specs = default_welfare_specs(game, gamma);
    let mut out = Vec::new();
    for w in &specs {
        for w2 in &specs {
            if w.kind != w2.kind {
                out.push(verify_bound(game, w, w2, gamma, horizon)?);
            }
        }
    }
    Ok(out)
}

/// One side of an exploitation experiment: its welfare set and the member it
/// starts from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideConfig {
    pub welfare_set: Vec<WelfareKind>,
    /// Index into `welfare_set` of the preferred welfare function.
    pub preferred: usize,
}

impl SideConfig {
    pub fn rigid(kind: WelfareKind) -> Self {
        SideConfig { welfare_set: alloc::vec![kind], preferred: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExploitationConfig {
    pub gamma: f64,
    pub steps: usize,
    /// Trailing steps whose average defines the long-run value.
    pub tail: usize,
    pub ia: IaParams,
    pub amtft: AmTftConfig,
    pub detection: DetectionConfig,
}

impl Default for ExploitationConfig {
    fn default() -> Self {
        ExploitationConfig {
            gamma: crate::DEFAULT_GAMMA,
            steps: 400,
            tail: 100,
            ia: IaParams::default(),
            amtft: AmTftConfig::default(),
            detection: DetectionConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploitationReport {
    /// Long-run values: trailing average reward in value units.
    pub values: [f64; 2],
    /// Self-play values of each side's preferred welfare optimum.
    pub preferred_values: [f64; 2],
    /// `values - preferred_values`.
    pub gaps: [f64; 2],
    /// Welfare function each side ends on.
    pub settled: [WelfareKind; 2],
    /// Whether the trailing play is exactly the settled convention of seat 2.
    pub on_convention: bool,
}

/// Norm-adaptive agents for both sides of an exploitation experiment.
pub fn exploitation_agents(
    env: &EnvSpec,
    sides: [&SideConfig; 2],
    config: &ExploitationConfig,
    seed: u64,
) -> Result<[NormAdaptiveAgent; 2]> {
    let d = disagreement_values(env, config.gamma);
    let library = convention_library(env, &config.detection.library, config.ia, config.gamma)?;
    let build = |seat: Seat, side: &SideConfig| -> Result<NormAdaptiveAgent> {
        if side.preferred >= side.welfare_set.len() {
            return Err(Error::InvalidParameter(format!(
                "preferred index {} outside a welfare set of size {}",
                side.preferred,
                side.welfare_set.len()
            )));
        }
        let own = side
            .welfare_set
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                let mut w = WelfareSpec::new(k, d);
                if k == WelfareKind::InequityAverse {
                    w.ia = Some(config.ia);
                }
                let train_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((seat as u64) << 32 | j as u64);
                train_amtft(env, &w, train_seed, &config.amtft).map(Arc::new)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut agent =
            NormAdaptiveAgent::new(own, library.clone(), seat, config.amtft, config.detection.clone(), seed ^ (seat as u64 + 1))?;
        agent.initial = Some(side.preferred);
        agent.reset();
        Ok(agent)
    };
    Ok([build(0, sides[0])?, build(1, sides[1])?])
}

/// Play two prepared agents against each other and measure how far each
/// ends from the self-play value of its preferred welfare optimum.
pub fn measure_exploitation(
    env: &EnvSpec,
    agents: [&mut NormAdaptiveAgent; 2],
    config: &ExploitationConfig,
    seed: u64,
) -> Result<ExploitationReport> {
    if config.tail == 0 || config.tail > config.steps {
        return Err(Error::InvalidParameter(format!(
            "tail of {} steps does not fit in {} steps",
            config.tail, config.steps
        )));
    }
    let [a, b] = agents;
    let preferred_values = [
        a.own[a.initial.unwrap_or(0)].plan.values()[0],
        b.own[b.initial.unwrap_or(0)].plan.values()[1],
    ];
    let trajectory = rollout(env, [&mut *a, &mut *b], config.steps, seed, config.gamma)?;
    let tail = &trajectory.steps[config.steps - config.tail..];
    let mut mean = [0.0; 2];
    for s in tail {
        mean[0] += s.rewards[0];
        mean[1] += s.rewards[1];
    }
    let values = mean.map(|m| m / config.tail as f64 / (1.0 - config.gamma));
    let settled = [a.current_welfare().kind, b.current_welfare().kind];
    let plan = &b.own[b.current_index()].plan;
    let on_convention = a.current_welfare() == b.current_welfare()
        && tail.iter().all(|s| s.action == plan.joint_action(env, &s.state, 0.0));
    Ok(ExploitationReport {
        values,
        preferred_values,
        gaps: [values[0] - preferred_values[0], values[1] - preferred_values[1]],
        settled,
        on_convention,
    })
}

/// Train both sides and report each side's long-run value minus its own
/// preferred-welfare self-play value.
pub fn exploitation_gap(
    env: &EnvSpec,
    sides: [&SideConfig; 2],
    config: &ExploitationConfig,
    seed: u64,
) -> Result<ExploitationReport> {
    let [mut a, mut b] = exploitation_agents(env, sides, config, seed)?;
    measure_exploitation(env, [&mut a, &mut b], config, seed)
}
