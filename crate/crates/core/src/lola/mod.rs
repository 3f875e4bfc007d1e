//! LOLA with exact values on iterated matrix games.
//!
//! Players use memory-1 softmax policies. Together they induce a Markov
//! chain over the previous joint action, so discounted values have the
//! closed form `V_i = p0ᵀ (I - γP)⁻¹ r_i`. Derivatives come from hyper-dual
//! arithmetic pushed through the same linear solve.

mod dual;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Agent, EnvSpec, EnvState, JointAction, MatrixGame};
use crate::math::{abs, softmax_into};
use crate::{seeded_rng, Rng};

use dual::{HyperDual, Scalar};

/// Logit magnitude used for (numerically) deterministic policies.
pub const DETERMINISTIC_LOGIT: f64 = 60.0;

/// Policy of an iterated `N`-action game that conditions on the previous
/// joint action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Memory1Policy {
    pub actions: usize,
    pub initial_logits: Vec<f64>,
    /// `N²` rows of `N` logits; row `prev.index(N)` is used after `prev`.
    pub conditional_logits: Vec<f64>,
}

impl Memory1Policy {
    pub fn param_count(actions: usize) -> usize {
        actions + actions * actions * actions
    }

    pub fn from_params(actions: usize, params: &[f64]) -> Result<Self> {
        if actions == 0 || params.len() != Self::param_count(actions) {
            return Err(Error::InvalidParameter(format!(
                "memory-1 policy over {actions} actions needs {} parameters, got {}",
                Self::param_count(actions),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("policy logits must be finite".into()));
        }
        Ok(Memory1Policy {
            actions,
            initial_logits: params[..actions].to_vec(),
            conditional_logits: params[actions..].to_vec(),
        })
    }

    /// Flat parameter vector: initial logits followed by the conditional rows.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.initial_logits.clone();
        p.extend_from_slice(&self.conditional_logits);
        p
    }

    pub fn uniform(actions: usize) -> Self {
        Self::from_params(actions, &vec![0.0; Self::param_count(actions)]).expect("valid size")
    }

    /// Plays `action` after every history.
    pub fn constant(actions: usize, action: usize) -> Self {
        let mut p = vec![0.0; Self::param_count(actions)];
        for (k, x) in p.iter_mut().enumerate() {
            if k % actions == action {
                *x = DETERMINISTIC_LOGIT;
            }
        }
        Self::from_params(actions, &p).expect("valid size")
    }

    /// Standard-normal logits.
    pub fn random(actions: usize, rng: &mut Rng) -> Self {
        Self::random_scaled(actions, 1.0, rng)
    }

    /// Normal logits with standard deviation `std`.
    pub fn random_scaled(actions: usize, std: f64, rng: &mut Rng) -> Self {
        let p: Vec<f64> = (0..Self::param_count(actions))
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::from_params(actions, &p).expect("valid size")
    }

    pub fn probabilities(&self, prev: Option<JointAction>) -> Vec<f64> {
        let n = self.actions;
        let row = match prev {
            None => &self.initial_logits[..],
            Some(ja) => {
                let s = ja.index(n);
                &self.conditional_logits[s * n..(s + 1) * n]
            }
        };
        let mut out = vec![0.0; n];
        softmax_into(row, &mut out);
        out
    }
}

/// Samples its action from the row selected by the previous joint action.
/// Outside iterated matrix games it plays its initial-row law.
impl Agent for Memory1Policy {
    fn act(&mut self, _env: &EnvSpec, state: &EnvState, rng: &mut Rng) -> usize {
        let prev = state.as_matrix().and_then(|m| m.prev);
        let probs = self.probabilities(prev);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        probs.len() - 1
    }
}

/// Markov chain over previous joint actions induced by a policy pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InducedChain {
    pub p0: Vec<f64>,
    /// Row-major `N² × N²` transition matrix.
    pub transition: Vec<f64>,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
}

fn check_pair(pair: &[Memory1Policy; 2], game: &MatrixGame, gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter("discount must lie in [0, 1)".into()));
    }
    for (seat, p) in pair.iter().enumerate() {
        if p.actions != game.actions {
            return Err(Error::EnvironmentMismatch(format!(
                "player {} policy has {} actions, game {} has {}",
                seat + 1,
                p.actions,
                game.name,
                game.actions
            )));
        }
    }
    Ok(())
}

fn softmax_generic<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits.iter().map(|l| l.re()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<S> = logits.iter().map(|&l| (l - S::constant(max)).exp()).collect();
    let total = exps.iter().fold(S::constant(0.0), |a, &b| a + b);
    exps.into_iter().map(|e| e / total).collect()
}

/// Initial distribution and transition matrix over joint-action states.
fn chain<S: Scalar>(theta1: &[S], theta2: &[S], n: usize) -> (Vec<S>, Vec<S>) {
    let states = n * n;
    let law = |theta: &[S], row: Option<usize>| -> Vec<S> {
        match row {
            None => softmax_generic(&theta[..n]),
            Some(s) => softmax_generic(&theta[n + s * n..n + (s + 1) * n]),
        }
    };
    let joint = |pi1: &[S], pi2: &[S]| -> Vec<S> {
        let mut out = Vec::with_capacity(states);
        for a1 in 0..n {
            for a2 in 0..n {
                out.push(pi1[a1] * pi2[a2]);
            }
        }
        out
    };
    let p0 = joint(&law(theta1, None), &law(theta2, None));
    let mut transition = Vec::with_capacity(states * states);
    for s in 0..states {
        transition.extend(joint(&law(theta1, Some(s)), &law(theta2, Some(s))));
    }
    (p0, transition)
}

/// Solve `a x = b` for a dense row-major `m × m` system, pivoting on the
/// real parts.
fn solve<S: Scalar>(mut a: Vec<S>, mut b: Vec<S>, m: usize) -> Option<Vec<S>> {
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| abs(a[i * m + col].re()).total_cmp(&abs(a[j * m + col].re())))?;
        if abs(a[pivot * m + col].re()) < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..m {
                a.swap(col * m + k, pivot * m + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * m + col];
        for row in col + 1..m {
            let f = a[row * m + col] / diag;
            for k in col..m {
                let v = a[col * m + k];
                a[row * m + k] = a[row * m + k] - f * v;
            }
            let bc = b[col];
            b[row] = b[row] - f * bc;
        }
    }
    let mut x = b;
    for row in (0..m).rev() {
        let mut acc = x[row];
        for k in row + 1..m {
            acc = acc - a[row * m + k] * x[k];
        }
        x[row] = acc / a[row * m + row];
    }
    Some(x)
}

fn values_generic<S: Scalar>(theta1: &[S], theta2: &[S], game: &MatrixGame, gamma: f64) -> Result<[S; 2]> {
    let n = game.actions;
    let m = n * n;
    let (p0, transition) = chain(theta1, theta2, n);
    // Discounted state occupancy x solves (I - γP)ᵀ x = p0.
    let mut a = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let id = if i == j { 1.0 } else { 0.0 };
            a.push(S::constant(id) - S::constant(gamma) * transition[j * m + i]);
        }
    }
    let x = solve(a, p0, m).ok_or_else(|| Error::Numerical("singular value system".into()))?;
    let mut v = [S::constant(0.0); 2];
    for (s, &xs) in x.iter().enumerate() {
        let r = game.payoffs[s];
        v[0] = v[0] + xs * S::constant(r[0]);
        v[1] = v[1] + xs * S::constant(r[1]);
    }
    Ok(v)
}

/// Initial distribution, transitions and per-state rewards of a policy pair.
pub fn induced_chain(pair: &[Memory1Policy; 2], game: &MatrixGame) -> Result<InducedChain> {
    check_pair(pair, game, 0.0)?;
    let (p0, transition) = chain(&pair[0].params(), &pair[1].params(), game.actions);
    Ok(InducedChain {
        p0,
        transition,
        r1: game.payoffs.iter().map(|r| r[0]).collect(),
        r2: game.payoffs.iter().map(|r| r[1]).collect(),
    })
}

/// Exact discounted values `(V1, V2)` of a memory-1 policy pair.
pub fn exact_value(pair: &[Memory1Policy; 2], game: &MatrixGame, gamma: f64) -> Result<[f64; 2]> {
    check_pair(pair, game, gamma)?;
    let v = values_generic(&pair[0].params(), &pair[1].params(), game, gamma)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite value".into()));
    }
    Ok(v)
}

/// Values with first derivatives and cross second-derivative blocks.
///
/// `cross_v1[i * n2 + j] = ∂²V1 / ∂θ1_i ∂θ2_j`, likewise `cross_v2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueDerivatives {
    pub values: [f64; 2],
    pub d_theta1_v1: Vec<f64>,
    pub d_theta2_v1: Vec<f64>,
    pub d_theta1_v2: Vec<f64>,
    pub d_theta2_v2: Vec<f64>,
    pub cross_v1: Vec<f64>,
    pub cross_v2: Vec<f64>,
}

pub fn value_derivatives(pair: &[Memory1Policy; 2], game: &MatrixGame, gamma: f64) -> Result<ValueDerivatives> {
    check_pair(pair, game, gamma)?;
    let t1 = pair[0].params();
    let t2 = pair[1].params();
    let (n1, n2) = (t1.len(), t2.len());
    let lift = |t: &[f64]| -> Vec<HyperDual> { t.iter().map(|&x| HyperDual::constant(x)).collect() };
    let mut h1 = lift(&t1);
    let mut h2 = lift(&t2);

    let mut out = ValueDerivatives {
        values: [0.0; 2],
        d_theta1_v1: vec![0.0; n1],
        d_theta2_v1: vec![0.0; n2],
        d_theta1_v2: vec![0.0; n1],
        d_theta2_v2: vec![0.0; n2],
        cross_v1: vec![0.0; n1 * n2],
        cross_v2: vec![0.0; n1 * n2],
    };
    for i in 0..n1 {
        h1[i].e1 = 1.0;
        for j in 0..n2 {
            h2[j].e2 = 1.0;
            let v = values_generic(&h1, &h2, game, gamma)?;
            out.cross_v1[i * n2 + j] = v[0].e12;
            out.cross_v2[i * n2 + j] = v[1].e12;
            if j == 0 {
                out.d_theta1_v1[i] = v[0].e1;
                out.d_theta1_v2[i] = v[1].e1;
            }
            if i == 0 {
                out.d_theta2_v1[j] = v[0].e2;
                out.d_theta2_v2[j] = v[1].e2;
                out.values = [v[0].re, v[1].re];
            }
            h2[j].e2 = 0.0;
        }
        h1[i].e1 = 0.0;
    }
    let all = [
        &out.d_theta1_v1,
        &out.d_theta2_v1,
        &out.d_theta1_v2,
        &out.d_theta2_v2,
        &out.cross_v1,
        &out.cross_v2,
    ];
    if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::Numerical("non-finite derivative".into()));
    }
    Ok(out)
}

/// Parameter increments of one simultaneous LOLA update:
/// `Δθ1 = δ∇θ1V1 + δη (∇θ2V1)ᵀ ∇θ1∇θ2V2` and symmetrically for player 2.
pub fn lola_update(d: &ValueDerivatives, delta: f64, eta: f64) -> [Vec<f64>; 2] {
    let (n1, n2) = (d.d_theta1_v1.len(), d.d_theta2_v2.len());
    let step1 = (0..n1)
        .map(|i| {
            let shaping: f64 = (0..n2).map(|j| d.d_theta2_v1[j] * d.cross_v2[i * n2 + j]).sum();
            delta * d.d_theta1_v1[i] + delta * eta * shaping
        })
        .collect();
    let step2 = (0..n2)
        .map(|j| {
            let shaping: f64 = (0..n1).map(|i| d.d_theta1_v2[i] * d.cross_v1[i * n2 + j]).sum();
            delta * d.d_theta2_v2[j] + delta * eta * shaping
        })
        .collect();
    [step1, step2]
}

pub fn lola_step(
    pair: &[Memory1Policy; 2],
    game: &MatrixGame,
    gamma: f64,
    delta: f64,
    eta: f64,
) -> Result<[Memory1Policy; 2]> {
    if !(delta >= 0.0) || !(eta >= 0.0) {
        return Err(Error::InvalidParameter("LOLA step size and shaping weight must be >= 0".into()));
    }
    let d = value_derivatives(pair, game, gamma)
        .map_err(|e| Error::TrainingAborted(format!("{e}")))?;
    let [s1, s2] = lola_update(&d, delta, eta);
    let apply = |p: &Memory1Policy, s: &[f64]| -> Result<Memory1Policy> {
        let next: Vec<f64> = p.params().iter().zip(s).map(|(a, b)| a + b).collect();
        Memory1Policy::from_params(p.actions, &next)
            .map_err(|_| Error::TrainingAborted("LOLA update produced non-finite logits".into()))
    };
    Ok([apply(&pair[0], &s1)?, apply(&pair[1], &s2)?])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LolaConfig {
    pub gamma: f64,
    /// Step size δ.
    pub delta: f64,
    /// Shaping coefficient η.
    pub eta: f64,
    /// Iteration cap.
    pub iterations: usize,
    /// Stop once no parameter moves by more than this in one step.
    pub tolerance: f64,
    /// Standard deviation of the initial logits.
    pub init_std: f64,
}

impl Default for LolaConfig {
    fn default() -> Self {
        LolaConfig {
            gamma: crate::DEFAULT_GAMMA,
            delta: 0.3,
            eta: 3.0,
            iterations: 2000,
            tolerance: 1e-6,
            init_std: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LolaRun {
    pub seed: u64,
    pub policies: [Memory1Policy; 2],
    /// Values before each update, followed by the final values.
    pub trace: Vec<[f64; 2]>,
    pub iterations: usize,
    pub converged: bool,
}

impl LolaRun {
    pub fn final_values(&self) -> [f64; 2] {
        *self.trace.last().expect("trace holds at least the initial values")
    }
}

/// Train a pair of LOLA-Exact learners from seeded standard-normal logits.
pub fn train_lola(game: &MatrixGame, config: &LolaConfig, seed: u64) -> Result<LolaRun> {
    if config.iterations == 0 {
        return Err(Error::InvalidParameter("LOLA needs at least one iteration".into()));
    }
    let mut rng = seeded_rng(seed);
    let n = game.actions;
    if !(config.init_std >= 0.0) || !config.init_std.is_finite() {
        return Err(Error::InvalidParameter("initial logit std must be finite and >= 0".into()));
    }
    let mut pair = [
        Memory1Policy::random_scaled(n, config.init_std, &mut rng),
        Memory1Policy::random_scaled(n, config.init_std, &mut rng),
    ];
    let mut trace = Vec::with_capacity(config.iterations + 1);
    let mut converged = false;
    let mut done = 0;
    for _ in 0..config.iterations {
        trace.push(exact_value(&pair, game, config.gamma)?);
        let next = lola_step(&pair, game, config.gamma, config.delta, config.eta)?;
        let change = pair
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| a.params().into_iter().zip(b.params()).map(|(x, y)| abs(x - y)))
            .fold(0.0, f64::max);
        pair = next;
        done += 1;
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    trace.push(exact_value(&pair, game, config.gamma)?);
    Ok(LolaRun {
        seed,
        policies: pair,
        trace,
        iterations: done,
        converged,
    })
}
