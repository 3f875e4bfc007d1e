//! Welfare functions over payoff profiles, welfare optima on feasible sets,
//! and the normalized cooperation score.
//!
//! Every welfare kind is maximized. Kalai-Smorodinsky is scored as the
//! negated deviation of the gain ratio from the ideal-point ratio, so larger
//! is better for all kinds.

mod hull;

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Trajectory;
use crate::math::{abs, sqrt};

pub use hull::{feasible_set, pareto_front, FeasibleSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WelfareKind {
    #[serde(alias = "util")]
    Utilitarian,
    #[serde(alias = "egal")]
    Egalitarian,
    Nash,
    #[serde(alias = "ks")]
    KalaiSmorodinsky,
    #[serde(alias = "ia")]
    InequityAverse,
}

impl WelfareKind {
    pub const ALL: [WelfareKind; 5] = [
        WelfareKind::Utilitarian,
        WelfareKind::Egalitarian,
        WelfareKind::Nash,
        WelfareKind::KalaiSmorodinsky,
        WelfareKind::InequityAverse,
    ];

    pub fn label(self) -> &'static str {
        match self {
            WelfareKind::Utilitarian => "util",
            WelfareKind::Egalitarian => "egal",
            WelfareKind::Nash => "nash",
            WelfareKind::KalaiSmorodinsky => "ks",
            WelfareKind::InequityAverse => "ia",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Some(match label {
            "util" | "utilitarian" => WelfareKind::Utilitarian,
            "egal" | "egalitarian" => WelfareKind::Egalitarian,
            "nash" => WelfareKind::Nash,
            "ks" | "kalai_smorodinsky" => WelfareKind::KalaiSmorodinsky,
            "ia" | "inequity_averse" => WelfareKind::InequityAverse,
            _ => return None,
        })
    }

    /// Whether the optimum is restricted to the Pareto front explicitly.
    pub fn pareto_constrained(self) -> bool {
        matches!(self, WelfareKind::Egalitarian | WelfareKind::KalaiSmorodinsky)
    }
}

impl fmt::Display for WelfareKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Inequity-aversion parameters: penalty weight `beta`, smoothing `lambda`,
/// and the discount the smoothed reward ledgers use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IaParams {
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for IaParams {
    fn default() -> Self {
        IaParams {
            beta: 1.0,
            lambda: 0.96,
            gamma: crate::DEFAULT_GAMMA,
        }
    }
}

impl IaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter("inequity aversion beta must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter("inequity aversion lambda must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter("discount must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Penalty per unit of value gap for a stationary profile: a constant
    /// reward gap `g` settles the smoothed ledgers at `g / (1 - gamma*lambda)`.
    pub fn profile_coefficient(&self) -> f64 {
        self.beta * (1.0 - self.gamma) / (1.0 - self.gamma * self.lambda)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelfareSpec {
    pub kind: WelfareKind,
    /// Disagreement point `d`, in value units.
    pub disagreement: [f64; 2],
    /// Present iff `kind` is inequity averse.
    pub ia: Option<IaParams>,
}

impl WelfareSpec {
    pub fn new(kind: WelfareKind, disagreement: [f64; 2]) -> Self {
        WelfareSpec {
            kind,
            disagreement,
            ia: (kind == WelfareKind::InequityAverse).then(IaParams::default),
        }
    }

    pub fn utilitarian() -> Self {
        Self::new(WelfareKind::Utilitarian, [0.0, 0.0])
    }

    pub fn egalitarian(d: [f64; 2]) -> Self {
        Self::new(WelfareKind::Egalitarian, d)
    }

    pub fn nash(d: [f64; 2]) -> Self {
        Self::new(WelfareKind::Nash, d)
    }

    pub fn kalai_smorodinsky(d: [f64; 2]) -> Self {
        Self::new(WelfareKind::KalaiSmorodinsky, d)
    }

    pub fn inequity_averse(params: IaParams) -> Self {
        WelfareSpec {
            kind: WelfareKind::InequityAverse,
            disagreement: [0.0, 0.0],
            ia: Some(params),
        }
    }

    pub fn with_disagreement(mut self, d: [f64; 2]) -> Self {
        self.disagreement = d;
        self
    }

    pub fn label(&self) -> &'static str {
        self.kind.label()
    }

    pub fn ia_params(&self) -> IaParams {
        self.ia.unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.disagreement.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidParameter("disagreement point must be finite".into()));
        }
        match (self.kind, &self.ia) {
            (WelfareKind::InequityAverse, Some(p)) => p.validate(),
            (WelfareKind::InequityAverse, None) => {
                Err(Error::InvalidParameter("inequity-averse welfare needs beta and lambda".into()))
            }
            (_, Some(_)) => Err(Error::InvalidParameter(
                "beta/lambda are only meaningful for inequity-averse welfare".into(),
            )),
            _ => Ok(()),
        }
    }

    /// The same specification seen from the other seat.
    pub fn swapped(&self) -> Self {
        WelfareSpec {
            disagreement: [self.disagreement[1], self.disagreement[0]],
            ..*self
        }
    }
}

const GAIN_SLACK: f64 = 1e-9;

fn gains(w: &WelfareSpec, v: [f64; 2]) -> [f64; 2] {
    [v[0] - w.disagreement[0], v[1] - w.disagreement[1]]
}

fn nonnegative_gains(w: &WelfareSpec, v: [f64; 2]) -> Result<[f64; 2]> {
    let g = gains(w, v);
    let slack = GAIN_SLACK * (1.0 + abs(v[0]) + abs(v[1]));
    if g[0] < -slack || g[1] < -slack {
        return Err(Error::NegativeGain {
            welfare: w.kind.label(),
            gain1: g[0],
            gain2: g[1],
        });
    }
    Ok([g[0].max(0.0), g[1].max(0.0)])
}

/// Welfare of the payoff profile `v`. `feasible` supplies the ideal point
/// for Kalai-Smorodinsky and is ignored by the other kinds.
pub fn evaluate_welfare(w: &WelfareSpec, v: [f64; 2], feasible: &FeasibleSet) -> Result<f64> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("payoff profile must be finite".into()));
    }
    Ok(match w.kind {
        WelfareKind::Utilitarian => v[0] + v[1],
        WelfareKind::Egalitarian => {
            let g = gains(w, v);
            g[0].min(g[1])
        }
        WelfareKind::Nash => {
            let g = nonnegative_gains(w, v)?;
            g[0] * g[1]
        }
        WelfareKind::KalaiSmorodinsky => {
            let g = nonnegative_gains(w, v)?;
            if g[1] <= 0.0 {
                return Err(Error::UndefinedRatio);
            }
            let ideal = ks_ideal_ratio(w, feasible)?;
            -abs(g[0] / g[1] - ideal)
        }
        WelfareKind::InequityAverse => {
            let c = w.ia_params().profile_coefficient();
            v[0] + v[1] - c * abs(v[0] - v[1])
        }
    })
}

fn ks_ideal_ratio(w: &WelfareSpec, feasible: &FeasibleSet) -> Result<f64> {
    let sup = feasible.sup();
    let (g1, g2) = (sup[0] - w.disagreement[0], sup[1] - w.disagreement[1]);
    if g2 <= 0.0 || g1 < 0.0 {
        return Err(Error::Degenerate(
            "ideal point does not exceed the disagreement point".into(),
        ));
    }
    Ok(g1 / g2)
}

/// Inequity-averse welfare of a two-player trajectory: discounted values
/// minus `beta` times the mean absolute gap of the smoothed reward ledgers
/// `e_i^t = gamma*lambda*e_i^{t-1} + r_i^t`.
pub fn ia_welfare(traj: &Trajectory, beta: f64, lambda: f64, gamma: f64) -> Result<f64> {
    IaParams { beta, lambda, gamma }.validate()?;
    if traj.is_empty() {
        return Err(Error::InvalidParameter("trajectory is empty".into()));
    }
    let mut e = [0.0; 2];
    let mut v = [0.0; 2];
    let mut weight = 1.0;
    let mut gap = 0.0;
    for step in &traj.steps {
        for i in 0..2 {
            e[i] = gamma * lambda * e[i] + step.rewards[i];
            v[i] += weight * step.rewards[i];
        }
        gap += abs(e[0] - e[1]);
        weight *= gamma;
    }
    Ok(v[0] + v[1] - beta * gap / traj.len() as f64)
}

/// A welfare-maximizing profile and its welfare.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub point: [f64; 2],
    pub welfare: f64,
}

fn better(w: &WelfareSpec, cand: &Optimum, best: &Optimum) -> bool {
    let tol = 1e-9 * (1.0 + abs(best.welfare));
    if cand.welfare > best.welfare + tol {
        return true;
    }
    if cand.welfare < best.welfare - tol {
        return false;
    }
    // Ties: the most even split of gains, then larger V1, then larger V2.
    let spread = |p: [f64; 2]| {
        let g = gains(w, p);
        abs(g[0] - g[1])
    };
    let (sc, sb) = (spread(cand.point), spread(best.point));
    let ptol = 1e-9 * (1.0 + abs(sb));
    if sc < sb - ptol {
        return true;
    }
    if sc > sb + ptol {
        return false;
    }
    (cand.point[0], cand.point[1]) > (best.point[0], best.point[1])
}

fn lerp(a: [f64; 2], b: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

/// Maximize `w` over the Pareto front of `set`.
///
/// Every kind is optimized on the front: it is where the Pareto-constrained
/// kinds must land and where the monotone ones attain their maximum. Each
/// front segment contributes its endpoints and the interior stationary
/// points of `w` restricted to it.
pub fn welfare_optimum(w: &WelfareSpec, set: &FeasibleSet) -> Result<Optimum> {
    w.validate()?;
    let front = pareto_front(set);
    let d = w.disagreement;

    let mut candidates: Vec<[f64; 2]> = front.clone();
    for seg in front.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let delta = [b[0] - a[0], b[1] - a[1]];
        let g = gains(w, a);
        let mut interior = Vec::new();
        // Equal gains.
        let denom = delta[0] - delta[1];
        if denom != 0.0 {
            interior.push((g[1] - g[0]) / denom);
        }
        // Equal values (inequity-aversion kink).
        if denom != 0.0 {
            interior.push((a[1] - a[0]) / denom);
        }
        match w.kind {
            WelfareKind::Nash => {
                let q = 2.0 * delta[0] * delta[1];
                if q != 0.0 {
                    interior.push(-(g[0] * delta[1] + g[1] * delta[0]) / q);
                }
            }
            WelfareKind::KalaiSmorodinsky => {
                if let Ok(c) = ks_ideal_ratio(w, set) {
                    let den = delta[0] - c * delta[1];
                    if den != 0.0 {
                        interior.push((c * g[1] - g[0]) / den);
                    }
                }
            }
            _ => {}
        }
        candidates.extend(
            interior
                .into_iter()
                .filter(|s| s.is_finite() && *s > 0.0 && *s < 1.0)
                .map(|s| lerp(a, b, s)),
        );
    }

    if matches!(w.kind, WelfareKind::Nash | WelfareKind::KalaiSmorodinsky) {
        let strictly_above = candidates
            .iter()
            .any(|p| p[0] - d[0] > GAIN_SLACK && p[1] - d[1] > GAIN_SLACK);
        if !strictly_above {
            return Err(Error::Degenerate(alloc::format!(
                "no feasible point strictly dominates the disagreement point for {}",
                w.kind
            )));
        }
    }

    let mut best: Option<Optimum> = None;
    for p in candidates {
        let Ok(value) = evaluate_welfare(w, p, set) else {
            continue;
        };
        let cand = Optimum { point: p, welfare: value };
        if best.as_ref().map_or(true, |b| better(w, &cand, b)) {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| Error::Degenerate(alloc::format!("no admissible point for {}", w.kind)))
}

/// A payoff profile with its normalized cooperation score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredProfile {
    pub values: [f64; 2],
    pub normalized_score: f64,
    /// Index into the welfare set of the function attaining the maximum.
    pub best_welfare: usize,
    pub best_label: String,
}

/// Best normalized welfare gain of `v` over the disagreement profile across
/// the welfare set: `max_w (w(v) - w(d)) / (max w - w(d))`.
pub fn normalized_score(
    v: [f64; 2],
    welfares: &[WelfareSpec],
    disagreement_profile: [f64; 2],
    set: &FeasibleSet,
) -> Result<ScoredProfile> {
    if welfares.is_empty() {
        return Err(Error::InvalidParameter("welfare set is empty".into()));
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, w) in welfares.iter().enumerate() {
        let top = welfare_optimum(w, set)?.welfare;
        let base = evaluate_welfare(w, disagreement_profile, set)?;
        let denom = top - base;
        if !(denom > 1e-12 * (1.0 + abs(top))) {
            return Err(Error::Degenerate(alloc::format!(
                "{} optimum does not exceed its disagreement welfare",
                w.kind
            )));
        }
        // Nash / KS are undefined below the disagreement point; such a profile
        // simply earns nothing from that welfare function.
        let Ok(value) = evaluate_welfare(w, v, set) else {
            continue;
        };
        let score = (value - base) / denom;
        if best.map_or(true, |(s, _)| score > s) {
            best = Some((score, i));
        }
    }
    let (score, idx) = best.ok_or_else(|| {
        Error::Degenerate("profile is not scorable by any welfare function in the set".into())
    })?;
    Ok(ScoredProfile {
        values: v,
        normalized_score: score,
        best_welfare: idx,
        best_label: welfares[idx].label().to_string(),
    })
}

/// Label of the nearest welfare optimum if it lies within `tolerance` times
/// that optimum's norm; `None` means unclassified.
pub fn classify_convention(
    v: [f64; 2],
    optima: &[(String, [f64; 2])],
    tolerance: f64,
) -> Option<String> {
    let dist = |p: [f64; 2]| sqrt((v[0] - p[0]) * (v[0] - p[0]) + (v[1] - p[1]) * (v[1] - p[1]));
    let mut nearest: Option<(f64, &(String, [f64; 2]))> = None;
    for o in optima {
        let d = dist(o.1);
        if nearest.map_or(true, |(nd, _)| d < nd) {
            nearest = Some((d, o));
        }
    }
    let (d, (label, p)) = nearest?;
    let norm = sqrt(p[0] * p[0] + p[1] * p[1]);
    (d <= tolerance * norm).then(|| label.clone())
}

/// Default relative tolerance of [`classify_convention`].
pub const CONVENTION_TOLERANCE: f64 = 0.15;

#[cfg(test)]
mod tests;
