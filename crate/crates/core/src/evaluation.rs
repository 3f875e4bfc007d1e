//! Self-play and cross-play match records, scoring and aggregation.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::amtft::disagreement_values;
use crate::error::{Error, Result};
use crate::game::{rollout, Agent, EnvSpec, MatrixGame};
use crate::math::sqrt;
use crate::planning::GridPlanner;
use crate::welfare::{
    classify_convention, feasible_set, normalized_score, welfare_optimum, FeasibleSet, IaParams, WelfareKind,
    WelfareSpec, CONVENTION_TOLERANCE,
};

/// Column names of the results table, in order.
pub const RESULTS_HEADER: [&str; 12] = [
    "env",
    "algo",
    "welfare_p1",
    "welfare_p2",
    "pair_type",
    "seed_a",
    "seed_b",
    "v1",
    "v2",
    "normalized_score",
    "convention_p1",
    "convention_p2",
];

/// Label written for runs that match no welfare optimum.
pub const UNCLASSIFIED: &str = "unclassified";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairType {
    SelfPlay,
    CrossSameWelfare,
    CrossDiffWelfare,
    /// Cross-play involving a run whose convention could not be classified.
    CrossUnclassified,
}

impl PairType {
    pub const ALL: [PairType; 4] =
        [PairType::SelfPlay, PairType::CrossSameWelfare, PairType::CrossDiffWelfare, PairType::CrossUnclassified];

    pub fn label(self) -> &'static str {
        match self {
            PairType::SelfPlay => "self_play",
            PairType::CrossSameWelfare => "cross_same_welfare",
            PairType::CrossDiffWelfare => "cross_diff_welfare",
            PairType::CrossUnclassified => "cross_unclassified",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        PairType::ALL.into_iter().find(|p| p.label() == label)
    }

    /// Pair type from the two runs' identities and their welfare (or
    /// convention) labels; `None` labels mean unclassified.
    pub fn classify(same_run: bool, label_a: Option<&str>, label_b: Option<&str>) -> Self {
        if same_run {
            return PairType::SelfPlay;
        }
        match (label_a, label_b) {
            (Some(a), Some(b)) if a == b => PairType::CrossSameWelfare,
            (Some(_), Some(_)) => PairType::CrossDiffWelfare,
            _ => PairType::CrossUnclassified,
        }
    }
}

impl fmt::Display for PairType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One evaluated pairing of a seat-1 run with a seat-2 run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub env: String,
    pub algo: String,
    /// Welfare set of each seat, members joined by `+`.
    pub welfare_p1: String,
    pub welfare_p2: String,
    pub pair_type: PairType,
    pub seed_a: u64,
    pub seed_b: u64,
    pub v1: f64,
    pub v2: f64,
    pub normalized_score: f64,
    pub convention_p1: String,
    pub convention_p2: String,
}

impl MatchRecord {
    pub fn values(&self) -> [f64; 2] {
        [self.v1, self.v2]
    }

    /// Fields in [`RESULTS_HEADER`] order, floats in shortest round-trip form.
    pub fn fields(&self) -> [String; 12] {
        [
            self.env.clone(),
            self.algo.clone(),
            self.welfare_p1.clone(),
            self.welfare_p2.clone(),
            self.pair_type.label().to_string(),
            self.seed_a.to_string(),
            self.seed_b.to_string(),
            format!("{}", self.v1),
            format!("{}", self.v2),
            format!("{}", self.normalized_score),
            self.convention_p1.clone(),
            self.convention_p2.clone(),
        ]
    }

    /// Value of the named column, for filtering.
    pub fn field(&self, column: &str) -> Option<String> {
        let i = RESULTS_HEADER.iter().position(|c| *c == column)?;
        Some(self.fields()[i].clone())
    }
}

/// Label of a welfare set: member labels joined by `+`.
pub fn welfare_set_label(set: &[WelfareKind]) -> String {
    let labels: Vec<&str> = set.iter().map(|k| k.label()).collect();
    labels.join("+")
}

/// Scores payoff profiles of one environment against a fixed evaluation
/// welfare set and classifies them by the nearest welfare optimum.
#[derive(Clone, Debug)]
pub struct Scorer {
    pub set: FeasibleSet,
    pub disagreement: [f64; 2],
    pub welfares: Vec<WelfareSpec>,
    /// Optima used by [`Scorer::classify`].
    pub optima: Vec<(String, [f64; 2])>,
    pub tolerance: f64,
}

impl Scorer {
    /// `evaluation` scores profiles; `classes` names the conventions runs
    /// are bucketed into.
    pub fn new(
        set: FeasibleSet,
        disagreement: [f64; 2],
        evaluation: &[WelfareKind],
        classes: &[WelfareKind],
        ia: IaParams,
    ) -> Result<Self> {
        if evaluation.is_empty() {
            return Err(Error::InvalidParameter("evaluation welfare set is empty".into()));
        }
        let spec = |k: WelfareKind| {
            let mut w = WelfareSpec::new(k, disagreement);
            if k == WelfareKind::InequityAverse {
                w.ia = Some(ia);
            }
            w
        };
        let welfares: Vec<WelfareSpec> = evaluation.iter().map(|&k| spec(k)).collect();
        let optima = classes
            .iter()
            .map(|&k| Ok((String::from(k.label()), welfare_optimum(&spec(k), &set)?.point)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scorer { set, disagreement, welfares, optima, tolerance: CONVENTION_TOLERANCE })
    }

    /// Scorer with the default evaluation set {util, IA} and convention
    /// classes {util, egal}.
    pub fn for_matrix(game: &MatrixGame, gamma: f64, ia: IaParams) -> Result<Self> {
        let d = disagreement_values(&EnvSpec::Matrix(game.clone()), gamma);
        Self::new(feasible_set(game, gamma)?, d, &DEFAULT_EVALUATION, &DEFAULT_CLASSES, ia)
    }

    /// Scorer for a gridworld from its planner's achievable set.
    pub fn for_grid(planner: &GridPlanner, ia: IaParams) -> Result<Self> {
        let d = disagreement_values(&planner.env, planner.gamma);
        Self::new(planner.feasible_set(), d, &DEFAULT_EVALUATION, &DEFAULT_CLASSES, ia)
    }

    pub fn score(&self, v: [f64; 2]) -> Result<f64> {
        Ok(normalized_score(v, &self.welfares, self.disagreement, &self.set)?.normalized_score)
    }

    pub fn classify(&self, v: [f64; 2]) -> Option<String> {
        classify_convention(v, &self.optima, self.tolerance)
    }
}

/// Welfare functions a profile is scored against by default.
pub const DEFAULT_EVALUATION: [WelfareKind; 2] = [WelfareKind::Utilitarian, WelfareKind::InequityAverse];

/// Conventions runs are bucketed into by default.
pub const DEFAULT_CLASSES: [WelfareKind; 2] = [WelfareKind::Utilitarian, WelfareKind::Egalitarian];

/// Episode settings for sampled evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Episode length on matrix games.
    pub matrix_length: usize,
    /// Episode length on gridworlds; 0 uses the environment's own.
    pub grid_length: usize,
    pub gamma: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { episodes: 10, matrix_length: 200, grid_length: 0, gamma: crate::DEFAULT_GAMMA }
    }
}

impl EvalConfig {
    pub fn episode_length(&self, env: &EnvSpec) -> usize {
        match env {
            EnvSpec::Matrix(_) => self.matrix_length,
            EnvSpec::Grid(g) if self.grid_length == 0 => g.episode_length,
            EnvSpec::Grid(_) => self.grid_length,
        }
    }
}

/// Per-episode value profiles of one match.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchOutcome {
    /// Average reward of each episode in value units.
    pub episodes: Vec<[f64; 2]>,
}

impl MatchOutcome {
    /// Mean profile over episodes.
    pub fn values(&self) -> [f64; 2] {
        let n = self.episodes.len().max(1) as f64;
        let s = self.episodes.iter().fold([0.0; 2], |a, v| [a[0] + v[0], a[1] + v[1]]);
        [s[0] / n, s[1] / n]
    }

    /// Mean of the episodes' normalized scores. Episodes may settle on
    /// different conventions, and the score of their averaged profile would
    /// count that mixture as a loss.
    pub fn score(&self, scorer: &Scorer) -> Result<f64> {
        let mut total = 0.0;
        for &v in &self.episodes {
            total += scorer.score(v)?;
        }
        Ok(total / self.episodes.len().max(1) as f64)
    }
}

/// Play seeded episodes and record each one's average reward in value units.
///
/// Episode `k` uses rollout seed `seed + k`; `before_episode` runs ahead of
/// each episode, e.g. to reseed the agents.
pub fn play_match<A: Agent, B: Agent>(
    env: &EnvSpec,
    a: &mut A,
    b: &mut B,
    config: &EvalConfig,
    seed: u64,
    mut before_episode: impl FnMut(usize, &mut A, &mut B),
) -> Result<MatchOutcome> {
    if config.episodes == 0 {
        return Err(Error::InvalidParameter("evaluation needs at least one episode".into()));
    }
    let length = config.episode_length(env);
    let mut episodes = Vec::with_capacity(config.episodes);
    for k in 0..config.episodes {
        before_episode(k, a, b);
        let t = rollout(env, [a as &mut dyn Agent, b as &mut dyn Agent], length, seed.wrapping_add(k as u64), config.gamma)?;
        episodes.push(t.average_values());
    }
    Ok(MatchOutcome { episodes })
}

/// Mean, standard error and count of one group of records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub key: Vec<String>,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; 0 for a single record.
    pub stderr: f64,
    pub n: usize,
}

/// Group records by the named columns and summarise their normalized scores.
/// Rows come out sorted by key.
pub fn aggregate(records: &[MatchRecord], keys: &[&str]) -> Result<Vec<AggregateCell>> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no records to aggregate".into()));
    }
    let mut groups: BTreeMap<Vec<String>, Vec<f64>> = BTreeMap::new();
    for r in records {
        let key = keys
            .iter()
            .map(|k| r.field(k).ok_or_else(|| Error::InvalidParameter(format!("unknown column {k}"))))
            .collect::<Result<Vec<_>>>()?;
        groups.entry(key).or_default().push(r.normalized_score);
    }
    Ok(groups.into_iter().map(|(key, scores)| summarise(key, &scores)).collect())
}

fn summarise(key: Vec<String>, scores: &[f64]) -> AggregateCell {
    let n = scores.len();
    let mean = scores.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
        sqrt(var) / sqrt(n as f64)
    } else {
        0.0
    };
    AggregateCell { key, mean, stderr, n }
}

/// Mean score of the records matching `pred`, if any.
pub fn mean_score(records: &[MatchRecord], pred: impl Fn(&MatchRecord) -> bool) -> Option<f64> {
    let scores: Vec<f64> = records.iter().filter(|r| pred(r)).map(|r| r.normalized_score).collect();
    (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Square score grid: mean cross-play score for every ordered pair of
/// welfare-set labels, rows indexed by seat 1's set.
pub fn score_grid(records: &[MatchRecord], sets: &[String]) -> Vec<Vec<Option<AggregateCell>>> {
    let mut grid = vec![vec![None; sets.len()]; sets.len()];
    for (i, a) in sets.iter().enumerate() {
        for (j, b) in sets.iter().enumerate() {
            let scores: Vec<f64> = records
                .iter()
                .filter(|r| r.pair_type != PairType::SelfPlay && r.welfare_p1 == *a && r.welfare_p2 == *b)
                .map(|r| r.normalized_score)
                .collect();
            if !scores.is_empty() {
                grid[i][j] = Some(summarise(vec![a.clone(), b.clone()], &scores));
            }
        }
    }
    grid
}
