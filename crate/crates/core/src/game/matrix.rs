//! One-state stage games played repeatedly.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::JointAction;

/// A two-player normal-form stage game with `actions` actions per player.
///
/// `payoffs[a1 * actions + a2]` holds the reward pair `(r1, r2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixGame {
    pub name: String,
    pub actions: usize,
    pub action_names: Vec<String>,
    pub payoffs: Vec<[f64; 2]>,
}

impl MatrixGame {
    pub fn new(
        name: impl Into<String>,
        action_names: &[&str],
        payoffs: Vec<[f64; 2]>,
    ) -> Result<Self> {
        let actions = action_names.len();
        if actions == 0 {
            return Err(Error::InvalidParameter("a game needs at least one action".into()));
        }
        if payoffs.len() != actions * actions {
            return Err(Error::InvalidParameter(format!(
                "expected {} payoff pairs, got {}",
                actions * actions,
                payoffs.len()
            )));
        }
        if payoffs.iter().flatten().any(|r| !r.is_finite()) {
            return Err(Error::InvalidParameter("payoffs must be finite".into()));
        }
        Ok(MatrixGame {
            name: name.into(),
            actions,
            action_names: action_names.iter().map(|s| s.to_string()).collect(),
            payoffs,
        })
    }

    /// Prisoner's dilemma with action 0 = C, 1 = D and the usual
    /// temptation / reward / punishment / sucker labels.
    pub fn prisoners_dilemma(t: f64, r: f64, p: f64, s: f64) -> Result<Self> {
        if !(t > r && r > p && p > s && 2.0 * r > t + s) {
            return Err(Error::InvalidParameter(format!(
                "prisoner's dilemma needs T > R > P > S and 2R > T + S, got T={t} R={r} P={p} S={s}"
            )));
        }
        Self::new("IPD", &["C", "D"], vec![[r, r], [s, t], [t, s], [p, p]])
    }

    /// Iterated prisoner's dilemma with T=0, R=-1, P=-3, S=-4.
    pub fn ipd() -> Self {
        Self::prisoners_dilemma(0.0, -1.0, -3.0, -4.0).expect("default IPD payoffs are valid")
    }

    /// Pure coordination: both players only care about matching.
    pub fn pure_coordination() -> Self {
        Self::new(
            "PureCoordination",
            &["B", "S"],
            vec![[1.0, 1.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0]],
        )
        .expect("valid")
    }

    /// Symmetric Bach or Stravinsky.
    pub fn bos() -> Self {
        Self::new(
            "BoS",
            &["B", "S"],
            vec![[3.0, 2.0], [0.0, 0.0], [0.0, 0.0], [2.0, 3.0]],
        )
        .expect("valid")
    }

    /// Asymmetric Bach or Stravinsky, the stage game of IAsymBoS.
    pub fn asym_bos() -> Self {
        Self::new(
            "IAsymBoS",
            &["B", "S"],
            vec![[4.0, 1.0], [0.0, 0.0], [0.0, 0.0], [2.0, 2.0]],
        )
        .expect("valid")
    }

    /// BoS with an extreme asymmetry: equilibria (15, 10) and (1, 11).
    pub fn extreme_bos() -> Self {
        Self::new(
            "ExtremeBoS",
            &["B", "S"],
            vec![[15.0, 10.0], [0.0, 0.0], [0.0, 0.0], [1.0, 11.0]],
        )
        .expect("valid")
    }

    /// Every outcome pays `value` to both players.
    pub fn constant(actions: usize, value: f64) -> Self {
        let names: Vec<String> = (0..actions).map(|a| format!("a{a}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        Self::new("Constant", &refs, vec![[value, value]; actions * actions]).expect("valid")
    }

    /// Look up a bundled game by name (case-insensitive).
    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "ipd" => Some(Self::ipd()),
            "iasymbos" | "asymbos" | "asym_bos" => Some(Self::asym_bos()),
            "bos" => Some(Self::bos()),
            "purecoordination" | "pure_coordination" => Some(Self::pure_coordination()),
            "extremebos" | "extreme_bos" => Some(Self::extreme_bos()),
            _ => None,
        }
    }

    pub fn joint_actions(&self) -> usize {
        self.actions * self.actions
    }

    pub fn payoff(&self, action: JointAction) -> [f64; 2] {
        self.payoffs[action.index(self.actions)]
    }

    pub fn validate(&self, action: JointAction) -> Result<()> {
        for (player, a) in [(1, action.a1), (2, action.a2)] {
            if a >= self.actions {
                return Err(Error::InvalidAction {
                    player,
                    action: a,
                    available: self.actions,
                });
            }
        }
        Ok(())
    }

    /// The same game with the two players' roles exchanged.
    pub fn transpose(&self) -> Self {
        let n = self.actions;
        let mut payoffs = vec![[0.0; 2]; n * n];
        for a1 in 0..n {
            for a2 in 0..n {
                let [r1, r2] = self.payoffs[a1 * n + a2];
                payoffs[a2 * n + a1] = [r2, r1];
            }
        }
        MatrixGame {
            name: format!("{}^T", self.name),
            actions: n,
            action_names: self.action_names.clone(),
            payoffs,
        }
    }

    /// Game with every payoff mapped through `f`.
    pub fn map_payoffs(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        MatrixGame {
            payoffs: self.payoffs.iter().map(|&p| f(p)).collect(),
            ..self.clone()
        }
    }

    /// Pure-strategy Nash equilibria of the stage game.
    pub fn pure_equilibria(&self) -> Vec<JointAction> {
        let n = self.actions;
        let mut out = Vec::new();
        for a1 in 0..n {
            for a2 in 0..n {
                let [r1, r2] = self.payoffs[a1 * n + a2];
                let best1 = (0..n).all(|b| self.payoffs[b * n + a2][0] <= r1);
                let best2 = (0..n).all(|b| self.payoffs[a1 * n + b][1] <= r2);
                if best1 && best2 {
                    out.push(JointAction::new(a1, a2));
                }
            }
        }
        out
    }
}

/// Coordination-problem taxonomy of a stage game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameClass {
    pub is_mixed_motive: bool,
    pub is_coordination_problem: bool,
    pub is_bargaining_problem: bool,
    pub is_symmetric: bool,
}

const CLASS_TOL: f64 = 1e-12;

fn dominates(a: [f64; 2], b: [f64; 2]) -> bool {
    a[0] >= b[0] && a[1] >= b[1] && (a[0] > b[0] || a[1] > b[1])
}

/// Classify a stage game from its pure equilibria and outcome set.
///
/// A coordination problem has at least two Pareto-optimal pure equilibria; it is a
/// bargaining problem when the players also rank two of those equilibria in
/// opposite order. Mixed motive means some pair of outcomes is ranked oppositely.
pub fn classify_game(game: &MatrixGame) -> GameClass {
    let outcomes = &game.payoffs;
    let pareto_optimal = |p: [f64; 2]| !outcomes.iter().any(|&q| dominates(q, p));

    let efficient_equilibria: Vec<[f64; 2]> = game
        .pure_equilibria()
        .into_iter()
        .map(|ja| game.payoff(ja))
        .filter(|&p| pareto_optimal(p))
        .collect();

    let opposed = |a: [f64; 2], b: [f64; 2]| {
        (a[0] - b[0]) * (a[1] - b[1]) < -CLASS_TOL
    };

    let is_mixed_motive = outcomes
        .iter()
        .enumerate()
        .any(|(i, &a)| outcomes[i + 1..].iter().any(|&b| opposed(a, b)));

    let is_coordination_problem = efficient_equilibria.len() >= 2;
    let conflicting = efficient_equilibria
        .iter()
        .enumerate()
        .any(|(i, &a)| efficient_equilibria[i + 1..].iter().any(|&b| opposed(a, b)));
    let is_bargaining_problem = is_coordination_problem && is_mixed_motive && conflicting;

    let is_symmetric = outcomes.iter().all(|&[a, b]| {
        outcomes
            .iter()
            .any(|&[c, d]| crate::math::abs(c - b) <= CLASS_TOL && crate::math::abs(d - a) <= CLASS_TOL)
    });

    GameClass {
        is_mixed_motive,
        is_coordination_problem,
        is_bargaining_problem,
        is_symmetric,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asym_bos_payoffs() {
        let g = MatrixGame::asym_bos();
        assert_eq!(g.payoff(JointAction::new(0, 0)), [4.0, 1.0]);
        assert_eq!(g.payoff(JointAction::new(0, 1)), [0.0, 0.0]);
        assert_eq!(g.payoff(JointAction::new(1, 1)), [2.0, 2.0]);
    }

    #[test]
    fn ipd_dominance_and_efficiency() {
        let g = MatrixGame::ipd();
        let (c, d) = (0, 1);
        for other in [c, d] {
            assert!(g.payoff(JointAction::new(d, other))[0] > g.payoff(JointAction::new(c, other))[0]);
            assert!(g.payoff(JointAction::new(other, d))[1] > g.payoff(JointAction::new(other, c))[1]);
        }
        let cc = g.payoff(JointAction::new(c, c));
        let dd = g.payoff(JointAction::new(d, d));
        assert!(cc[0] > dd[0] && cc[1] > dd[1]);
        assert_eq!(dd, [-3.0, -3.0]);
    }

    #[test]
    fn rejects_bad_dilemma() {
        assert!(MatrixGame::prisoners_dilemma(0.0, -1.0, -3.0, -1.5).is_err());
        assert!(MatrixGame::prisoners_dilemma(5.0, 3.0, 1.0, -10.0).is_ok());
        assert!(MatrixGame::prisoners_dilemma(5.0, 3.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn taxonomy_of_the_three_coordination_games() {
        let pc = classify_game(&MatrixGame::pure_coordination());
        assert!(pc.is_coordination_problem && !pc.is_mixed_motive && !pc.is_bargaining_problem);

        let bos = classify_game(&MatrixGame::bos());
        assert!(bos.is_bargaining_problem && bos.is_symmetric);

        let asym = classify_game(&MatrixGame::asym_bos());
        assert!(asym.is_bargaining_problem && !asym.is_symmetric);

        let ipd = classify_game(&MatrixGame::ipd());
        assert!(ipd.is_mixed_motive && !ipd.is_coordination_problem);
    }

    #[test]
    fn classification_is_invariant_to_player_swap() {
        for g in [
            MatrixGame::ipd(),
            MatrixGame::bos(),
            MatrixGame::asym_bos(),
            MatrixGame::extreme_bos(),
            MatrixGame::pure_coordination(),
        ] {
            let a = classify_game(&g);
            let b = classify_game(&g.transpose());
            assert_eq!(a.is_symmetric, b.is_symmetric, "{}", g.name);
            assert_eq!(a.is_bargaining_problem, b.is_bargaining_problem, "{}", g.name);
        }
    }

    #[test]
    fn invalid_action_is_rejected() {
        let g = MatrixGame::asym_bos();
        let err = g.validate(JointAction::new(0, 2)).unwrap_err();
        assert!(matches!(err, Error::InvalidAction { player: 2, action: 2, available: 2 }));
    }
}
