//! Toroidal Coin Game gridworlds: the classic Coin Game and the asymmetric
//! bargaining Coin Game (ABCG).
//!
//! Player 0 is red, player 1 is blue. Both move simultaneously with one of
//! four moves; the board wraps around at the edges.

use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::JointAction;

pub const MOVES: usize = 4;
pub const MOVE_NAMES: [&str; MOVES] = ["up", "down", "left", "right"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    CoinGame,
    Abcg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoinKind {
    Plain,
    Cooperation,
    Disagreement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoinColor {
    Red,
    Blue,
    None,
}

impl CoinColor {
    pub fn owner(self) -> Option<usize> {
        match self {
            CoinColor::Red => Some(0),
            CoinColor::Blue => Some(1),
            CoinColor::None => None,
        }
    }

    fn from_bit(bit: usize) -> Self {
        if bit == 0 {
            CoinColor::Red
        } else {
            CoinColor::Blue
        }
    }

    fn bit(self) -> usize {
        match self {
            CoinColor::Blue => 1,
            _ => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coin {
    pub kind: CoinKind,
    pub color: CoinColor,
    pub cell: u8,
}

/// Full gridworld state. `coins[0]` is the plain coin (Coin Game) or the
/// cooperation coin (ABCG); `coins[1]` is the ABCG disagreement coin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub positions: [u8; 2],
    pub coins: [Option<Coin>; 2],
    /// Steps since the current coins spawned (ABCG timeout clock).
    pub timer: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub kind: GridKind,
    pub size: usize,
    pub episode_length: usize,
    /// Coin Game: reward for picking up any coin.
    pub pickup_reward: f64,
    /// Coin Game: reward to a coin's owner when the other player takes it.
    pub steal_penalty: f64,
    /// ABCG: (red, blue) reward when both step onto the cooperation coin.
    pub coop_reward: [f64; 2],
    /// ABCG: reward to the owner who consumes its disagreement coin.
    pub disagreement_reward: f64,
    /// ABCG: coins respawn after this many steps without consumption.
    pub respawn_timeout: usize,
}

impl GridConfig {
    pub fn coin_game() -> Self {
        GridConfig {
            kind: GridKind::CoinGame,
            size: 3,
            episode_length: 100,
            pickup_reward: 1.0,
            steal_penalty: -2.0,
            coop_reward: [0.0, 0.0],
            disagreement_reward: 0.0,
            respawn_timeout: 0,
        }
    }

    pub fn abcg() -> Self {
        GridConfig {
            kind: GridKind::Abcg,
            size: 3,
            episode_length: 100,
            pickup_reward: 0.0,
            steal_penalty: 0.0,
            coop_reward: [3.0, 1.0],
            disagreement_reward: 1.0,
            respawn_timeout: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 2 || self.size > 8 {
            return Err(Error::InvalidParameter("grid size must be in 2..=8".into()));
        }
        if self.kind == GridKind::Abcg {
            if self.size * self.size < 4 {
                return Err(Error::InvalidParameter("ABCG needs at least 4 cells".into()));
            }
            if self.respawn_timeout == 0 || self.respawn_timeout > 255 {
                return Err(Error::InvalidParameter("ABCG respawn timeout must be in 1..=255".into()));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.size * self.size
    }

    pub fn move_cell(&self, cell: u8, action: usize) -> u8 {
        let s = self.size;
        let (r, c) = (cell as usize / s, cell as usize % s);
        let (r, c) = match action {
            0 => ((r + s - 1) % s, c),
            1 => ((r + 1) % s, c),
            2 => (r, (c + s - 1) % s),
            _ => (r, (c + 1) % s),
        };
        (r * s + c) as u8
    }

    fn validate_action(&self, action: JointAction) -> Result<()> {
        for (player, a) in [(1, action.a1), (2, action.a2)] {
            if a >= MOVES {
                return Err(Error::InvalidAction {
                    player,
                    action: a,
                    available: MOVES,
                });
            }
        }
        Ok(())
    }

    pub fn initial_state<R: rand::RngCore>(&self, rng: &mut R) -> GridState {
        let cells = self.cells();
        let red = rng.random_range(0..cells);
        let mut blue = rng.random_range(0..cells - 1);
        if blue >= red {
            blue += 1;
        }
        let positions = [red as u8, blue as u8];
        GridState {
            positions,
            coins: self.spawn_coins(positions, rng),
            timer: 0,
        }
    }

    fn free_cells(&self, positions: [u8; 2]) -> Vec<u8> {
        (0..self.cells() as u8)
            .filter(|c| !positions.contains(c))
            .collect()
    }

    pub fn spawn_coins<R: rand::RngCore>(&self, positions: [u8; 2], rng: &mut R) -> [Option<Coin>; 2] {
        let free = self.free_cells(positions);
        match self.kind {
            GridKind::CoinGame => {
                let cell = free[rng.random_range(0..free.len())];
                let color = CoinColor::from_bit(rng.random_range(0..2));
                [Some(Coin { kind: CoinKind::Plain, color, cell }), None]
            }
            GridKind::Abcg => {
                let i = rng.random_range(0..free.len());
                let mut j = rng.random_range(0..free.len() - 1);
                if j >= i {
                    j += 1;
                }
                let color = CoinColor::from_bit(rng.random_range(0..2));
                [
                    Some(Coin { kind: CoinKind::Cooperation, color: CoinColor::None, cell: free[i] }),
                    Some(Coin { kind: CoinKind::Disagreement, color, cell: free[j] }),
                ]
            }
        }
    }

    /// Every equally likely coin layout a respawn can produce.
    pub fn respawn_outcomes(&self, positions: [u8; 2]) -> Vec<[Option<Coin>; 2]> {
        let free = self.free_cells(positions);
        let mut out = Vec::new();
        match self.kind {
            GridKind::CoinGame => {
                for &cell in &free {
                    for bit in 0..2 {
                        out.push([
                            Some(Coin { kind: CoinKind::Plain, color: CoinColor::from_bit(bit), cell }),
                            None,
                        ]);
                    }
                }
            }
            GridKind::Abcg => {
                for &c in &free {
                    for &d in &free {
                        if c == d {
                            continue;
                        }
                        for bit in 0..2 {
                            out.push([
                                Some(Coin { kind: CoinKind::Cooperation, color: CoinColor::None, cell: c }),
                                Some(Coin { kind: CoinKind::Disagreement, color: CoinColor::from_bit(bit), cell: d }),
                            ]);
                        }
                    }
                }
            }
        }
        out
    }

    /// Deterministic part of a step: moves, rewards, and whether the coins
    /// must respawn.
    pub fn resolve(&self, state: &GridState, action: JointAction) -> Resolution {
        let positions = [
            self.move_cell(state.positions[0], action.a1),
            self.move_cell(state.positions[1], action.a2),
        ];
        let mut rewards = [0.0; 2];
        let mut consumed = false;
        match self.kind {
            GridKind::CoinGame => {
                if let Some(coin) = state.coins[0] {
                    for (p, &pos) in positions.iter().enumerate() {
                        if pos == coin.cell {
                            consumed = true;
                            rewards[p] += self.pickup_reward;
                            if let Some(owner) = coin.color.owner() {
                                if owner != p {
                                    rewards[owner] += self.steal_penalty;
                                }
                            }
                        }
                    }
                }
            }
            GridKind::Abcg => {
                if let Some(coop) = state.coins[0] {
                    if positions[0] == coop.cell && positions[1] == coop.cell {
                        consumed = true;
                        rewards[0] += self.coop_reward[0];
                        rewards[1] += self.coop_reward[1];
                    }
                }
                if !consumed {
                    if let Some(dc) = state.coins[1] {
                        if let Some(owner) = dc.color.owner() {
                            if positions[owner] == dc.cell {
                                consumed = true;
                                rewards[owner] += self.disagreement_reward;
                            }
                        }
                    }
                }
            }
        }
        let timed_out = !consumed
            && self.kind == GridKind::Abcg
            && state.timer as usize + 1 >= self.respawn_timeout;
        Resolution {
            positions,
            rewards,
            respawn: consumed || timed_out,
            consumed,
        }
    }

    pub fn step<R: rand::RngCore>(
        &self,
        state: &GridState,
        action: JointAction,
        rng: &mut R,
    ) -> Result<(GridState, [f64; 2])> {
        self.validate_action(action)?;
        let res = self.resolve(state, action);
        let next = if res.respawn {
            GridState {
                positions: res.positions,
                coins: self.spawn_coins(res.positions, rng),
                timer: 0,
            }
        } else {
            GridState {
                positions: res.positions,
                coins: state.coins,
                timer: match self.kind {
                    GridKind::Abcg => state.timer + 1,
                    GridKind::CoinGame => 0,
                },
            }
        };
        Ok((next, res.rewards))
    }

    // Canonical (translation-reduced) indexing: the torus is translation
    // invariant, so states are keyed relative to the red player's cell.

    fn timer_slots(&self) -> usize {
        match self.kind {
            GridKind::CoinGame => 1,
            GridKind::Abcg => self.respawn_timeout,
        }
    }

    pub fn canonical_count(&self) -> usize {
        let c = self.cells();
        match self.kind {
            GridKind::CoinGame => c * c * 2,
            GridKind::Abcg => c * c * c * 2 * self.timer_slots(),
        }
    }

    fn relative(&self, origin: u8, cell: u8) -> usize {
        let s = self.size;
        let (ro, co) = (origin as usize / s, origin as usize % s);
        let (r, c) = (cell as usize / s, cell as usize % s);
        ((r + s - ro) % s) * s + (c + s - co) % s
    }

    pub fn canonical_index(&self, state: &GridState) -> usize {
        let c = self.cells();
        let red = state.positions[0];
        let blue = self.relative(red, state.positions[1]);
        let c0 = state.coins[0].expect("first coin is always present");
        let mut idx = blue * c + self.relative(red, c0.cell);
        match self.kind {
            GridKind::CoinGame => idx * 2 + c0.color.bit(),
            GridKind::Abcg => {
                let dc = state.coins[1].expect("ABCG has a disagreement coin");
                idx = idx * c + self.relative(red, dc.cell);
                idx = idx * 2 + dc.color.bit();
                idx * self.timer_slots() + state.timer as usize
            }
        }
    }

    /// Representative state (red at cell 0) of a canonical index, or `None`
    /// when the index does not describe a legal layout.
    pub fn canonical_state(&self, index: usize) -> Option<GridState> {
        let c = self.cells();
        match self.kind {
            GridKind::CoinGame => {
                let color = index % 2;
                let rest = index / 2;
                let coin = rest % c;
                let blue = rest / c;
                Some(GridState {
                    positions: [0, blue as u8],
                    coins: [
                        Some(Coin { kind: CoinKind::Plain, color: CoinColor::from_bit(color), cell: coin as u8 }),
                        None,
                    ],
                    timer: 0,
                })
            }
            GridKind::Abcg => {
                let slots = self.timer_slots();
                let timer = index % slots;
                let mut rest = index / slots;
                let color = rest % 2;
                rest /= 2;
                let dc = rest % c;
                rest /= c;
                let coop = rest % c;
                let blue = rest / c;
                if coop == dc || blue >= c {
                    return None;
                }
                Some(GridState {
                    positions: [0, blue as u8],
                    coins: [
                        Some(Coin { kind: CoinKind::Cooperation, color: CoinColor::None, cell: coop as u8 }),
                        Some(Coin { kind: CoinKind::Disagreement, color: CoinColor::from_bit(color), cell: dc as u8 }),
                    ],
                    timer: timer as u8,
                })
            }
        }
    }

    /// Immediate rewards of a joint action, ignoring respawn randomness.
    pub fn immediate_rewards(&self, state: &GridState, action: JointAction) -> [f64; 2] {
        self.resolve(state, action).rewards
    }
}

/// Outcome of the deterministic part of a gridworld step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resolution {
    pub positions: [u8; 2],
    pub rewards: [f64; 2],
    pub respawn: bool,
    pub consumed: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn abcg_state(red: u8, blue: u8, coop: u8, dc: u8, color: CoinColor) -> GridState {
        GridState {
            positions: [red, blue],
            coins: [
                Some(Coin { kind: CoinKind::Cooperation, color: CoinColor::None, cell: coop }),
                Some(Coin { kind: CoinKind::Disagreement, color, cell: dc }),
            ],
            timer: 0,
        }
    }

    #[test]
    fn moves_wrap_around() {
        let g = GridConfig::abcg();
        assert_eq!(g.move_cell(0, 0), 6);
        assert_eq!(g.move_cell(0, 2), 2);
        assert_eq!(g.move_cell(8, 1), 2);
        assert_eq!(g.move_cell(8, 3), 6);
    }

    #[test]
    fn coin_game_steal_penalty() {
        let g = GridConfig::coin_game();
        // Red at 0 moves right onto the blue coin at 1.
        let s = GridState {
            positions: [0, 8],
            coins: [Some(Coin { kind: CoinKind::Plain, color: CoinColor::Blue, cell: 1 }), None],
            timer: 0,
        };
        let (_, r) = g.step(&s, JointAction::new(3, 0), &mut seeded_rng(1)).unwrap();
        assert_eq!(r, [1.0, -2.0]);
    }

    #[test]
    fn coin_game_simultaneous_pickup() {
        let g = GridConfig::coin_game();
        let s = GridState {
            positions: [0, 2],
            coins: [Some(Coin { kind: CoinKind::Plain, color: CoinColor::Red, cell: 1 }), None],
            timer: 0,
        };
        // Red moves right, blue moves left: both land on the red coin.
        let (_, r) = g.step(&s, JointAction::new(3, 2), &mut seeded_rng(1)).unwrap();
        assert_eq!(r, [1.0 - 2.0, 1.0]);
    }

    #[test]
    fn cooperation_coin_needs_both_players() {
        let g = GridConfig::abcg();
        let s = abcg_state(0, 2, 1, 5, CoinColor::Blue);
        let (_, both) = g.step(&s, JointAction::new(3, 2), &mut seeded_rng(1)).unwrap();
        assert_eq!(both, [3.0, 1.0]);
        let (next, alone) = g.step(&s, JointAction::new(3, 0), &mut seeded_rng(1)).unwrap();
        assert_eq!(alone, [0.0, 0.0]);
        assert_eq!(next.coins, s.coins);
        assert_eq!(next.timer, 1);
    }

    #[test]
    fn disagreement_coin_only_for_its_owner() {
        let g = GridConfig::abcg();
        // Blue coin at 1; red steps onto it: nothing happens.
        let s = abcg_state(0, 8, 4, 1, CoinColor::Blue);
        let (_, r) = g.step(&s, JointAction::new(3, 0), &mut seeded_rng(3)).unwrap();
        assert_eq!(r, [0.0, 0.0]);
        // Blue at 2 moves left onto it.
        let s = abcg_state(4, 2, 8, 1, CoinColor::Blue);
        let (next, r) = g.step(&s, JointAction::new(0, 2), &mut seeded_rng(3)).unwrap();
        assert_eq!(r, [0.0, g.disagreement_reward]);
        assert_eq!(next.timer, 0);
    }

    #[test]
    fn timeout_respawns_coins() {
        let g = GridConfig::abcg();
        let mut s = abcg_state(0, 4, 8, 2, CoinColor::Red);
        s.timer = (g.respawn_timeout - 1) as u8;
        let (next, _) = g.step(&s, JointAction::new(1, 1), &mut seeded_rng(9)).unwrap();
        assert_eq!(next.timer, 0);
    }

    #[test]
    fn canonical_roundtrip_and_translation_invariance() {
        let g = GridConfig::abcg();
        let s = abcg_state(4, 5, 0, 7, CoinColor::Blue);
        let idx = g.canonical_index(&s);
        let rep = g.canonical_state(idx).unwrap();
        assert_eq!(g.canonical_index(&rep), idx);
        assert_eq!(rep.positions[0], 0);
        let c = GridConfig::coin_game();
        let cs = GridState {
            positions: [7, 3],
            coins: [Some(Coin { kind: CoinKind::Plain, color: CoinColor::Red, cell: 0 }), None],
            timer: 0,
        };
        let rep = c.canonical_state(c.canonical_index(&cs)).unwrap();
        assert_eq!(c.canonical_index(&rep), c.canonical_index(&cs));
    }

    #[test]
    fn respawn_outcomes_avoid_players() {
        let g = GridConfig::abcg();
        let outs = g.respawn_outcomes([0, 4]);
        assert_eq!(outs.len(), 7 * 6 * 2);
        for o in outs {
            let (c, d) = (o[0].unwrap().cell, o[1].unwrap().cell);
            assert!(c != d && ![0, 4].contains(&c) && ![0, 4].contains(&d));
        }
    }
}
