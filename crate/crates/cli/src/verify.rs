//! `verify`: the grim-policy minimax bound over welfare pairs of matrix games.

use anyhow::{Context, Result};
use normbargain_core::exploitability::{verify_game, BoundOutcome, BoundReport};
use normbargain_core::game::MatrixGame;
use serde::Serialize;

/// Games checked when none are named.
pub const DEFAULT_GAMES: [&str; 2] = ["IAsymBoS", "ExtremeBoS"];

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub gamma: f64,
    pub horizon: usize,
    pub reports: Vec<BoundReport>,
}

impl VerifyReport {
    pub fn count(&self, pred: impl Fn(&BoundOutcome) -> bool) -> usize {
        self.reports.iter().filter(|r| pred(&r.outcome)).count()
    }

    pub fn violations(&self) -> usize {
        self.count(|o| *o == BoundOutcome::Violated)
    }
}

/// Game names from a comma-separated list; an empty list is an empty set.
pub fn parse_games(list: &str) -> Result<Vec<MatrixGame>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| MatrixGame::by_name(s).with_context(|| format!("unknown matrix game {s:?}")))
        .collect()
}

pub fn verify(games: &[MatrixGame], gamma: f64, horizon: usize) -> Result<VerifyReport> {
    let mut reports = Vec::new();
    for g in games {
        reports.extend(verify_game(g, gamma, horizon).with_context(|| format!("verifying {}", g.name))?);
    }
    Ok(VerifyReport { gamma, horizon, reports })
}
