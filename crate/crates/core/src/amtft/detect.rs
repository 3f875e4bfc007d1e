use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::welfare::WelfareSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NoDisagreement,
    /// The opponent is following another recognised welfare function.
    Disagreement(WelfareSpec),
    Unrecognized,
}

/// Classify the opponent's recent play.
///
/// `window[t][k]` records whether the opponent's action at step `t` matched
/// its seat of `library[k]`'s cooperative plan. Over the last `m` steps the
/// best-matching convention wins if it reaches `rho`; the current one wins
/// ties.
pub fn detect_normative_disagreement(
    window: &[Vec<bool>],
    library: &[WelfareSpec],
    current: &WelfareSpec,
    m: usize,
    rho: f64,
) -> Result<Verdict> {
    if library.is_empty() {
        return Err(Error::InvalidParameter("welfare library is empty".into()));
    }
    if m == 0 || window.len() < m {
        return Err(Error::InvalidParameter("detection window holds fewer than M steps".into()));
    }
    if window.iter().any(|row| row.len() != library.len()) {
        return Err(Error::InvalidParameter("window rows must cover the whole library".into()));
    }
    let recent = &window[window.len() - m..];
    let fraction = |k: usize| recent.iter().filter(|row| row[k]).count() as f64 / m as f64;
    let fractions: Vec<f64> = (0..library.len()).map(fraction).collect();
    let own = library.iter().position(|w| w == current).map_or(0.0, |k| fractions[k]);
    let (best, best_frac) = fractions
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, &f)| if f > acc.1 { (k, f) } else { acc });
    if own >= rho && own >= best_frac {
        return Ok(Verdict::NoDisagreement);
    }
    if best_frac >= rho && library[best] != *current {
        return Ok(Verdict::Disagreement(library[best]));
    }
    Ok(Verdict::Unrecognized)
}
