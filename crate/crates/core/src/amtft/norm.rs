use alloc::sync::Arc;

use crate::error::{Error, Result};
use crate::game::{EnvSpec, EnvState, Seat};
use crate::planning::{state_index, JointPlan, TabularPolicy};
use crate::welfare::WelfareSpec;

use super::{AmTftBundle, Phase, TraceEntry};

/// A norm: normative (cooperative) play, punishment play, and the deviation
/// flag that switches between them.
#[derive(Clone, Debug)]
pub struct Norm {
    pub welfare: WelfareSpec,
    pub normative: Arc<JointPlan>,
    pub punishment: [TabularPolicy; 2],
}

impl Norm {
    pub fn from_bundle(bundle: &AmTftBundle) -> Self {
        Norm { welfare: bundle.welfare, normative: bundle.plan.clone(), punishment: bundle.punish.clone() }
    }

    /// The action the norm prescribes for `seat`, given the deviation flag.
    pub fn prescribed(&self, seat: Seat, env: &EnvSpec, state: &EnvState, gap: f64, deviated: bool) -> usize {
        if deviated {
            self.punishment[seat].greedy(state_index(env, state))
        } else {
            self.normative.joint_action(env, state, gap).get(seat)
        }
    }
}

/// Replay a recorded trace against the norms of the agent's welfare set and
/// return the first step whose action the active norm does not prescribe.
pub fn check_trace(norms: &[Norm], seat: Seat, env: &EnvSpec, trace: &[TraceEntry]) -> Result<Option<usize>> {
    for entry in trace {
        let norm = norms
            .get(entry.welfare)
            .ok_or_else(|| Error::InvalidParameter("trace refers to an unknown welfare function".into()))?;
        let deviated = matches!(entry.phase, Phase::Punish { .. });
        if norm.prescribed(seat, env, &entry.state, entry.gap, deviated) != entry.action {
            return Ok(Some(entry.t));
        }
    }
    Ok(None)
}
