//! Online payoff estimation from confounded feedback.
//!
//! The defender sees interception counts at covered targets and one
//! aggregate loss figure for everything else. Covered payoffs are learned
//! from interception counts normalized by the running per-target maximum;
//! uncovered penalties from the round loss normalized by the running
//! per-round maximum. Because the loss cannot be attributed to an entry
//! point, every uncovered target absorbs it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{DefenderAction, PenaltyDistribution};

/// Learned per-target payoffs plus their running normalizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffEstimate {
    /// Estimated covering payoff per target, in [0, 0.5].
    pub covered_est: Vec<f64>,
    /// Estimated uncovering penalty per target, in [-0.5, 0].
    pub uncovered_est: Vec<f64>,
    /// Interception totals per target.
    pub cum_interceptions: Vec<u64>,
    /// max_i cum_interceptions[i].
    pub max_interceptions: u64,
    /// Largest single-round loss seen so far (kg); nondecreasing.
    pub max_crop_loss: f64,
}

impl PayoffEstimate {
    pub fn new(n: usize) -> Self {
        PayoffEstimate {
            covered_est: vec![0.0; n],
            uncovered_est: vec![0.0; n],
            cum_interceptions: vec![0; n],
            max_interceptions: 0,
            max_crop_loss: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.covered_est.len()
    }
}

/// What the defender actually gets to see after one round: its own
/// coverage, interception counts at covered targets, and the aggregate
/// loss. Attack indicators for uncovered targets are absent by
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundObservation {
    pub coverage: DefenderAction,
    pub interceptions: Vec<u64>,
    pub crop_loss: f64,
}

impl RoundObservation {
    pub fn validate(&self) -> Result<()> {
        if self.interceptions.len() != self.coverage.n() {
            return Err(Error::DimensionMismatch {
                expected: self.coverage.n(),
                got: self.interceptions.len(),
            });
        }
        if !(self.crop_loss.is_finite() && self.crop_loss >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "crop loss must be finite and nonnegative, got {}",
                self.crop_loss
            )));
        }
        for i in 0..self.coverage.n() {
            if !self.coverage.coverage[i] && self.interceptions[i] != 0 {
                return Err(Error::InvalidInput(format!(
                    "interception reported at uncovered target {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Folds one observation into the estimate.
///
/// Order matters: the loss maximum is refreshed before the uncovered
/// penalty is computed, so the normalized ratio never exceeds 1. Covered
/// targets keep their previous uncovered estimate this round; uncovered
/// targets are overwritten.
pub fn update_payoffs(
    state: &mut PayoffEstimate,
    obs: &RoundObservation,
    mode: PenaltyDistribution,
) -> Result<()> {
    obs.validate()?;
    let n = state.n();
    if obs.coverage.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: obs.coverage.n(),
        });
    }

    for i in 0..n {
        state.cum_interceptions[i] += obs.interceptions[i];
    }
    state.max_interceptions = state.cum_interceptions.iter().copied().max().unwrap_or(0);
    if state.max_interceptions > 0 {
        let denom = state.max_interceptions as f64;
        for i in 0..n {
            state.covered_est[i] = 0.5 * state.cum_interceptions[i] as f64 / denom;
        }
    }

    state.max_crop_loss = state.max_crop_loss.max(obs.crop_loss);
    if state.max_crop_loss > 0.0 {
        let uncovered_count = n - obs.coverage.popcount();
        let share = match mode {
            PenaltyDistribution::UniformFull => 1.0,
            PenaltyDistribution::PerShare => {
                if uncovered_count == 0 {
                    1.0
                } else {
                    1.0 / uncovered_count as f64
                }
            }
        };
        let penalty = -0.5 * share * obs.crop_loss / state.max_crop_loss;
        for i in 0..n {
            if !obs.coverage.coverage[i] {
                state.uncovered_est[i] = penalty;
            }
        }
    }
    Ok(())
}

/// Per-target reward the learner is allowed to see this round:
/// `covered_est - uncovered_est` at covered targets that intercepted
/// something, zero everywhere else. `state` must already include `obs`.
pub fn observed_round_rewards(state: &PayoffEstimate, obs: &RoundObservation) -> Vec<f64> {
    (0..state.n())
        .map(|i| {
            if obs.coverage.coverage[i] && obs.interceptions[i] > 0 {
                state.covered_est[i] - state.uncovered_est[i]
            } else {
                0.0
            }
        })
        .collect()
}
