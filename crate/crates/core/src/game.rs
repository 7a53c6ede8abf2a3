//! Domain types and the utility/reward algebra shared by policies,
//! environments, and metrics.
//!
//! A game is played over `n_targets` boundary segments. Each round the
//! defender covers at most `defender_budget` (K) segments and the attacker
//! raids at most `attacker_budget` (Q) of them. Payoffs are bounded to
//! [-0.5, 0.5] per target so that the per-target reward
//! `r_i = a_i * (covered_i - uncovered_i)` always lands in [0, 1].
//!
//! `attacker_budget` doubles as the attack-norm constant m used by the
//! regret bound evaluator; the two symbols name the same quantity here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the identity `utility == v . r + constant_term`.
pub const UTILITY_IDENTITY_TOL: f64 = 1e-12;

/// How the aggregate round loss is spread over uncovered targets when
/// learning the uncovered payoff estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyDistribution {
    /// Every uncovered target receives the full normalized round loss.
    /// Reaches the documented [-0.5, 0] estimate range.
    #[default]
    UniformFull,
    /// The normalized loss is divided by the number of uncovered targets.
    PerShare,
}

/// Static game parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    /// Number of boundary segments N.
    #[serde(default = "default_n_targets")]
    pub n_targets: usize,
    /// Guard resources per round K.
    #[serde(default = "default_defender_budget")]
    pub defender_budget: usize,
    /// Simultaneous attacks per round Q (also the bound constant m).
    #[serde(default = "default_attacker_budget")]
    pub attacker_budget: usize,
    /// Rounds per game T.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Perturbation rate eta; draws are exponential with mean 1/eta.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Resampling truncation M.
    #[serde(default = "default_gr_truncation")]
    pub gr_truncation: usize,
    /// Base seed for every derived stream.
    #[serde(default)]
    pub rng_seed: u64,
    /// Loss attribution mode for the uncovered-payoff estimator.
    #[serde(default)]
    pub penalty_distribution: PenaltyDistribution,
}

fn default_n_targets() -> usize {
    57
}
fn default_defender_budget() -> usize {
    5
}
fn default_attacker_budget() -> usize {
    3
}
fn default_horizon() -> usize {
    100
}
fn default_eta() -> f64 {
    0.5
}
fn default_gr_truncation() -> usize {
    8
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            n_targets: default_n_targets(),
            defender_budget: default_defender_budget(),
            attacker_budget: default_attacker_budget(),
            horizon: default_horizon(),
            eta: default_eta(),
            gr_truncation: default_gr_truncation(),
            rng_seed: 0,
            penalty_distribution: PenaltyDistribution::default(),
        }
    }
}

impl GameConfig {
    /// Validates every field, reporting the config-file path of the first
    /// offender.
    pub fn validate(&self) -> Result<()> {
        if self.n_targets == 0 {
            return Err(Error::invalid_config("game.n_targets", "must be >= 1"));
        }
        if self.defender_budget == 0 || self.defender_budget > self.n_targets {
            return Err(Error::invalid_config(
                "game.defender_budget",
                format!("must be in 1..={}", self.n_targets),
            ));
        }
        if self.attacker_budget == 0 || self.attacker_budget > self.n_targets {
            return Err(Error::invalid_config(
                "game.attacker_budget",
                format!("must be in 1..={}", self.n_targets),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::invalid_config("game.horizon", "must be >= 1"));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid_config("game.eta", "must be finite and > 0"));
        }
        if self.gr_truncation == 0 {
            return Err(Error::invalid_config("game.gr_truncation", "must be >= 1"));
        }
        Ok(())
    }
}

/// Binary coverage vector; at most K entries set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefenderAction {
    pub coverage: Vec<bool>,
}

impl DefenderAction {
    pub fn empty(n: usize) -> Self {
        DefenderAction {
            coverage: vec![false; n],
        }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Self {
        let mut coverage = vec![false; n];
        for &i in indices {
            coverage[i] = true;
        }
        DefenderAction { coverage }
    }

    pub fn n(&self) -> usize {
        self.coverage.len()
    }

    pub fn popcount(&self) -> usize {
        self.coverage.iter().filter(|&&c| c).count()
    }

    pub fn covered_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.coverage[i]).collect()
    }

    /// `"0101.."` rendering used in the per-round CSV.
    pub fn bitstring(&self) -> String {
        self.coverage
            .iter()
            .map(|&c| if c { '1' } else { '0' })
            .collect()
    }
}

/// Binary attack vector; at most Q entries set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackerAction {
    pub attacks: Vec<bool>,
}

impl AttackerAction {
    pub fn empty(n: usize) -> Self {
        AttackerAction {
            attacks: vec![false; n],
        }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Self {
        let mut attacks = vec![false; n];
        for &i in indices {
            attacks[i] = true;
        }
        AttackerAction { attacks }
    }

    pub fn n(&self) -> usize {
        self.attacks.len()
    }

    pub fn popcount(&self) -> usize {
        self.attacks.iter().filter(|&&a| a).count()
    }
}

/// Per-target payoffs: `covered[i]` for an intercepted raid at i,
/// `uncovered[i]` for an unguarded raid at i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffTable {
    pub covered: Vec<f64>,
    pub uncovered: Vec<f64>,
}

impl PayoffTable {
    pub fn n(&self) -> usize {
        self.covered.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.covered.len() != self.uncovered.len() {
            return Err(Error::DimensionMismatch {
                expected: self.covered.len(),
                got: self.uncovered.len(),
            });
        }
        for i in 0..self.covered.len() {
            let (c, u) = (self.covered[i], self.uncovered[i]);
            if !(-0.5..=0.5).contains(&c) || !(-0.5..=0.5).contains(&u) {
                return Err(Error::InvalidInput(format!(
                    "payoff at target {i} outside [-0.5, 0.5]: covered={c}, uncovered={u}"
                )));
            }
            if u > c {
                return Err(Error::InvalidInput(format!(
                    "uncovered payoff exceeds covered payoff at target {i}: {u} > {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Full ground truth for one round. Only the metrics engine reads this;
/// policies see `RoundObservation` instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub defender: DefenderAction,
    pub attacker: AttackerAction,
    /// `reward_vector(attacker, ground_truth_payoffs)`.
    pub true_rewards: Vec<f64>,
    /// Total kg dry matter lost this round.
    pub crop_loss: f64,
    pub interceptions_per_target: Vec<u64>,
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Per-target reward `r_i = a_i * (covered_i - uncovered_i)`, in [0, 1]
/// whenever the payoff table is valid.
pub fn reward_vector(attacker: &AttackerAction, payoffs: &PayoffTable) -> Result<Vec<f64>> {
    check_dims(attacker.n(), payoffs.covered.len())?;
    check_dims(attacker.n(), payoffs.uncovered.len())?;
    Ok((0..attacker.n())
        .map(|i| {
            if attacker.attacks[i] {
                payoffs.covered[i] - payoffs.uncovered[i]
            } else {
                0.0
            }
        })
        .collect())
}

/// Defender utility
/// `sum_i v_i a_i covered_i + sum_i (1 - v_i) a_i uncovered_i`.
pub fn utility(
    defender: &DefenderAction,
    attacker: &AttackerAction,
    payoffs: &PayoffTable,
) -> Result<f64> {
    check_dims(defender.n(), attacker.n())?;
    check_dims(defender.n(), payoffs.covered.len())?;
    check_dims(defender.n(), payoffs.uncovered.len())?;
    let mut total = 0.0;
    for i in 0..defender.n() {
        if attacker.attacks[i] {
            total += if defender.coverage[i] {
                payoffs.covered[i]
            } else {
                payoffs.uncovered[i]
            };
        }
    }
    Ok(total)
}

/// The coverage-independent part of utility: `sum_i a_i uncovered_i`.
pub fn constant_term(attacker: &AttackerAction, payoffs: &PayoffTable) -> Result<f64> {
    check_dims(attacker.n(), payoffs.uncovered.len())?;
    Ok((0..attacker.n())
        .map(|i| {
            if attacker.attacks[i] {
                payoffs.uncovered[i]
            } else {
                0.0
            }
        })
        .sum())
}

pub fn dot(coverage: &DefenderAction, values: &[f64]) -> Result<f64> {
    check_dims(coverage.n(), values.len())?;
    Ok((0..coverage.n())
        .map(|i| if coverage.coverage[i] { values[i] } else { 0.0 })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(covered: &[f64], uncovered: &[f64]) -> PayoffTable {
        PayoffTable {
            covered: covered.to_vec(),
            uncovered: uncovered.to_vec(),
        }
    }

    #[test]
    fn reward_vector_zero_attacks() {
        let a = AttackerAction::empty(3);
        let p = table(&[0.5, 0.1, 0.2], &[-0.5, 0.0, -0.2]);
        assert_eq!(reward_vector(&a, &p).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn reward_vector_extreme_range() {
        let a = AttackerAction::from_indices(2, &[0]);
        let p = table(&[0.5, 0.5], &[-0.5, 0.0]);
        assert_eq!(reward_vector(&a, &p).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn reward_vector_hand_case() {
        let a = AttackerAction::from_indices(3, &[0, 1]);
        let p = table(&[0.3, 0.1, 0.4], &[-0.2, -0.1, 0.0]);
        let r = reward_vector(&a, &p).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-15);
        assert!((r[1] - 0.2).abs() < 1e-15);
        assert_eq!(r[2], 0.0);
    }

    #[test]
    fn reward_vector_dimension_mismatch() {
        let a = AttackerAction::empty(2);
        let p = table(&[0.0; 3], &[0.0; 3]);
        assert!(matches!(
            reward_vector(&a, &p),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn utility_full_interception() {
        let a = AttackerAction::from_indices(4, &[1, 3]);
        let v = DefenderAction::from_indices(4, &[1, 3]);
        let p = table(&[0.4, 0.3, 0.2, 0.1], &[-0.4, -0.3, -0.2, -0.1]);
        assert!((utility(&v, &a, &p).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn utility_total_raid() {
        let a = AttackerAction::from_indices(2, &[0, 1]);
        let v = DefenderAction::empty(2);
        let p = table(&[0.5, 0.5], &[-0.5, -0.5]);
        assert_eq!(utility(&v, &a, &p).unwrap(), -1.0);
    }

    #[test]
    fn utility_hand_case() {
        let v = DefenderAction::from_indices(2, &[0]);
        let a = AttackerAction::from_indices(2, &[0, 1]);
        let p = table(&[0.4, 0.2], &[-0.1, -0.3]);
        assert!((utility(&v, &a, &p).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn constant_term_cases() {
        let p = table(&[0.0, 0.0, 0.0], &[-0.2, -0.5, -0.1]);
        assert_eq!(constant_term(&AttackerAction::empty(3), &p).unwrap(), 0.0);
        let a = AttackerAction::from_indices(3, &[0, 2]);
        assert!((constant_term(&a, &p).unwrap() - (-0.3)).abs() < 1e-15);
        let all = AttackerAction::from_indices(4, &[0, 1, 2, 3]);
        let pu = table(&[0.0; 4], &[-0.5; 4]);
        assert_eq!(constant_term(&all, &pu).unwrap(), -2.0);
    }

    #[test]
    fn utility_identity_on_fixed_case() {
        let v = DefenderAction::from_indices(3, &[1]);
        let a = AttackerAction::from_indices(3, &[0, 1]);
        let p = table(&[0.3, 0.1, 0.4], &[-0.2, -0.1, 0.0]);
        let lhs = utility(&v, &a, &p).unwrap();
        let rhs =
            dot(&v, &reward_vector(&a, &p).unwrap()).unwrap() + constant_term(&a, &p).unwrap();
        assert!((lhs - rhs).abs() <= UTILITY_IDENTITY_TOL);
    }

    #[test]
    fn config_validation_paths() {
        let mut cfg = GameConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.defender_budget = 58;
        match cfg.validate() {
            Err(Error::InvalidConfig { path, .. }) => {
                assert_eq!(path, "game.defender_budget");
            }
            other => panic!("expected config error, got {other:?}"),
        }
        cfg = GameConfig {
            eta: 0.0,
            ..GameConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg = GameConfig {
            gr_truncation: 0,
            ..GameConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn payoff_table_validation() {
        assert!(table(&[0.5], &[-0.5]).validate().is_ok());
        assert!(table(&[0.6], &[0.0]).validate().is_err());
        assert!(table(&[0.1], &[0.2]).validate().is_err());
    }

    #[test]
    fn bitstring_rendering() {
        let v = DefenderAction::from_indices(4, &[1, 3]);
        assert_eq!(v.bitstring(), "0101");
        assert_eq!(v.popcount(), 2);
        assert_eq!(v.covered_indices(), vec![1, 3]);
    }
}
