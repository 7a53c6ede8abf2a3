//! Geometric resampling: estimate the inverse per-target coverage
//! probability 1/p_i by re-running the caller's full one-round action draw
//! until each target reappears, truncated at M draws.

use rand::Rng;

use crate::error::{Error, Result};
use crate::game::DefenderAction;

/// Cumulative importance-weighted reward estimates driving the
/// perturbed-leader oracle. Starts at zero and only ever grows.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardEstimateVector {
    pub r_hat: Vec<f64>,
}

impl RewardEstimateVector {
    pub fn zeros(n: usize) -> Self {
        RewardEstimateVector {
            r_hat: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.r_hat.len()
    }
}

/// Per-target reoccurrence indices P(i), each in [1, M].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InverseProbEstimate {
    pub p_inv: Vec<u32>,
}

/// Runs the simulator up to `m_trunc` times; `p_inv[i]` is the 1-based
/// index of the first simulated action covering target i, or `m_trunc` if
/// none of the first `m_trunc - 1` did. Exits early once every target has
/// an index. The simulator must replay the policy's complete current-round
/// draw (exploration and exploitation) from frozen state.
pub fn geometric_resample<R: Rng, F>(
    mut simulator: F,
    n_targets: usize,
    m_trunc: usize,
    rng: &mut R,
) -> Result<InverseProbEstimate>
where
    F: FnMut(&mut R) -> Result<DefenderAction>,
{
    if m_trunc == 0 {
        return Err(Error::invalid_parameter(
            "m_trunc",
            "must be >= 1".to_string(),
        ));
    }
    let mut p_inv = vec![0u32; n_targets];
    let mut unassigned = n_targets;
    for p in 1..=m_trunc {
        let v = simulator(rng)?;
        if v.n() != n_targets {
            return Err(Error::DimensionMismatch {
                expected: n_targets,
                got: v.n(),
            });
        }
        if p < m_trunc {
            for (slot, &covered) in p_inv.iter_mut().zip(&v.coverage) {
                if covered && *slot == 0 {
                    *slot = p as u32;
                    unassigned -= 1;
                }
            }
        } else {
            for slot in p_inv.iter_mut() {
                if *slot == 0 {
                    *slot = m_trunc as u32;
                    unassigned -= 1;
                }
            }
        }
        if unassigned == 0 {
            break;
        }
    }
    Ok(InverseProbEstimate { p_inv })
}

/// `r_hat[i] += p_inv[i] * observed_rewards[i]` at covered targets;
/// everything else is untouched.
pub fn apply_reward_update(
    r_hat: &mut RewardEstimateVector,
    p_inv: &InverseProbEstimate,
    observed_rewards: &[f64],
    coverage: &DefenderAction,
) -> Result<()> {
    let n = r_hat.n();
    for len in [p_inv.p_inv.len(), observed_rewards.len(), coverage.n()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    let slots = r_hat
        .r_hat
        .iter_mut()
        .zip(&p_inv.p_inv)
        .zip(&coverage.coverage);
    for (i, ((est, &weight), &covered)) in slots.enumerate() {
        if covered {
            let r = observed_rewards[i];
            if r < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "negative observed reward {r} at target {i}"
                )));
            }
            *est += f64::from(weight) * r;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn full_coverage(n: usize) -> DefenderAction {
        DefenderAction::from_indices(n, &(0..n).collect::<Vec<_>>())
    }

    #[test]
    fn truncation_one_assigns_one_everywhere() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let est = geometric_resample(
            |_: &mut ChaCha12Rng| Ok(DefenderAction::empty(4)),
            4,
            1,
            &mut rng,
        )
        .unwrap();
        assert_eq!(est.p_inv, vec![1, 1, 1, 1]);
    }

    #[test]
    fn deterministic_coverage_gets_index_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let est = geometric_resample(
            |_: &mut ChaCha12Rng| Ok(DefenderAction::from_indices(3, &[0])),
            3,
            10,
            &mut rng,
        )
        .unwrap();
        assert_eq!(est.p_inv[0], 1);
        assert_eq!(est.p_inv[1], 10);
        assert_eq!(est.p_inv[2], 10);
    }

    #[test]
    fn early_exit_consumes_one_draw_on_full_coverage() {
        let mut calls = 0usize;
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let est = geometric_resample(
            |_: &mut ChaCha12Rng| {
                calls += 1;
                Ok(full_coverage(5))
            },
            5,
            50,
            &mut rng,
        )
        .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(est.p_inv, vec![1; 5]);
    }

    #[test]
    fn bounds_hold_under_random_simulator() {
        let m = 6;
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for _ in 0..200 {
            let est = geometric_resample(
                |r: &mut ChaCha12Rng| {
                    let i = rand::Rng::random_range(r, 0..4);
                    Ok(DefenderAction::from_indices(4, &[i]))
                },
                4,
                m,
                &mut rng,
            )
            .unwrap();
            assert!(est.p_inv.iter().all(|&p| (1..=m as u32).contains(&p)));
        }
    }

    #[test]
    fn truncated_geometric_mean_matches_analytic_value() {
        // Coverage probability 1/2 per draw, M=3: the reoccurrence index has
        // mean 1*(1/2) + 2*(1/4) + 3*(1/4) = 1.75 and variance 11/16.
        let trials = 100_000;
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut sum = 0.0;
        for _ in 0..trials {
            let est = geometric_resample(
                |r: &mut ChaCha12Rng| {
                    let covered = rand::Rng::random::<f64>(r) < 0.5;
                    Ok(if covered {
                        full_coverage(1)
                    } else {
                        DefenderAction::empty(1)
                    })
                },
                1,
                3,
                &mut rng,
            )
            .unwrap();
            sum += f64::from(est.p_inv[0]);
        }
        let mean = sum / trials as f64;
        let se = (11.0f64 / 16.0).sqrt() / (trials as f64).sqrt();
        assert!(
            (mean - 1.75).abs() < 3.0 * se,
            "mean {mean} vs 1.75 (3se = {})",
            3.0 * se
        );
    }

    #[test]
    fn wrong_dimension_simulator_is_an_error() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let res = geometric_resample(|_: &mut ChaCha12Rng| Ok(full_coverage(3)), 4, 5, &mut rng);
        assert!(matches!(res, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn reward_update_hand_case() {
        let mut r_hat = RewardEstimateVector::zeros(2);
        let p = InverseProbEstimate { p_inv: vec![2, 3] };
        let coverage = DefenderAction::from_indices(2, &[0]);
        apply_reward_update(&mut r_hat, &p, &[0.5, 0.4], &coverage).unwrap();
        assert_eq!(r_hat.r_hat, vec![1.0, 0.0]);
    }

    #[test]
    fn reward_update_skips_uncovered_and_commutes() {
        let p1 = InverseProbEstimate {
            p_inv: vec![2, 5, 1],
        };
        let p2 = InverseProbEstimate {
            p_inv: vec![4, 1, 3],
        };
        let r1 = [0.3, 0.9, 0.2];
        let r2 = [0.1, 0.4, 0.8];
        let c1 = DefenderAction::from_indices(3, &[0, 2]);
        let c2 = DefenderAction::from_indices(3, &[1, 2]);

        let mut ab = RewardEstimateVector::zeros(3);
        apply_reward_update(&mut ab, &p1, &r1, &c1).unwrap();
        apply_reward_update(&mut ab, &p2, &r2, &c2).unwrap();
        let mut ba = RewardEstimateVector::zeros(3);
        apply_reward_update(&mut ba, &p2, &r2, &c2).unwrap();
        apply_reward_update(&mut ba, &p1, &r1, &c1).unwrap();
        for i in 0..3 {
            assert!((ab.r_hat[i] - ba.r_hat[i]).abs() < 1e-12);
        }
        // Target 1 was uncovered in the first update.
        let mut single = RewardEstimateVector::zeros(3);
        apply_reward_update(&mut single, &p1, &r1, &c1).unwrap();
        assert_eq!(single.r_hat[1], 0.0);
    }

    #[test]
    fn reward_update_rejects_negative_rewards() {
        let mut r_hat = RewardEstimateVector::zeros(1);
        let p = InverseProbEstimate { p_inv: vec![1] };
        let c = full_coverage(1);
        assert!(apply_reward_update(&mut r_hat, &p, &[-0.1], &c).is_err());
    }

    #[test]
    fn zero_coverage_leaves_estimates_alone() {
        let mut r_hat = RewardEstimateVector::zeros(3);
        r_hat.r_hat = vec![1.0, 2.0, 3.0];
        let p = InverseProbEstimate {
            p_inv: vec![5, 5, 5],
        };
        apply_reward_update(&mut r_hat, &p, &[0.4, 0.4, 0.4], &DefenderAction::empty(3)).unwrap();
        assert_eq!(r_hat.r_hat, vec![1.0, 2.0, 3.0]);
    }
}
