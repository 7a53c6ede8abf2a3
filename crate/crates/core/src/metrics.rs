//! Ground-truth evaluation: hindsight regret, crop loss, interception
//! rate, convergence, and the theoretical regret-bound evaluator.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::game::{dot, DefenderAction, RoundRecord};
use crate::perturb::best_response;

/// Best fixed coverage over the whole record sequence: per-target reward
/// sums are nonnegative, so the optimum over size-K subsets is the top-K
/// of the sums (ties to the lowest index).
pub fn hindsight_best(records: &[RoundRecord], k: usize) -> Result<DefenderAction> {
    let n = records
        .first()
        .ok_or_else(|| Error::InvalidInput("empty record sequence".to_string()))?
        .true_rewards
        .len();
    let mut sums = vec![0.0; n];
    for rec in records {
        if rec.true_rewards.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rec.true_rewards.len(),
            });
        }
        for (s, &r) in sums.iter_mut().zip(&rec.true_rewards) {
            *s += r;
        }
    }
    best_response(&sums, k)
}

/// Raw cumulative regret at every prefix: the prefix-optimal fixed
/// coverage's total reward minus the played total reward, with the
/// optimum re-evaluated per prefix.
pub fn cumulative_regret(
    records: &[RoundRecord],
    played: &[DefenderAction],
    k: usize,
) -> Result<Vec<f64>> {
    if records.len() != played.len() {
        return Err(Error::DimensionMismatch {
            expected: records.len(),
            got: played.len(),
        });
    }
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let n = records[0].true_rewards.len();
    let mut cum = vec![0.0; n];
    let mut played_sum = 0.0;
    let mut out = Vec::with_capacity(records.len());
    for (rec, v) in records.iter().zip(played) {
        for (c, &r) in cum.iter_mut().zip(&rec.true_rewards) {
            *c += r;
        }
        played_sum += dot(v, &rec.true_rewards)?;
        let opt_cov = best_response(&cum, k)?;
        let opt = dot(&opt_cov, &cum)?;
        out.push(opt - played_sum);
    }
    Ok(out)
}

/// `raw / (t * K)` for each prefix length t.
pub fn normalize_regret(raw: &[f64], k: usize) -> Vec<f64> {
    raw.iter()
        .enumerate()
        .map(|(idx, r)| r / (((idx + 1) * k) as f64))
        .collect()
}

/// Upper bound on cumulative regret:
/// `2T(1-g)K(1-g/N)^M + (1-g)K(ln N + 1)/eta + eta*m*T*min(m, (1-g)K) + T*g*K`
/// with the per-round exploration parameter replaced by its ceiling g.
pub fn regret_bound(
    horizon: usize,
    n_targets: usize,
    defender_budget: usize,
    gr_truncation: usize,
    eta: f64,
    attack_budget: usize,
    gamma_hat: f64,
) -> Result<f64> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid_parameter(
            "eta",
            format!("must be > 0, got {eta}"),
        ));
    }
    if !(gamma_hat.is_finite() && (0.0..=1.0).contains(&gamma_hat)) {
        return Err(Error::invalid_parameter(
            "gamma_hat",
            format!("must be in [0, 1], got {gamma_hat}"),
        ));
    }
    for (name, v) in [
        ("horizon", horizon),
        ("n_targets", n_targets),
        ("defender_budget", defender_budget),
        ("gr_truncation", gr_truncation),
        ("attack_budget", attack_budget),
    ] {
        if v == 0 {
            return Err(Error::invalid_parameter(name, "must be >= 1".to_string()));
        }
    }
    let t = horizon as f64;
    let n = n_targets as f64;
    let k = defender_budget as f64;
    let m_t = gr_truncation as i32;
    let m = attack_budget as f64;
    let g = gamma_hat;
    let term1 = 2.0 * t * (1.0 - g) * k * (1.0 - g / n).powi(m_t);
    let term2 = (1.0 - g) * k * (n.ln() + 1.0) / eta;
    let term3 = eta * m * t * m.min((1.0 - g) * k);
    let term4 = t * g * k;
    Ok(term1 + term2 + term3 + term4)
}

/// Total interceptions over total attacked targets; `None` when nothing
/// was ever attacked.
pub fn interception_rate(records: &[RoundRecord]) -> Option<f64> {
    let mut intercepted = 0u64;
    let mut attacked = 0u64;
    for rec in records {
        intercepted += rec.interceptions_per_target.iter().sum::<u64>();
        attacked += rec.attacker.popcount() as u64;
    }
    if attacked == 0 {
        None
    } else {
        Some(intercepted as f64 / attacked as f64)
    }
}

/// First round from which the played-to-optimal reward ratio stays within
/// 90% of its final value. The ratio compares the played prefix reward to
/// the prefix-optimal fixed coverage's reward (1 when the prefix optimum
/// is still zero). Always in [1, T].
pub fn convergence_round(
    records: &[RoundRecord],
    played: &[DefenderAction],
    k: usize,
) -> Result<usize> {
    if records.is_empty() {
        return Err(Error::InvalidInput("empty record sequence".to_string()));
    }
    if records.len() != played.len() {
        return Err(Error::DimensionMismatch {
            expected: records.len(),
            got: played.len(),
        });
    }
    let n = records[0].true_rewards.len();
    let mut cum = vec![0.0; n];
    let mut played_sum = 0.0;
    let mut ratios = Vec::with_capacity(records.len());
    for (rec, v) in records.iter().zip(played) {
        for (c, &r) in cum.iter_mut().zip(&rec.true_rewards) {
            *c += r;
        }
        played_sum += dot(v, &rec.true_rewards)?;
        let opt = dot(&best_response(&cum, k)?, &cum)?;
        ratios.push(if opt > 0.0 { played_sum / opt } else { 1.0 });
    }
    let threshold = 0.9 * ratios[ratios.len() - 1];
    let mut settled = 1;
    for (idx, &rho) in ratios.iter().enumerate() {
        if rho < threshold {
            settled = idx + 2;
        }
    }
    Ok(settled.min(records.len()))
}

/// Mean of a nonempty slice.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n-1 denominator); 0 for a single value.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values);
    (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Paired one-sided t-test p-value for the alternative
/// `mean(a) < mean(b)`; entries are paired by index.
pub fn paired_one_sided_p(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput(
            "paired test needs at least two pairs".to_string(),
        ));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let d_bar = mean(&diffs);
    let sd = sample_sd(&diffs);
    if sd == 0.0 {
        return Ok(if d_bar < 0.0 { 0.0 } else { 1.0 });
    }
    let t = d_bar / (sd / (diffs.len() as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (diffs.len() - 1) as f64)
        .map_err(|e| Error::InvalidInput(format!("t distribution: {e}")))?;
    Ok(dist.cdf(t))
}

/// One row of the per-round log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerRound {
    pub t: usize,
    pub gamma: f64,
    pub k_expl: usize,
    /// Coverage bitstring, index 0 first.
    pub coverage: String,
    pub crop_loss_kg: f64,
    pub interceptions: u64,
    pub instantaneous_reward: f64,
    pub raw_regret: f64,
    pub norm_regret: f64,
}

/// Everything recorded about one completed run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub policy: String,
    pub attacker: String,
    pub seed: u64,
    pub world_seed: u64,
    pub n_targets: usize,
    pub defender_budget: usize,
    pub attacker_budget: usize,
    pub gr_truncation: usize,
    pub horizon: usize,
    pub final_regret_raw: f64,
    pub final_regret_norm: f64,
    pub total_crop_loss_kg: f64,
    pub mean_crop_loss_kg: f64,
    pub interception_rate: Option<f64>,
    pub convergence_round: usize,
    pub gamma_hat: f64,
    pub regret_bound_at_gamma_hat: f64,
    pub bound_satisfied: bool,
    pub hindsight_coverage: String,
    /// Short digest of the final reward estimates; equal digests mean
    /// equal learned state.
    pub r_hat_hash: String,
    pub per_round: Vec<PerRound>,
}
