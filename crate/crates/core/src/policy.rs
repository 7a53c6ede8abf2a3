//! Defender policies behind one sequential decide/observe interface.
//!
//! All policies receive only `RoundObservation` after each round: their
//! own coverage, interception counts at covered targets, and the
//! aggregate loss. Ground truth never crosses this boundary.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{observed_round_rewards, update_payoffs, PayoffEstimate, RoundObservation};
use crate::game::{DefenderAction, GameConfig, PenaltyDistribution};
use crate::perturb::{best_response, sample_perturbation};
use crate::resample::{apply_reward_update, geometric_resample, RewardEstimateVector};

/// Sequential policy interface. `decide` draws this round's coverage;
/// `observe` feeds back the confounded outcome of that coverage. The rng
/// passed to `observe` powers the resampling simulations.
pub trait Policy {
    fn name(&self) -> &'static str;
    fn decide(&mut self, rng: &mut ChaCha12Rng) -> Result<DefenderAction>;
    fn observe(&mut self, obs: &RoundObservation, rng: &mut ChaCha12Rng) -> Result<()>;

    /// Exploration parameter in force for the current round.
    fn gamma(&self) -> f64 {
        0.0
    }
    /// Exploration slots in force for the current round (budget-splitting
    /// policies only).
    fn k_expl(&self) -> usize {
        0
    }
    /// Largest gamma seen so far; feeds the regret-bound evaluator.
    fn gamma_hat(&self) -> f64 {
        0.0
    }
    fn r_hat(&self) -> Option<&RewardEstimateVector> {
        None
    }
    fn payoff_estimate(&self) -> Option<&PayoffEstimate> {
        None
    }
}

/// Current exploration split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationState {
    pub gamma: f64,
    pub k_expl: usize,
    pub k_expt: usize,
    /// Running max of gamma over the run.
    pub gamma_hat: f64,
}

impl ExplorationState {
    /// Round-one state: gamma starts at 1 (pure exploration).
    pub fn initial(k: usize) -> Self {
        ExplorationState::from_gamma(1.0, k, 1.0)
    }

    pub fn from_gamma(gamma: f64, k: usize, gamma_hat: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&gamma));
        let k_expl = ((gamma * k as f64).floor() as usize).min(k);
        ExplorationState {
            gamma,
            k_expl,
            k_expt: k - k_expl,
            gamma_hat,
        }
    }
}

/// One full budget-splitting round draw: top `k_expt` by perturbed
/// estimate, plus `k_expl` uniform picks from the complement. Used both to
/// play and (with frozen inputs) as the resampling simulator.
pub fn herds_draw<R: Rng>(
    r_hat: &[f64],
    k_expl: usize,
    k_expt: usize,
    eta: f64,
    rng: &mut R,
) -> Result<DefenderAction> {
    let n = r_hat.len();
    let mut coverage = if k_expt > 0 {
        let z = sample_perturbation(n, eta, rng)?;
        let scores: Vec<f64> = r_hat.iter().zip(&z.z).map(|(r, zi)| r + zi).collect();
        best_response(&scores, k_expt)?
    } else {
        DefenderAction::empty(n)
    };
    if k_expl > 0 {
        let complement: Vec<usize> = (0..n).filter(|&i| !coverage.coverage[i]).collect();
        let picks = rand::seq::index::sample(rng, complement.len(), k_expl);
        for j in picks {
            coverage.coverage[complement[j]] = true;
        }
    }
    Ok(coverage)
}

/// One full strategy-switching round draw: with probability `gamma` a
/// uniform single-target strategy, otherwise top-K by perturbed estimate.
pub fn fplue_draw<R: Rng>(
    r_hat: &[f64],
    k: usize,
    eta: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<DefenderAction> {
    let n = r_hat.len();
    if rng.random::<f64>() < gamma {
        let i = rng.random_range(0..n);
        Ok(DefenderAction::from_indices(n, &[i]))
    } else {
        let z = sample_perturbation(n, eta, rng)?;
        let scores: Vec<f64> = r_hat.iter().zip(&z.z).map(|(r, zi)| r + zi).collect();
        best_response(&scores, k)
    }
}

/// Shared feedback pipeline: fold the observation into the payoff
/// estimate, translate it into per-target rewards, estimate inverse
/// coverage probabilities by resampling the frozen round draw, and update
/// the cumulative reward estimates.
fn learn_from_round<F>(
    payoffs: &mut PayoffEstimate,
    r_hat: &mut RewardEstimateVector,
    penalty: PenaltyDistribution,
    m_trunc: usize,
    obs: &RoundObservation,
    rng: &mut ChaCha12Rng,
    simulator: F,
) -> Result<()>
where
    F: FnMut(&mut ChaCha12Rng) -> Result<DefenderAction>,
{
    update_payoffs(payoffs, obs, penalty)?;
    let rewards = observed_round_rewards(payoffs, obs);
    let n = r_hat.n();
    let p_inv = geometric_resample(simulator, n, m_trunc, rng)?;
    apply_reward_update(r_hat, &p_inv, &rewards, &obs.coverage)
}

/// Next-round exploration parameter: this round's loss over the running
/// maximum, which was refreshed first. Zero loss history means zero
/// exploration.
fn next_gamma(crop_loss: f64, max_crop_loss: f64) -> f64 {
    if max_crop_loss > 0.0 {
        crop_loss / max_crop_loss
    } else {
        0.0
    }
}

/// Budget-splitting adaptive policy.
pub struct HerdsPolicy {
    k: usize,
    eta: f64,
    m_trunc: usize,
    penalty: PenaltyDistribution,
    expl: ExplorationState,
    r_hat: RewardEstimateVector,
    payoffs: PayoffEstimate,
}

impl HerdsPolicy {
    pub fn new(cfg: &GameConfig) -> Self {
        HerdsPolicy {
            k: cfg.defender_budget,
            eta: cfg.eta,
            m_trunc: cfg.gr_truncation,
            penalty: cfg.penalty_distribution,
            expl: ExplorationState::initial(cfg.defender_budget),
            r_hat: RewardEstimateVector::zeros(cfg.n_targets),
            payoffs: PayoffEstimate::new(cfg.n_targets),
        }
    }

    pub fn exploration(&self) -> ExplorationState {
        self.expl
    }
}

impl Policy for HerdsPolicy {
    fn name(&self) -> &'static str {
        "herds"
    }

    fn decide(&mut self, rng: &mut ChaCha12Rng) -> Result<DefenderAction> {
        herds_draw(
            &self.r_hat.r_hat,
            self.expl.k_expl,
            self.expl.k_expt,
            self.eta,
            rng,
        )
    }

    fn observe(&mut self, obs: &RoundObservation, rng: &mut ChaCha12Rng) -> Result<()> {
        let frozen = self.r_hat.clone();
        let (k_expl, k_expt, eta) = (self.expl.k_expl, self.expl.k_expt, self.eta);
        learn_from_round(
            &mut self.payoffs,
            &mut self.r_hat,
            self.penalty,
            self.m_trunc,
            obs,
            rng,
            |r| herds_draw(&frozen.r_hat, k_expl, k_expt, eta, r),
        )?;
        let gamma = next_gamma(obs.crop_loss, self.payoffs.max_crop_loss);
        self.expl = ExplorationState::from_gamma(gamma, self.k, self.expl.gamma_hat.max(gamma));
        Ok(())
    }

    fn gamma(&self) -> f64 {
        self.expl.gamma
    }

    fn k_expl(&self) -> usize {
        self.expl.k_expl
    }

    fn gamma_hat(&self) -> f64 {
        self.expl.gamma_hat
    }

    fn r_hat(&self) -> Option<&RewardEstimateVector> {
        Some(&self.r_hat)
    }

    fn payoff_estimate(&self) -> Option<&PayoffEstimate> {
        Some(&self.payoffs)
    }
}

/// Exploration schedule for the strategy-switching policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaMode {
    Fixed(f64),
    /// Re-derived from observed losses each round, starting at 1.
    Adaptive,
}

/// Strategy-switching policy: whole rounds are either exploration
/// (one uniform target) or exploitation (perturbed top-K).
pub struct FplUePolicy {
    k: usize,
    eta: f64,
    m_trunc: usize,
    penalty: PenaltyDistribution,
    mode: GammaMode,
    gamma: f64,
    gamma_hat: f64,
    r_hat: RewardEstimateVector,
    payoffs: PayoffEstimate,
}

impl FplUePolicy {
    pub fn new_fixed(cfg: &GameConfig, fixed_gamma: f64) -> Result<Self> {
        if !(fixed_gamma.is_finite() && (0.0..=1.0).contains(&fixed_gamma)) {
            return Err(Error::invalid_parameter(
                "fixed_gamma",
                format!("must be in [0, 1], got {fixed_gamma}"),
            ));
        }
        Ok(FplUePolicy {
            k: cfg.defender_budget,
            eta: cfg.eta,
            m_trunc: cfg.gr_truncation,
            penalty: cfg.penalty_distribution,
            mode: GammaMode::Fixed(fixed_gamma),
            gamma: fixed_gamma,
            gamma_hat: fixed_gamma,
            r_hat: RewardEstimateVector::zeros(cfg.n_targets),
            payoffs: PayoffEstimate::new(cfg.n_targets),
        })
    }

    pub fn new_adaptive(cfg: &GameConfig) -> Self {
        FplUePolicy {
            k: cfg.defender_budget,
            eta: cfg.eta,
            m_trunc: cfg.gr_truncation,
            penalty: cfg.penalty_distribution,
            mode: GammaMode::Adaptive,
            gamma: 1.0,
            gamma_hat: 1.0,
            r_hat: RewardEstimateVector::zeros(cfg.n_targets),
            payoffs: PayoffEstimate::new(cfg.n_targets),
        }
    }
}

impl Policy for FplUePolicy {
    fn name(&self) -> &'static str {
        match self.mode {
            GammaMode::Fixed(_) => "fpl-ue",
            GammaMode::Adaptive => "fpl-ue-a",
        }
    }

    fn decide(&mut self, rng: &mut ChaCha12Rng) -> Result<DefenderAction> {
        fplue_draw(&self.r_hat.r_hat, self.k, self.eta, self.gamma, rng)
    }

    fn observe(&mut self, obs: &RoundObservation, rng: &mut ChaCha12Rng) -> Result<()> {
        let frozen = self.r_hat.clone();
        let (k, eta, gamma) = (self.k, self.eta, self.gamma);
        learn_from_round(
            &mut self.payoffs,
            &mut self.r_hat,
            self.penalty,
            self.m_trunc,
            obs,
            rng,
            |r| fplue_draw(&frozen.r_hat, k, eta, gamma, r),
        )?;
        if self.mode == GammaMode::Adaptive {
            self.gamma = next_gamma(obs.crop_loss, self.payoffs.max_crop_loss);
            self.gamma_hat = self.gamma_hat.max(self.gamma);
        }
        Ok(())
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn gamma_hat(&self) -> f64 {
        self.gamma_hat
    }

    fn r_hat(&self) -> Option<&RewardEstimateVector> {
        Some(&self.r_hat)
    }

    fn payoff_estimate(&self) -> Option<&PayoffEstimate> {
        Some(&self.payoffs)
    }
}

/// Plays one fixed coverage every round.
pub struct StaticPolicy {
    coverage: DefenderAction,
}

impl StaticPolicy {
    pub fn new(coverage: DefenderAction) -> Self {
        StaticPolicy { coverage }
    }
}

impl Policy for StaticPolicy {
    fn name(&self) -> &'static str {
        "static"
    }

    fn decide(&mut self, _rng: &mut ChaCha12Rng) -> Result<DefenderAction> {
        Ok(self.coverage.clone())
    }

    fn observe(&mut self, _obs: &RoundObservation, _rng: &mut ChaCha12Rng) -> Result<()> {
        Ok(())
    }
}

/// Sanity floor: a fresh uniform K-subset every round.
pub struct UniformRandomPolicy {
    n: usize,
    k: usize,
}

impl UniformRandomPolicy {
    pub fn new(cfg: &GameConfig) -> Self {
        UniformRandomPolicy {
            n: cfg.n_targets,
            k: cfg.defender_budget,
        }
    }
}

impl Policy for UniformRandomPolicy {
    fn name(&self) -> &'static str {
        "uniform-random"
    }

    fn decide(&mut self, rng: &mut ChaCha12Rng) -> Result<DefenderAction> {
        let picks = rand::seq::index::sample(rng, self.n, self.k);
        Ok(DefenderAction::from_indices(self.n, &picks.into_vec()))
    }

    fn observe(&mut self, _obs: &RoundObservation, _rng: &mut ChaCha12Rng) -> Result<()> {
        Ok(())
    }
}

/// Config-file description of a policy.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    Herds,
    FplUe {
        #[serde(default = "default_fixed_gamma")]
        fixed_gamma: f64,
    },
    FplUeA,
    Static {
        /// Covered target indices. When absent, the harness builds the
        /// coverage from an attack-frequency warmup.
        #[serde(default)]
        coverage: Option<Vec<usize>>,
    },
    UniformRandom,
}

/// Default exploration probability for the fixed-gamma variant.
pub fn default_fixed_gamma() -> f64 {
    0.1
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Herds => "herds",
            PolicySpec::FplUe { .. } => "fpl-ue",
            PolicySpec::FplUeA => "fpl-ue-a",
            PolicySpec::Static { .. } => "static",
            PolicySpec::UniformRandom => "uniform-random",
        }
    }

    /// Parses a `--policies` list entry.
    pub fn parse_name(name: &str) -> Result<PolicySpec> {
        match name {
            "herds" => Ok(PolicySpec::Herds),
            "fpl-ue" => Ok(PolicySpec::FplUe {
                fixed_gamma: default_fixed_gamma(),
            }),
            "fpl-ue-a" => Ok(PolicySpec::FplUeA),
            "static" => Ok(PolicySpec::Static { coverage: None }),
            "uniform-random" => Ok(PolicySpec::UniformRandom),
            other => Err(Error::invalid_parameter(
                "policies",
                format!(
                    "unknown policy `{other}` (expected herds, fpl-ue, fpl-ue-a, static, uniform-random)"
                ),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PolicySpec::FplUe { fixed_gamma } => {
                if !(fixed_gamma.is_finite() && (0.0..=1.0).contains(fixed_gamma)) {
                    return Err(Error::invalid_config(
                        "policies.fixed_gamma",
                        "must be in [0, 1]",
                    ));
                }
            }
            PolicySpec::Static {
                coverage: Some(ids),
            } => {
                let mut seen = std::collections::HashSet::new();
                for &i in ids {
                    if !seen.insert(i) {
                        return Err(Error::invalid_config(
                            "policies.coverage",
                            format!("duplicate target index {i}"),
                        ));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Builds the fixed coverage for the static baseline: run the attacker
/// against zero coverage for `warmup_rounds`, count attacks per target,
/// and keep the K most attacked (ties to the lowest index).
pub fn build_static_policy<R: Rng>(
    world: &crate::env::BoundaryWorld,
    attacker: &mut crate::env::Attacker,
    warmup_rounds: usize,
    k: usize,
    rng: &mut R,
) -> Result<DefenderAction> {
    if warmup_rounds == 0 {
        return Err(Error::invalid_parameter(
            "warmup_rounds",
            "must be >= 1".to_string(),
        ));
    }
    let n = world.n_targets;
    let zero = DefenderAction::empty(n);
    let mut counts = vec![0.0f64; n];
    for _ in 0..warmup_rounds {
        let a = attacker.attack(world, rng);
        attacker.learn(&zero, &a);
        for (count, &hit) in counts.iter_mut().zip(&a.attacks) {
            if hit {
                *count += 1.0;
            }
        }
    }
    best_response(&counts, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Attacker, MamState, WorldSpec};
    use rand::SeedableRng;

    fn cfg(n: usize, k: usize) -> GameConfig {
        GameConfig {
            n_targets: n,
            defender_budget: k,
            attacker_budget: 2,
            horizon: 50,
            eta: 0.5,
            gr_truncation: 5,
            rng_seed: 0,
            penalty_distribution: PenaltyDistribution::UniformFull,
        }
    }

    fn obs_for(coverage: DefenderAction, hit: &[usize], loss: f64) -> RoundObservation {
        let n = coverage.n();
        let mut interceptions = vec![0u64; n];
        for &i in hit {
            interceptions[i] = 1;
        }
        RoundObservation {
            coverage,
            interceptions,
            crop_loss: loss,
        }
    }

    #[test]
    fn exploration_split_examples() {
        let full = ExplorationState::from_gamma(1.0, 5, 1.0);
        assert_eq!((full.k_expl, full.k_expt), (5, 0));
        let none = ExplorationState::from_gamma(0.0, 5, 1.0);
        assert_eq!((none.k_expl, none.k_expt), (0, 5));
        let half = ExplorationState::from_gamma(0.5, 5, 1.0);
        assert_eq!((half.k_expl, half.k_expt), (2, 3));
        let mid = ExplorationState::from_gamma(0.4, 3, 1.0);
        assert_eq!((mid.k_expl, mid.k_expt), (1, 2));
    }

    #[test]
    fn herds_round_one_is_pure_exploration() {
        let mut p = HerdsPolicy::new(&cfg(10, 5));
        assert_eq!(p.gamma(), 1.0);
        assert_eq!(p.k_expl(), 5);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let v = p.decide(&mut rng).unwrap();
        assert_eq!(v.popcount(), 5);
    }

    #[test]
    fn herds_zero_gamma_is_pure_perturbed_leader() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let r_hat = vec![5.0, 0.0, 4.0, 0.0, 3.0, 0.0];
        let v = herds_draw(&r_hat, 0, 3, 100.0, &mut rng).unwrap();
        // With eta=100 the perturbation is tiny; the estimates dominate.
        assert_eq!(v.covered_indices(), vec![0, 2, 4]);
    }

    #[test]
    fn herds_exploration_disjoint_from_exploitation() {
        let r_hat = vec![9.0, 8.0, 0.0, 0.0, 0.0, 0.0];
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..200 {
            let v = herds_draw(&r_hat, 2, 2, 50.0, &mut rng).unwrap();
            assert_eq!(v.popcount(), 4);
            // Exploit picks 0 and 1 under near-zero noise; exploration must
            // land elsewhere, keeping the full budget deployed.
            assert!(v.coverage[0] && v.coverage[1]);
        }
    }

    #[test]
    fn herds_gamma_follows_loss_ratio() {
        let mut p = HerdsPolicy::new(&cfg(6, 3));
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let v = p.decide(&mut rng).unwrap();
        p.observe(&obs_for(v, &[], 600.0), &mut rng).unwrap();
        assert_eq!(p.gamma(), 1.0);
        let v = p.decide(&mut rng).unwrap();
        p.observe(&obs_for(v, &[], 300.0), &mut rng).unwrap();
        assert_eq!(p.gamma(), 0.5);
        assert_eq!(p.k_expl(), 1);
        let v = p.decide(&mut rng).unwrap();
        p.observe(&obs_for(v, &[], 0.0), &mut rng).unwrap();
        assert_eq!(p.gamma(), 0.0);
        assert_eq!(p.gamma_hat(), 1.0);
    }

    #[test]
    fn herds_zero_loss_history_means_exploit() {
        let mut p = HerdsPolicy::new(&cfg(6, 3));
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let v = p.decide(&mut rng).unwrap();
        p.observe(&obs_for(v, &[], 0.0), &mut rng).unwrap();
        assert_eq!(p.gamma(), 0.0);
    }

    #[test]
    fn herds_always_plays_full_budget() {
        let mut p = HerdsPolicy::new(&cfg(9, 4));
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for t in 0..40 {
            let v = p.decide(&mut rng).unwrap();
            assert_eq!(v.popcount(), 4);
            let loss = if t % 3 == 0 { 120.0 } else { 40.0 };
            let hit: Vec<usize> = v.covered_indices().into_iter().take(1).collect();
            p.observe(&obs_for(v, &hit, loss), &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&p.gamma()));
        }
    }

    #[test]
    fn fplue_gamma_one_always_explores_single_target() {
        let mut p = FplUePolicy::new_fixed(&cfg(8, 3), 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for _ in 0..100 {
            let v = p.decide(&mut rng).unwrap();
            assert_eq!(v.popcount(), 1);
        }
    }

    #[test]
    fn fplue_gamma_zero_always_exploits_full_budget() {
        let mut p = FplUePolicy::new_fixed(&cfg(8, 3), 0.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..100 {
            let v = p.decide(&mut rng).unwrap();
            assert_eq!(v.popcount(), 3);
        }
    }

    #[test]
    fn fplue_exploration_frequencies_uniform() {
        let n = 10;
        let mut p = FplUePolicy::new_fixed(&cfg(n, 3), 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let trials = 100_000;
        let mut counts = vec![0u64; n];
        for _ in 0..trials {
            let v = p.decide(&mut rng).unwrap();
            counts[v.covered_indices()[0]] += 1;
        }
        let pr = 1.0 / n as f64;
        let se = (pr * (1.0 - pr) / trials as f64).sqrt();
        for &c in &counts {
            let freq = c as f64 / trials as f64;
            assert!((freq - pr).abs() < 3.0 * se, "freq {freq} vs {pr}");
        }
    }

    #[test]
    fn fplue_rejects_bad_gamma() {
        assert!(FplUePolicy::new_fixed(&cfg(4, 2), -0.1).is_err());
        assert!(FplUePolicy::new_fixed(&cfg(4, 2), 1.5).is_err());
    }

    #[test]
    fn fplue_adaptive_traces_loss_ratios() {
        // Losses 600, 300, 600 with running max 600 give gamma 1, 0.5, 1.
        let mut p = FplUePolicy::new_adaptive(&cfg(6, 2));
        assert_eq!(p.gamma(), 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut seen = Vec::new();
        for loss in [600.0, 300.0, 600.0] {
            let v = p.decide(&mut rng).unwrap();
            p.observe(&obs_for(v, &[], loss), &mut rng).unwrap();
            seen.push(p.gamma());
        }
        assert_eq!(seen, vec![1.0, 0.5, 1.0]);
    }

    #[test]
    fn fplue_adaptive_zero_loss_forces_exploitation() {
        let mut p = FplUePolicy::new_adaptive(&cfg(6, 2));
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let v = p.decide(&mut rng).unwrap();
        p.observe(&obs_for(v, &[], 0.0), &mut rng).unwrap();
        assert_eq!(p.gamma(), 0.0);
        // Exploitation branch is now certain.
        for _ in 0..50 {
            let v = p.decide(&mut rng).unwrap();
            assert_eq!(v.popcount(), 2);
        }
    }

    #[test]
    fn fplue_adaptive_record_loss_forces_exploration() {
        let mut p = FplUePolicy::new_adaptive(&cfg(6, 2));
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let v = p.decide(&mut rng).unwrap();
        p.observe(&obs_for(v, &[], 500.0), &mut rng).unwrap();
        assert_eq!(p.gamma(), 1.0);
        for _ in 0..50 {
            let v = p.decide(&mut rng).unwrap();
            assert_eq!(v.popcount(), 1);
        }
    }

    #[test]
    fn static_policy_is_constant() {
        let coverage = DefenderAction::from_indices(6, &[1, 4]);
        let mut p = StaticPolicy::new(coverage.clone());
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let a = p.decide(&mut rng).unwrap();
        p.observe(&obs_for(a.clone(), &[], 10.0), &mut rng).unwrap();
        let b = p.decide(&mut rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, coverage);
    }

    #[test]
    fn static_build_tracks_attack_frequency() {
        // An attacker that only ever hits target 3.
        let world = WorldSpec {
            target_values: Some(vec![100.0; 5]),
            ..WorldSpec::default()
        }
        .build(5, 0)
        .unwrap();
        let mut brsam = crate::env::Attacker::Brsam(crate::env::BrsamState {
            attack_budget: 1,
            memory: {
                let mut m = vec![1.0; 5];
                m[3] = 0.0;
                m
            },
            memory_gain: 0.5,
            memory_decay: 0.0,
        });
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let v = build_static_policy(&world, &mut brsam, 50, 2, &mut rng).unwrap();
        assert!(v.coverage[3]);
        assert_eq!(v.popcount(), 2);
    }

    #[test]
    fn static_build_uniform_attacker_ties_fall_to_low_indices() {
        let world = WorldSpec {
            target_values: Some(vec![100.0; 6]),
            ..WorldSpec::default()
        }
        .build(6, 0)
        .unwrap();
        let mut mam = Attacker::Mam(MamState { attack_budget: 6 });
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        // Every round attacks everything: all counts equal, tie-break bites.
        let v = build_static_policy(&world, &mut mam, 30, 3, &mut rng).unwrap();
        assert_eq!(v.covered_indices(), vec![0, 1, 2]);
    }

    #[test]
    fn uniform_random_plays_full_budget() {
        let mut p = UniformRandomPolicy::new(&cfg(9, 4));
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        for _ in 0..20 {
            assert_eq!(p.decide(&mut rng).unwrap().popcount(), 4);
        }
    }

    #[test]
    fn policy_spec_names_round_trip() {
        for name in ["herds", "fpl-ue", "fpl-ue-a", "static", "uniform-random"] {
            let spec = PolicySpec::parse_name(name).unwrap();
            assert_eq!(spec.name(), name);
        }
        assert!(PolicySpec::parse_name("fpl").is_err());
    }

    #[test]
    fn policy_spec_toml_round_trip() {
        let toml_text = "kind = \"fpl-ue\"\nfixed_gamma = 0.2\n";
        let spec: PolicySpec = toml::from_str(toml_text).unwrap();
        assert_eq!(spec, PolicySpec::FplUe { fixed_gamma: 0.2 });
        let default: PolicySpec = toml::from_str("kind = \"fpl-ue\"").unwrap();
        assert_eq!(default, PolicySpec::FplUe { fixed_gamma: 0.1 });
    }

    #[test]
    fn herds_r_hat_only_grows() {
        let mut p = HerdsPolicy::new(&cfg(8, 3));
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        let mut prev = vec![0.0; 8];
        for t in 0..30 {
            let v = p.decide(&mut rng).unwrap();
            let hit: Vec<usize> = v.covered_indices().into_iter().take(2).collect();
            let loss = 100.0 + (t as f64) * 3.0;
            p.observe(&obs_for(v, &hit, loss), &mut rng).unwrap();
            let current = &p.r_hat().unwrap().r_hat;
            for i in 0..8 {
                assert!(current[i] >= prev[i] - 1e-15);
            }
            prev = current.clone();
        }
    }
}
