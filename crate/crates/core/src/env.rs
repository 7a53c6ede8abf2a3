//! Synthetic boundary-defense environment: a ring of targets with
//! heterogeneous crop value behind them, raided by one of two attacker
//! models. Produces full ground truth for the metrics engine and a
//! confounded observation for the policy.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::RoundObservation;
use crate::game::{reward_vector, AttackerAction, DefenderAction, PayoffTable, RoundRecord};

/// Immutable world state shared by every run of a sweep cell.
#[derive(Debug, Clone)]
pub struct BoundaryWorld {
    pub n_targets: usize,
    /// Crop value reachable through each segment, kg dry matter.
    pub target_value: Vec<f64>,
    /// Half-width of the multiplicative loss noise.
    pub raid_noise: f64,
    /// True payoffs, scaled from target values:
    /// covered = +0.5 v/vmax, uncovered = -0.5 v/vmax.
    pub ground_truth_payoffs: PayoffTable,
}

/// Config-file description of the world. Values are generated from
/// `world_seed` unless given explicitly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    /// Seed for value generation; defaults to a stream derived from the
    /// plan's base seed.
    #[serde(default)]
    pub world_seed: Option<u64>,
    #[serde(default = "default_raid_noise")]
    pub raid_noise: f64,
    /// Most valuable segment, kg.
    #[serde(default = "default_max_value_kg")]
    pub max_value_kg: f64,
    /// Least valuable segment as a fraction of the most valuable.
    #[serde(default = "default_min_value_frac")]
    pub min_value_frac: f64,
    /// Explicit per-target values (kg); overrides generation.
    #[serde(default)]
    pub target_values: Option<Vec<f64>>,
}

fn default_raid_noise() -> f64 {
    0.25
}
fn default_max_value_kg() -> f64 {
    250.0
}
fn default_min_value_frac() -> f64 {
    0.25
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            world_seed: None,
            raid_noise: default_raid_noise(),
            max_value_kg: default_max_value_kg(),
            min_value_frac: default_min_value_frac(),
            target_values: None,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.raid_noise.is_finite() && (0.0..1.0).contains(&self.raid_noise)) {
            return Err(Error::invalid_config(
                "world.raid_noise",
                "must be in [0, 1)",
            ));
        }
        if !(self.max_value_kg.is_finite() && self.max_value_kg > 0.0) {
            return Err(Error::invalid_config("world.max_value_kg", "must be > 0"));
        }
        if !(self.min_value_frac.is_finite()
            && self.min_value_frac > 0.0
            && self.min_value_frac <= 1.0)
        {
            return Err(Error::invalid_config(
                "world.min_value_frac",
                "must be in (0, 1]",
            ));
        }
        if let Some(values) = &self.target_values {
            if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::invalid_config(
                    "world.target_values",
                    "all values must be finite and > 0",
                ));
            }
        }
        Ok(())
    }

    /// Builds the world. Generated values form a few contiguous
    /// high-value stretches near `max_value_kg` (about a quarter of the
    /// ring) over a low background hugging `min_value_frac`, with
    /// log-normal jitter inside each band. Deterministic in `seed`.
    pub fn build(&self, n_targets: usize, seed: u64) -> Result<BoundaryWorld> {
        self.validate()?;
        let values = match &self.target_values {
            Some(explicit) => {
                if explicit.len() != n_targets {
                    return Err(Error::invalid_config(
                        "world.target_values",
                        format!("expected {n_targets} entries, got {}", explicit.len()),
                    ));
                }
                explicit.clone()
            }
            None => generate_values(n_targets, seed, self.max_value_kg, self.min_value_frac),
        };
        let vmax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let payoffs = PayoffTable {
            covered: values.iter().map(|v| 0.5 * v / vmax).collect(),
            uncovered: values.iter().map(|v| -0.5 * v / vmax).collect(),
        };
        payoffs.validate()?;
        Ok(BoundaryWorld {
            n_targets,
            target_value: values,
            raid_noise: self.raid_noise,
            ground_truth_payoffs: payoffs,
        })
    }
}

/// Fraction of the ring carrying the high band.
const HIGH_BAND_FRAC: f64 = 0.26;
/// Largest relative dip inside the high band.
const HIGH_BAND_DIP: f64 = 0.06;
/// Ceiling of the low band as a fraction of the maximum.
const LOW_BAND_CEIL_FRAC: f64 = 0.38;

fn generate_values(n: usize, seed: u64, max_kg: f64, min_frac: f64) -> Vec<f64> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![max_kg];
    }
    let high_count = ((HIGH_BAND_FRAC * n as f64).round() as usize).clamp(1, n - 1);
    let low_count = n - high_count;
    let floor = min_frac * max_kg;
    let low_ceil = (LOW_BAND_CEIL_FRAC * max_kg).max(floor);

    // Each band is spread evenly across its range, with a jitter of up to
    // one step so no two worlds share a value multiset.
    let band = |lo: f64, hi: f64, count: usize, rng: &mut rand_chacha::ChaCha12Rng| -> Vec<f64> {
        let step = if count > 1 {
            (hi - lo) / (count - 1) as f64
        } else {
            0.0
        };
        (0..count)
            .map(|i| {
                let jitter: f64 = rng.random_range(-0.5..0.5);
                (lo + step * (i as f64 + jitter)).clamp(lo, hi)
            })
            .collect()
    };
    let mut high_values = band(max_kg * (1.0 - HIGH_BAND_DIP), max_kg, high_count, &mut rng);
    // Pin the top so max_kg is always attained exactly.
    high_values[high_count - 1] = max_kg;
    let low_values = band(floor, low_ceil, low_count, &mut rng);

    // High band sits in a few contiguous stretches; the rest is low band.
    let blocks = high_count.div_ceil(5).clamp(1, 3);
    let mut sizes = vec![high_count / blocks; blocks];
    for size in sizes.iter_mut().take(high_count % blocks) {
        *size += 1;
    }
    let mut gaps = vec![low_count / blocks; blocks];
    for gap in gaps.iter_mut().take(low_count % blocks) {
        *gap += 1;
    }
    for i in 0..blocks {
        if gaps[i] > 2 {
            let shift = rng.random_range(0..=gaps[i] / 2);
            gaps[i] -= shift;
            gaps[(i + 1) % blocks] += shift;
        }
    }

    let mut high_slots = vec![false; n];
    let mut pos = 0;
    for b in 0..blocks {
        for _ in 0..sizes[b] {
            high_slots[pos] = true;
            pos += 1;
        }
        pos += gaps[b];
    }

    let mut high_pool = high_values;
    let mut low_pool = low_values;
    high_pool.shuffle(&mut rng);
    low_pool.shuffle(&mut rng);
    let offset = rng.random_range(0..n);
    let mut values = vec![0.0; n];
    for (i, &is_high) in high_slots.iter().enumerate() {
        let j = (i + offset) % n;
        values[j] = if is_high {
            high_pool.pop().expect("one pooled value per slot")
        } else {
            low_pool.pop().expect("one pooled value per slot")
        };
    }
    values
}

/// Memoryless attacker: a fresh uniform Q-subset every round.
#[derive(Debug, Clone)]
pub struct MamState {
    pub attack_budget: usize,
}

/// Boundedly rational attacker: remembers guard encounters and shifts
/// weight toward valuable, unremembered segments.
#[derive(Debug, Clone)]
pub struct BrsamState {
    pub attack_budget: usize,
    /// Per-target belief that the segment is guarded, in [0, 1].
    pub memory: Vec<f64>,
    /// Belief increment on an encounter.
    pub memory_gain: f64,
    /// Per-round multiplicative forgetting.
    pub memory_decay: f64,
}

pub fn mam_attack<R: Rng>(state: &MamState, world: &BoundaryWorld, rng: &mut R) -> AttackerAction {
    let picks = rand::seq::index::sample(rng, world.n_targets, state.attack_budget);
    AttackerAction::from_indices(world.n_targets, &picks.into_vec())
}

/// Q draws without replacement, weight value * (1 - memory). Falls back to
/// uniform when every weight is zero; tops up uniformly from zero-weight
/// targets when fewer than Q carry positive weight (the attacker always
/// commits its full budget).
pub fn brsam_attack<R: Rng>(
    state: &BrsamState,
    world: &BoundaryWorld,
    rng: &mut R,
) -> AttackerAction {
    let n = world.n_targets;
    let q = state.attack_budget;
    let weights: Vec<f64> = (0..n)
        .map(|i| world.target_value[i] * (1.0 - state.memory[i]).max(0.0))
        .collect();
    let positive: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();

    let chosen: Vec<usize> = if positive.is_empty() {
        rand::seq::index::sample(rng, n, q).into_vec()
    } else if positive.len() <= q {
        let mut picks = positive.clone();
        let rest: Vec<usize> = (0..n).filter(|&i| weights[i] <= 0.0).collect();
        let extra = rand::seq::index::sample(rng, rest.len(), q - picks.len());
        picks.extend(extra.iter().map(|j| rest[j]));
        picks
    } else {
        positive
            .choose_multiple_weighted(rng, q, |&i| weights[i])
            .expect("weights are positive and finite")
            .copied()
            .collect()
    };
    AttackerAction::from_indices(n, &chosen)
}

/// Encounter update: every target that was both covered and attacked pulls
/// memory toward 1 by `memory_gain`, then the whole memory decays.
pub fn brsam_learn(state: &mut BrsamState, defender: &DefenderAction, attacker: &AttackerAction) {
    for i in 0..state.memory.len() {
        if defender.coverage[i] && attacker.attacks[i] {
            state.memory[i] += state.memory_gain * (1.0 - state.memory[i]);
        }
    }
    for m in state.memory.iter_mut() {
        *m *= 1.0 - state.memory_decay;
    }
}

/// Either attacker model behind one interface.
#[derive(Debug, Clone)]
pub enum Attacker {
    Mam(MamState),
    Brsam(BrsamState),
}

impl Attacker {
    pub fn attack<R: Rng>(&self, world: &BoundaryWorld, rng: &mut R) -> AttackerAction {
        match self {
            Attacker::Mam(s) => mam_attack(s, world, rng),
            Attacker::Brsam(s) => brsam_attack(s, world, rng),
        }
    }

    pub fn learn(&mut self, defender: &DefenderAction, attacker: &AttackerAction) {
        if let Attacker::Brsam(s) = self {
            brsam_learn(s, defender, attacker);
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Attacker::Mam(_) => "mam",
            Attacker::Brsam(_) => "brsam",
        }
    }
}

/// Config-file description of an attacker. The budget comes from
/// `game.attacker_budget` so the bound constant m and the environment
/// can never disagree.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AttackerSpec {
    Mam,
    Brsam {
        #[serde(default = "default_memory_gain")]
        memory_gain: f64,
        #[serde(default = "default_memory_decay")]
        memory_decay: f64,
    },
}

fn default_memory_gain() -> f64 {
    0.5
}
fn default_memory_decay() -> f64 {
    0.02
}

impl AttackerSpec {
    pub fn brsam_default() -> Self {
        AttackerSpec::Brsam {
            memory_gain: default_memory_gain(),
            memory_decay: default_memory_decay(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttackerSpec::Mam => "mam",
            AttackerSpec::Brsam { .. } => "brsam",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let AttackerSpec::Brsam {
            memory_gain,
            memory_decay,
        } = self
        {
            if !(memory_gain.is_finite() && *memory_gain > 0.0 && *memory_gain <= 1.0) {
                return Err(Error::invalid_config(
                    "attacker.memory_gain",
                    "must be in (0, 1]",
                ));
            }
            if !(memory_decay.is_finite() && (0.0..1.0).contains(memory_decay)) {
                return Err(Error::invalid_config(
                    "attacker.memory_decay",
                    "must be in [0, 1)",
                ));
            }
        }
        Ok(())
    }

    pub fn build(&self, n_targets: usize, attack_budget: usize) -> Attacker {
        match self {
            AttackerSpec::Mam => Attacker::Mam(MamState { attack_budget }),
            AttackerSpec::Brsam {
                memory_gain,
                memory_decay,
            } => Attacker::Brsam(BrsamState {
                attack_budget,
                memory: vec![0.0; n_targets],
                memory_gain: *memory_gain,
                memory_decay: *memory_decay,
            }),
        }
    }
}

/// Plays out one round. Attacked-and-covered targets count one
/// interception each and lose nothing; attacked-and-uncovered targets lose
/// `value * (1 + u)` with `u ~ Uniform[-raid_noise, raid_noise]`. One noise
/// value is drawn per target every round, so stream consumption does not
/// depend on the actions played.
pub fn resolve_round<R: Rng>(
    world: &BoundaryWorld,
    round: usize,
    defender: &DefenderAction,
    attacker: &AttackerAction,
    rng: &mut R,
) -> Result<(RoundRecord, RoundObservation)> {
    let n = world.n_targets;
    if defender.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: defender.n(),
        });
    }
    if attacker.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: attacker.n(),
        });
    }
    let noise: Vec<f64> = (0..n)
        .map(|_| {
            if world.raid_noise > 0.0 {
                rng.random_range(-world.raid_noise..=world.raid_noise)
            } else {
                0.0
            }
        })
        .collect();

    let mut crop_loss = 0.0;
    let mut interceptions = vec![0u64; n];
    for i in 0..n {
        if attacker.attacks[i] {
            if defender.coverage[i] {
                interceptions[i] = 1;
            } else {
                crop_loss += world.target_value[i] * (1.0 + noise[i]);
            }
        }
    }

    let record = RoundRecord {
        round,
        defender: defender.clone(),
        attacker: attacker.clone(),
        true_rewards: reward_vector(attacker, &world.ground_truth_payoffs)?,
        crop_loss,
        interceptions_per_target: interceptions.clone(),
    };
    let observation = RoundObservation {
        coverage: defender.clone(),
        interceptions,
        crop_loss,
    };
    Ok((record, observation))
}
