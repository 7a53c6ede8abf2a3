//! Simulator for sequential boundary defense against adaptive crop raiders.
//!
//! A defender places `K` guard teams on `N` boundary segments each round
//! while an attacker raids `Q` segments; the defender sees only its own
//! coverage, which raids it intercepted, and the round's total crop loss.
//! The crate provides the learning policies (perturbed-leader selection
//! with uniform exploration, fixed or adaptive), the resampling machinery
//! that turns that censored feedback into reward estimates, the synthetic
//! environment with its two attacker models, and a seeded experiment
//! harness with CSV/JSON output. The `guardsim` binary exposes the
//! harness on the command line.
//!
//! ```no_run
//! use guardsim::harness::{default_sweep_plan, execute_plan};
//!
//! let mut plan = default_sweep_plan();
//! plan.base_seed = Some(7);
//! plan.output_dir = "out".into();
//! let outputs = execute_plan(&plan, None).unwrap();
//! println!("{} runs written under {}", outputs.run_count, outputs.dir.display());
//! ```

pub mod env;
pub mod error;
pub mod estimate;
pub mod game;
pub mod harness;
pub mod metrics;
pub mod perturb;
pub mod policy;
pub mod resample;

pub use env::{Attacker, AttackerSpec, BoundaryWorld, WorldSpec};
pub use error::{Error, Result};
pub use estimate::{PayoffEstimate, RoundObservation};
pub use game::{
    AttackerAction, DefenderAction, GameConfig, PayoffTable, PenaltyDistribution, RoundRecord,
};
pub use harness::{
    default_sweep_plan, execute_plan, load_plan, run_game, ExperimentPlan, GameStreams,
    PlanOutputs, RunTask, SweepSpec,
};
pub use metrics::{PerRound, RunSummary};
pub use policy::{FplUePolicy, HerdsPolicy, Policy, PolicySpec, StaticPolicy, UniformRandomPolicy};
pub use resample::RewardEstimateVector;
