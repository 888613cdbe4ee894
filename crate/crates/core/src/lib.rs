//! Learning in two-reward-mixing MDPs.
//!
//! Each episode draws one of two Bernoulli reward tables at random and keeps
//! it hidden. The pipeline gathers second-order reward correlations by pure
//! exploration on an augmented MDP, recovers both reward tables with an LP
//! and a 2-SAT sign assignment, then plans over the posterior of the context.

pub mod env;
pub mod error;
pub mod exact;
pub mod explore;
pub mod harness;
pub mod model;
pub mod planner;
pub mod recovery;
pub mod rng;

pub use env::{EnvInstance, StepOutcome, Trajectory, TrajectoryLog};
pub use error::{Error, Result};
pub use exact::{
    optimal_value_exact, trajectory_l1_distance, value_of_policy_exact, ExactOracle, Policy, Step,
};
pub use model::{
    derive_reward_stats, exact_moments, oracle_recover_from_exact_moments, validate_model,
    DerivedRewardStats, MomentTables, RmMdpModel,
};
pub use harness::{
    make_lower_bound_instance, random_instance, run_algorithm1, sweep, ExperimentConfig, InstanceSpec, RunReport,
    RunStatus, SweepRow, SweepSpec,
};
pub use planner::{belief_update, plan_discretized, plan_exact_small, policy_value_mc, BeliefPolicy};
pub use recovery::{
    assign_signs, compute_pair_bounds, oracle_lp_check, recover_model, solve_magnitude_lp, MagnitudeSolution,
    PairBounds, RecoveredModel,
};
