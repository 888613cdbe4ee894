//! Fixed inputs shared by the benchmarks.

use rmmdp::explore::{ConfidenceParams, ExplorationStats, ParamSpec};
use rmmdp::recovery::exact_stats;
use rmmdp::{random_instance, InstanceSpec, RmMdpModel};

pub fn instance(states: usize, actions: usize, horizon: usize) -> RmMdpModel {
    random_instance(InstanceSpec { states, actions, horizon, delta_min: 0.2 }, 7).expect("valid instance")
}

pub fn params(model: &RmMdpModel) -> ConfidenceParams {
    ParamSpec { k_max: Some(100_000), ..ParamSpec::new(0.05, 1e-3, 0.1) }
        .resolve(model.states, model.actions, model.horizon)
        .expect("valid parameters")
}

/// Statistics with `n` samples of every pair.
pub fn saturated_stats(model: &RmMdpModel, n: u64) -> ExplorationStats {
    exact_stats(model, n)
}
