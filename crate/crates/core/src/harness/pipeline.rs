use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::env::EnvInstance;
use crate::error::{Error, Result};
use crate::exact::{optimal_value_exact, trajectory_count, value_of_policy_exact, DEFAULT_ENUMERATION_CAP};
use crate::explore::{explore, ConfidenceParams, ParamSpec, TerminationReason, DEFAULT_C_CONF};
use crate::model::RmMdpModel;
use crate::planner::{plan_discretized, policy_value_mc, BeliefPolicy};
use crate::recovery::{ensure_supported_weight, recover_model, Provenance};
use crate::rng::derive_seed;

const EVAL_SALT: u64 = 0xe7a1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub eps: f64,
    pub eta: f64,
    pub delta_hint: Option<f64>,
    pub seed: u64,
    pub k_max: Option<u64>,
    pub grid: Option<usize>,
    /// Monte Carlo episodes for the value estimate.
    pub trials: u64,
    pub c_conf: f64,
    /// Replaces the scheduled `eps_pe` when set.
    pub eps_pe: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(eps: f64, eta: f64, seed: u64) -> Self {
        ExperimentConfig {
            eps,
            eta,
            delta_hint: None,
            seed,
            k_max: None,
            grid: None,
            trials: 10_000,
            c_conf: DEFAULT_C_CONF,
            eps_pe: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::InvalidParameter(format!("eps = {} must lie in (0, 1]", self.eps)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParameter(format!("eta = {} must lie in (0, 1)", self.eta)));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trial count must be at least 1".into()));
        }
        if let Some(d) = self.delta_hint {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::InvalidParameter(format!("delta hint = {d} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Exploration threshold, regularity floor and default grid derived from
/// the target accuracy, half of which goes to learning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eps_pe: f64,
    pub eps0: f64,
    pub delta_eff: f64,
    pub grid: usize,
}

pub fn schedule(eps: f64, horizon: usize, delta_hint: Option<f64>) -> Schedule {
    let h = horizon.max(1) as f64;
    let half = eps / 2.0;
    let fallback = half / (h * h);
    let delta_eff = delta_hint.unwrap_or(fallback);
    Schedule {
        eps_pe: half / (h * h * h) * delta_eff.max(fallback),
        eps0: fallback,
        delta_eff,
        grid: (8.0 * h * h / eps).ceil() as usize,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Degraded,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub episodes: u64,
    pub termination: TerminationReason,
    pub vtilde0: f64,
    pub vtilde0_trace: Vec<(u64, f64)>,
    pub eps: f64,
    pub schedule: Schedule,
    pub params: ConfidenceParams,
    pub provenance: Option<Provenance>,
    pub failure: Option<String>,
    pub planner_dp_value: Option<f64>,
    /// Monte Carlo return of the learned policy on the true model.
    pub value_estimate: Option<f64>,
    /// 95% half-width of `value_estimate`.
    pub value_ci: Option<f64>,
    pub optimal_value: Option<f64>,
    pub policy_value: Option<f64>,
    pub gap: Option<f64>,
    /// Zero when the gap is exact.
    pub gap_ci: Option<f64>,
    pub wall_ms: u64,
}

impl RunReport {
    pub fn lp_objective(&self) -> Option<f64> {
        self.provenance.as_ref().map(|p| p.lp_objective)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub policy: Option<BeliefPolicy>,
    pub report: RunReport,
}

/// Explore, recover, plan on the recovered model, then score the policy on
/// the true model.
pub fn run_algorithm1(model: &RmMdpModel, config: &ExperimentConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    config.validate()?;
    ensure_supported_weight(model.weight)?;
    let mut sched = schedule(config.eps, model.horizon, config.delta_hint);
    if let Some(e) = config.eps_pe {
        sched.eps_pe = e;
    }
    if let Some(g) = config.grid {
        sched.grid = g;
    }
    let spec = ParamSpec { eps_pe: sched.eps_pe, eps0: sched.eps0, eta: config.eta, c_conf: config.c_conf, k_max: config.k_max };
    let params = spec.resolve(model.states, model.actions, model.horizon)?;
    let mut env = EnvInstance::new(model.clone(), config.seed);
    let run = explore(&mut env, &params)?;
    let mut report = RunReport {
        status: match run.termination {
            TerminationReason::Converged => RunStatus::Ok,
            TerminationReason::KMaxReached => RunStatus::Degraded,
        },
        episodes: run.stats.k,
        termination: run.termination,
        vtilde0: run.vtilde0,
        vtilde0_trace: run.vtilde0_trace.clone(),
        eps: config.eps,
        schedule: sched,
        params: params.clone(),
        provenance: None,
        failure: None,
        planner_dp_value: None,
        value_estimate: None,
        value_ci: None,
        optimal_value: None,
        policy_value: None,
        gap: None,
        gap_ci: None,
        wall_ms: 0,
    };
    let recovered = match recover_model(&run.stats, &params) {
        Ok(r) => r,
        Err(e @ (Error::Infeasible { .. } | Error::Unsatisfiable { .. })) => {
            report.status = RunStatus::Failed;
            report.failure = Some(e.to_string());
            report.wall_ms = start.elapsed().as_millis() as u64;
            return Ok(RunOutcome { policy: None, report });
        }
        Err(e) => return Err(e),
    };
    report.provenance = Some(recovered.provenance.clone());
    let plan = plan_discretized(&recovered.model, sched.grid)?;
    report.planner_dp_value = Some(plan.dp_value);
    let (mean, se) = policy_value_mc(model, &plan.policy, config.trials, derive_seed(config.seed, EVAL_SALT))?;
    report.value_estimate = Some(mean);
    report.value_ci = Some(1.96 * se);
    if trajectory_count(model) <= DEFAULT_ENUMERATION_CAP {
        let v_star = optimal_value_exact(model)?.0;
        let v_pi = value_of_policy_exact(model, &plan.policy)?;
        report.optimal_value = Some(v_star);
        report.policy_value = Some(v_pi);
        report.gap = Some(v_star - v_pi);
        report.gap_ci = Some(0.0);
    } else {
        // Reference: grid planner on the true model, scored exactly on its own beliefs.
        let reference = plan_discretized(model, sched.grid)?;
        report.optimal_value = Some(reference.value);
        report.gap = Some(reference.value - mean);
        report.gap_ci = Some(1.96 * se);
    }
    report.wall_ms = start.elapsed().as_millis() as u64;
    Ok(RunOutcome { policy: Some(plan.policy), report })
}
