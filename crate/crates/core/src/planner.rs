//! Belief-state planning.
//!
//! Dynamics do not depend on the context, so the posterior probability of
//! context 1 summarizes everything a history says about future rewards.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvInstance;
use crate::error::{Error, Result};
use crate::exact::{trajectory_count, Policy, Step, DEFAULT_ENUMERATION_CAP};
use crate::model::RmMdpModel;

/// Bayes update of `b = P(context 1)` after observing reward `r` at `x`.
/// An observation impossible under both contexts leaves `b` unchanged.
pub fn belief_update(model: &RmMdpModel, b: f64, x: usize, r: u8) -> f64 {
    update(&model.p1, &model.p2, b, x, r)
}

fn update(p1: &[f64], p2: &[f64], b: f64, x: usize, r: u8) -> f64 {
    let (l1, l2) = if r == 1 { (p1[x], p2[x]) } else { (1.0 - p1[x], 1.0 - p2[x]) };
    let num = b * l1;
    let den = num + (1.0 - b) * l2;
    if den == 0.0 || l1 == l2 {
        b
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

/// Reward tables needed to track the posterior online.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefFilter {
    pub actions: usize,
    pub weight: f64,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
}

impl BeliefFilter {
    pub fn from_model(model: &RmMdpModel) -> Self {
        BeliefFilter { actions: model.actions, weight: model.weight, p1: model.p1.clone(), p2: model.p2.clone() }
    }

    pub fn posterior(&self, history: &[Step]) -> f64 {
        history
            .iter()
            .fold(self.weight, |b, st| update(&self.p1, &self.p2, b, st.s * self.actions + st.a, st.r))
    }
}

/// Nearest of the centers `(i + 0.5) / G`; ties go to the lower index.
pub fn bucket(b: f64, grid: usize) -> usize {
    let scaled = (b * grid as f64).ceil() as isize - 1;
    scaled.clamp(0, grid as isize - 1) as usize
}

pub fn bucket_center(i: usize, grid: usize) -> f64 {
    (i as f64 + 0.5) / grid as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BeliefPolicy {
    /// Actions for every history node, keyed `s,a,r;...;|s`.
    ExactTree { horizon: usize, filter: BeliefFilter, nodes: BTreeMap<String, usize> },
    /// `table[t][s][bucket]`.
    Discretized { horizon: usize, grid: usize, filter: BeliefFilter, table: Vec<Vec<Vec<usize>>> },
}

fn node_key(history: &[Step], s: usize) -> String {
    let mut key = String::new();
    for st in history {
        key.push_str(&format!("{},{},{};", st.s, st.a, st.r));
    }
    key.push_str(&format!("|{s}"));
    key
}

impl Policy for BeliefPolicy {
    fn act(&self, history: &[Step], s: usize) -> usize {
        match self {
            BeliefPolicy::ExactTree { nodes, .. } => nodes.get(&node_key(history, s)).copied().unwrap_or(0),
            BeliefPolicy::Discretized { grid, filter, table, .. } => {
                let t = history.len().min(table.len() - 1);
                table[t][s][bucket(filter.posterior(history), *grid)]
            }
        }
    }
}

impl BeliefPolicy {
    pub fn filter(&self) -> &BeliefFilter {
        match self {
            BeliefPolicy::ExactTree { filter, .. } | BeliefPolicy::Discretized { filter, .. } => filter,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            BeliefPolicy::ExactTree { horizon, .. } | BeliefPolicy::Discretized { horizon, .. } => *horizon,
        }
    }

    pub fn mode(&self) -> &'static str {
        match self {
            BeliefPolicy::ExactTree { .. } => "exact_tree",
            BeliefPolicy::Discretized { .. } => "discretized",
        }
    }

    /// Checks that the policy can drive `model`.
    pub fn check_compatible(&self, model: &RmMdpModel) -> Result<()> {
        let f = self.filter();
        if f.actions != model.actions || f.p1.len() != model.num_pairs() || self.horizon() != model.horizon {
            return Err(Error::DimensionMismatch("policy was planned for a model of a different shape".into()));
        }
        if let BeliefPolicy::Discretized { table, .. } = self {
            if table.iter().any(|row| row.len() != model.states) {
                return Err(Error::DimensionMismatch("policy table state count differs from model".into()));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn reward_prob(model: &RmMdpModel, b: f64, x: usize) -> f64 {
    b * model.p1[x] + (1.0 - b) * model.p2[x]
}

type Memo = HashMap<(usize, usize, u64), (f64, usize)>;

struct ExactPlanner<'a> {
    model: &'a RmMdpModel,
    memo: Memo,
}

impl ExactPlanner<'_> {
    /// Optimal expected reward-to-go from step `t` in `s` with belief `b`.
    fn solve(&mut self, t: usize, s: usize, b: f64) -> (f64, usize) {
        if let Some(&hit) = self.memo.get(&(t, s, b.to_bits())) {
            return hit;
        }
        let m = self.model;
        let mut best = (f64::NEG_INFINITY, 0);
        for a in 0..m.actions {
            let x = m.index(s, a);
            let p = reward_prob(m, b, x);
            let mut q = p;
            if t + 1 < m.horizon {
                for (r, pr) in [(0u8, 1.0 - p), (1u8, p)] {
                    if pr <= 0.0 {
                        continue;
                    }
                    let nb = belief_update(m, b, x, r);
                    for (s2, &ps) in m.next_state_probs(s, a).iter().enumerate() {
                        if ps > 0.0 {
                            q += pr * ps * self.solve(t + 1, s2, nb).0;
                        }
                    }
                }
            }
            if q > best.0 {
                best = (q, a);
            }
        }
        self.memo.insert((t, s, b.to_bits()), best);
        best
    }

    /// Labels every `(r, s')` branch below `(history, s)`.
    fn label(&mut self, history: &mut Vec<Step>, s: usize, b: f64, nodes: &mut BTreeMap<String, usize>) {
        let m = self.model;
        let t = history.len();
        let a = self.solve(t, s, b).1;
        nodes.insert(node_key(history, s), a);
        if t + 1 == m.horizon {
            return;
        }
        let x = m.index(s, a);
        for r in 0..2u8 {
            let nb = belief_update(m, b, x, r);
            history.push(Step { s, a, r });
            for s2 in 0..m.states {
                self.label(history, s2, nb, nodes);
            }
            history.pop();
        }
    }
}

/// Backward induction over the full belief tree. Returns the policy and
/// its exact value.
pub fn plan_exact_small(model: &RmMdpModel) -> Result<(BeliefPolicy, f64)> {
    let count = trajectory_count(model);
    if count > DEFAULT_ENUMERATION_CAP {
        return Err(Error::EnumerationCap { count, cap: DEFAULT_ENUMERATION_CAP });
    }
    let mut planner = ExactPlanner { model, memo: HashMap::new() };
    let mut value = 0.0;
    let mut nodes = BTreeMap::new();
    for (s, &p) in model.initial.iter().enumerate() {
        if p > 0.0 {
            value += p * planner.solve(0, s, model.weight).0;
        }
        if model.horizon > 0 {
            planner.label(&mut Vec::new(), s, model.weight, &mut nodes);
        }
    }
    let policy = BeliefPolicy::ExactTree { horizon: model.horizon, filter: BeliefFilter::from_model(model), nodes };
    Ok((policy, value))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedPlan {
    pub policy: BeliefPolicy,
    /// Value of the grid recursion (beliefs replaced by bucket centers).
    pub dp_value: f64,
    /// Exact value of the greedy policy on the model.
    pub value: f64,
}

/// Value iteration over `(t, s, bucket)`: the belief at a bucket center is
/// filtered exactly, then projected to the nearest center.
pub fn plan_discretized(model: &RmMdpModel, grid: usize) -> Result<DiscretizedPlan> {
    if grid < 2 {
        return Err(Error::InvalidParameter(format!("grid must have at least 2 buckets, got {grid}")));
    }
    let (ns, na, h) = (model.states, model.actions, model.horizon);
    let mut next = vec![vec![0.0; grid]; ns];
    let mut table = vec![vec![vec![0usize; grid]; ns]; h];
    for t in (0..h).rev() {
        let mut cur = vec![vec![0.0; grid]; ns];
        for s in 0..ns {
            for i in 0..grid {
                let c = bucket_center(i, grid);
                let mut best = (f64::NEG_INFINITY, 0);
                for a in 0..na {
                    let x = model.index(s, a);
                    let p = reward_prob(model, c, x);
                    let mut q = p;
                    if t + 1 < h {
                        for (r, pr) in [(0u8, 1.0 - p), (1u8, p)] {
                            if pr <= 0.0 {
                                continue;
                            }
                            let j = bucket(belief_update(model, c, x, r), grid);
                            let cont: f64 = model
                                .next_state_probs(s, a)
                                .iter()
                                .zip(&next)
                                .map(|(ps, row)| ps * row[j])
                                .sum();
                            q += pr * cont;
                        }
                    }
                    if q > best.0 {
                        best = (q, a);
                    }
                }
                cur[s][i] = best.0;
                table[t][s][i] = best.1;
            }
        }
        next = cur;
    }
    let root = bucket(model.weight, grid);
    let dp_value = if h == 0 { 0.0 } else { model.initial.iter().zip(&next).map(|(p, row)| p * row[root]).sum() };
    let policy = BeliefPolicy::Discretized { horizon: h, grid, filter: BeliefFilter::from_model(model), table };
    let value = belief_policy_value(model, &policy)?;
    Ok(DiscretizedPlan { policy, dp_value, value })
}

/// Exact value of a policy whose action depends only on `(t, s, posterior)`,
/// on the model the policy filters with. Cost grows with the number of
/// distinct reachable beliefs, not with the number of histories.
pub fn belief_policy_value(model: &RmMdpModel, policy: &BeliefPolicy) -> Result<f64> {
    policy.check_compatible(model)?;
    let BeliefPolicy::Discretized { grid, table, .. } = policy else {
        return crate::exact::value_of_policy_exact(model, policy);
    };
    let mut memo: HashMap<(usize, usize, u64), f64> = HashMap::new();
    fn go(
        model: &RmMdpModel,
        grid: usize,
        table: &[Vec<Vec<usize>>],
        memo: &mut HashMap<(usize, usize, u64), f64>,
        t: usize,
        s: usize,
        b: f64,
    ) -> f64 {
        if let Some(&v) = memo.get(&(t, s, b.to_bits())) {
            return v;
        }
        let a = table[t][s][bucket(b, grid)];
        let x = model.index(s, a);
        let p = reward_prob(model, b, x);
        let mut v = p;
        if t + 1 < model.horizon {
            for (r, pr) in [(0u8, 1.0 - p), (1u8, p)] {
                if pr <= 0.0 {
                    continue;
                }
                let nb = belief_update(model, b, x, r);
                for (s2, &ps) in model.next_state_probs(s, a).iter().enumerate() {
                    if ps > 0.0 {
                        v += pr * ps * go(model, grid, table, memo, t + 1, s2, nb);
                    }
                }
            }
        }
        memo.insert((t, s, b.to_bits()), v);
        v
    }
    if model.horizon == 0 {
        return Ok(0.0);
    }
    Ok(model
        .initial
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, &p)| p * go(model, *grid, table, &mut memo, 0, s, model.weight))
        .sum())
}

/// Mean return over `n` simulated episodes and its standard error.
pub fn policy_value_mc(model: &RmMdpModel, policy: &impl Policy, n: u64, seed: u64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one episode".into()));
    }
    let mut env = EnvInstance::new(model.clone(), seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let g = env.run_episode(policy)?.total_reward() as f64;
        sum += g;
        sum_sq += g * g;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 { ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    Ok((mean, (var / nf).sqrt()))
}
