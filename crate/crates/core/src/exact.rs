//! Exhaustive-enumeration oracles over the trajectory tree.
//!
//! These walk every `(s, a, r)` history of length `H`, carrying the joint
//! probability of the history under each context separately. They are
//! exact but exponential in `H`, so every entry point checks the trajectory
//! count `S^H * A^H * 2^H` against a cap.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RmMdpModel;

pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// One observed step of an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Step {
    pub s: usize,
    pub a: usize,
    pub r: u8,
}

/// A deterministic history-dependent policy.
///
/// `history` holds the completed steps of the current episode, so the time
/// index is `history.len()`. The latent context is never passed in.
pub trait Policy {
    fn act(&self, history: &[Step], s: usize) -> usize;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn act(&self, history: &[Step], s: usize) -> usize {
        (**self).act(history, s)
    }
}

/// Key identifying a history node: `(s, a, r)*` followed by the current state.
pub fn history_key(history: &[Step], s: usize) -> Vec<u32> {
    let mut key = Vec::with_capacity(history.len() * 3 + 1);
    for st in history {
        key.extend([st.s as u32, st.a as u32, st.r as u32]);
    }
    key.push(s as u32);
    key
}

/// Policy given as an explicit table over history nodes; missing nodes
/// (unreachable under the policy) fall back to action 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoryTablePolicy {
    pub table: BTreeMap<Vec<u32>, usize>,
}

impl Policy for HistoryTablePolicy {
    fn act(&self, history: &[Step], s: usize) -> usize {
        self.table.get(&history_key(history, s)).copied().unwrap_or(0)
    }
}

/// Fixed action per time step regardless of history.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenLoopPolicy(pub Vec<usize>);

impl Policy for OpenLoopPolicy {
    fn act(&self, history: &[Step], _s: usize) -> usize {
        self.0[history.len()]
    }
}

/// Pseudo-random deterministic policy: the action is a hash of
/// `(seed, history, s)`. Used to sample arbitrary history-dependent policies.
#[derive(Clone, Debug, PartialEq)]
pub struct HashedPolicy {
    pub seed: u64,
    pub actions: usize,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Policy for HashedPolicy {
    fn act(&self, history: &[Step], s: usize) -> usize {
        let mut h = mix(self.seed);
        for v in history_key(history, s) {
            h = mix(h ^ v as u64);
        }
        (h % self.actions as u64) as usize
    }
}

pub fn trajectory_count(model: &RmMdpModel) -> u128 {
    let per_step = (model.states as u128) * (model.actions as u128) * 2;
    (0..model.horizon).try_fold(1u128, |acc, _| acc.checked_mul(per_step)).unwrap_or(u128::MAX)
}

/// Exact evaluator bound to one model and an enumeration cap.
#[derive(Clone, Copy, Debug)]
pub struct ExactOracle<'a> {
    model: &'a RmMdpModel,
    cap: u128,
}

struct Node {
    alpha1: f64,
    alpha2: f64,
}

impl<'a> ExactOracle<'a> {
    pub fn new(model: &'a RmMdpModel) -> Self {
        ExactOracle { model, cap: DEFAULT_ENUMERATION_CAP }
    }

    pub fn with_cap(mut self, cap: u128) -> Self {
        self.cap = cap;
        self
    }

    fn check_cap(&self) -> Result<()> {
        let count = trajectory_count(self.model);
        if count > self.cap {
            return Err(Error::EnumerationCap { count, cap: self.cap });
        }
        Ok(())
    }

    fn roots(&self) -> impl Iterator<Item = (usize, Node)> + '_ {
        let w = self.model.weight;
        self.model.initial.iter().enumerate().filter(|(_, &p)| p > 0.0).map(move |(s, &p)| {
            (s, Node { alpha1: w * p, alpha2: (1.0 - w) * p })
        })
    }

    /// Expected H-step return of `policy`.
    pub fn policy_value(&self, policy: &impl Policy) -> Result<f64> {
        self.check_cap()?;
        let mut history = Vec::with_capacity(self.model.horizon);
        let mut total = 0.0;
        for (s, node) in self.roots() {
            total += self.eval(policy, &mut history, s, node);
        }
        Ok(total)
    }

    /// Contribution of the subtree at `(history, s)` with unnormalized
    /// per-context weights.
    fn eval(&self, policy: &impl Policy, history: &mut Vec<Step>, s: usize, node: Node) -> f64 {
        let a = policy.act(history, s);
        self.action_value(history, s, a, &node, &mut |h, s2, child| self.eval(policy, h, s2, child))
    }

    fn action_value(
        &self,
        history: &mut Vec<Step>,
        s: usize,
        a: usize,
        node: &Node,
        child: &mut dyn FnMut(&mut Vec<Step>, usize, Node) -> f64,
    ) -> f64 {
        let m = self.model;
        let x = m.index(s, a);
        let last = history.len() + 1 == m.horizon;
        let mut total = 0.0;
        for r in 0..2u8 {
            let b1 = node.alpha1 * m.reward_prob(1, x, r);
            let b2 = node.alpha2 * m.reward_prob(2, x, r);
            if b1 + b2 == 0.0 {
                continue;
            }
            if r == 1 {
                total += b1 + b2;
            }
            if last {
                continue;
            }
            history.push(Step { s, a, r });
            for (s2, &p) in m.next_state_probs(s, a).iter().enumerate() {
                if p > 0.0 {
                    total += child(history, s2, Node { alpha1: b1 * p, alpha2: b2 * p });
                }
            }
            history.pop();
        }
        total
    }

    /// Optimal value over all history-dependent policies, with an argmax
    /// policy tabulated on every positive-probability history node.
    /// Ties go to the lowest action index.
    pub fn optimal(&self) -> Result<(f64, HistoryTablePolicy)> {
        self.check_cap()?;
        let mut policy = HistoryTablePolicy::default();
        let mut history = Vec::with_capacity(self.model.horizon);
        let mut total = 0.0;
        for (s, node) in self.roots() {
            total += self.best(&mut history, s, node, &mut policy);
        }
        Ok((total, policy))
    }

    fn best(
        &self,
        history: &mut Vec<Step>,
        s: usize,
        node: Node,
        policy: &mut HistoryTablePolicy,
    ) -> f64 {
        let mut best: Option<(usize, f64, HistoryTablePolicy)> = None;
        for a in 0..self.model.actions {
            let mut sub = HistoryTablePolicy::default();
            let v = self.action_value(history, s, a, &node, &mut |h, s2, child| {
                self.best(h, s2, child, &mut sub)
            });
            if best.as_ref().is_none_or(|(_, bv, _)| v > *bv) {
                best = Some((a, v, sub));
            }
        }
        let (a, v, sub) = best.expect("at least one action");
        policy.table.insert(history_key(history, s), a);
        policy.table.extend(sub.table);
        v
    }

    /// `sum_tau |P_self(tau) - P_other(tau)|` under `policy`.
    pub fn l1_distance(&self, other: &RmMdpModel, policy: &impl Policy) -> Result<f64> {
        let (a, b) = (self.model, other);
        if (a.states, a.actions, a.horizon) != (b.states, b.actions, b.horizon) {
            return Err(Error::DimensionMismatch(format!(
                "models have (S,A,H) = ({},{},{}) and ({},{},{})",
                a.states, a.actions, a.horizon, b.states, b.actions, b.horizon
            )));
        }
        self.check_cap()?;
        let mut history = Vec::with_capacity(a.horizon);
        let mut total = 0.0;
        for s in 0..a.states {
            let wa = [a.weight * a.initial[s], (1.0 - a.weight) * a.initial[s]];
            let wb = [b.weight * b.initial[s], (1.0 - b.weight) * b.initial[s]];
            total += self.l1_rec(other, policy, &mut history, s, wa, wb);
        }
        Ok(total)
    }

    fn l1_rec(
        &self,
        other: &RmMdpModel,
        policy: &impl Policy,
        history: &mut Vec<Step>,
        s: usize,
        wa: [f64; 2],
        wb: [f64; 2],
    ) -> f64 {
        if wa[0] + wa[1] + wb[0] + wb[1] == 0.0 {
            return 0.0;
        }
        let (ma, mb) = (self.model, other);
        let a = policy.act(history, s);
        let x = ma.index(s, a);
        let last = history.len() + 1 == ma.horizon;
        let mut total = 0.0;
        for r in 0..2u8 {
            let ra = [wa[0] * ma.reward_prob(1, x, r), wa[1] * ma.reward_prob(2, x, r)];
            let rb = [wb[0] * mb.reward_prob(1, x, r), wb[1] * mb.reward_prob(2, x, r)];
            if last {
                total += ((ra[0] + ra[1]) - (rb[0] + rb[1])).abs();
                continue;
            }
            history.push(Step { s, a, r });
            let (ta, tb) = (ma.next_state_probs(s, a), mb.next_state_probs(s, a));
            for s2 in 0..ma.states {
                total += self.l1_rec(
                    other,
                    policy,
                    history,
                    s2,
                    [ra[0] * ta[s2], ra[1] * ta[s2]],
                    [rb[0] * tb[s2], rb[1] * tb[s2]],
                );
            }
            history.pop();
        }
        total
    }

    /// Joint law of the reward sequence when the action at step `t` is
    /// `actions[t]` regardless of history. Index bit `t` holds `r_t`.
    pub fn open_loop_reward_distribution(&self, actions: &[usize]) -> Result<Vec<f64>> {
        let m = self.model;
        if actions.len() != m.horizon {
            return Err(Error::DimensionMismatch(format!(
                "{} actions for horizon {}",
                actions.len(),
                m.horizon
            )));
        }
        self.check_cap()?;
        let mut dist = vec![0.0; 1 << m.horizon];
        for context in [1u8, 2u8] {
            let wm = if context == 1 { m.weight } else { 1.0 - m.weight };
            // (state, reward bits) -> probability
            let mut layer: Vec<(usize, usize, f64)> =
                (0..m.states).map(|s| (s, 0usize, wm * m.initial[s])).collect();
            for (t, &a) in actions.iter().enumerate() {
                let mut next = Vec::new();
                for &(s, bits, p) in &layer {
                    if p == 0.0 {
                        continue;
                    }
                    let x = m.index(s, a);
                    for r in 0..2u8 {
                        let pr = p * m.reward_prob(context, x, r);
                        let bits = bits | ((r as usize) << t);
                        if t + 1 == m.horizon {
                            dist[bits] += pr;
                        } else {
                            for (s2, &q) in m.next_state_probs(s, a).iter().enumerate() {
                                next.push((s2, bits, pr * q));
                            }
                        }
                    }
                }
                layer = next;
            }
        }
        Ok(dist)
    }
}

/// Expected return of `policy` by exhaustive enumeration.
pub fn value_of_policy_exact(model: &RmMdpModel, policy: &impl Policy) -> Result<f64> {
    ExactOracle::new(model).policy_value(policy)
}

/// `V*` over all history-dependent policies, plus an optimal policy.
pub fn optimal_value_exact(model: &RmMdpModel) -> Result<(f64, HistoryTablePolicy)> {
    ExactOracle::new(model).optimal()
}

pub fn trajectory_l1_distance(
    model_a: &RmMdpModel,
    model_b: &RmMdpModel,
    policy: &impl Policy,
) -> Result<f64> {
    ExactOracle::new(model_a).l1_distance(model_b, policy)
}

/// Optimal finite-horizon value of the plain MDP with shared dynamics and a
/// single expected-reward table (standard backward induction).
pub fn plain_mdp_optimal_value(model: &RmMdpModel, rewards: &[f64]) -> f64 {
    let (ns, na) = (model.states, model.actions);
    let mut v = vec![0.0; ns];
    for t in (0..model.horizon).rev() {
        let last = t + 1 == model.horizon;
        v = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        let future: f64 = if last {
                            0.0
                        } else {
                            model.next_state_probs(s, a).iter().zip(&v).map(|(p, vv)| p * vv).sum()
                        };
                        rewards[model.index(s, a)] + future
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    model.initial.iter().zip(&v).map(|(p, vv)| p * vv).sum()
}

/// Value of the policy that picks actions uniformly at random at every step.
pub fn uniform_random_value(model: &RmMdpModel) -> f64 {
    let (ns, na) = (model.states, model.actions);
    let mean: Vec<f64> = model
        .p1
        .iter()
        .zip(&model.p2)
        .map(|(a, b)| model.weight * a + (1.0 - model.weight) * b)
        .collect();
    let mut dist = model.initial.clone();
    let mut total = 0.0;
    for _ in 0..model.horizon {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                let p = dist[s] / na as f64;
                total += p * mean[model.index(s, a)];
                for (s2, q) in model.next_state_probs(s, a).iter().enumerate() {
                    next[s2] += p * q;
                }
            }
        }
        dist = next;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::uniform;

    #[test]
    fn deterministic_rewards_give_horizon() {
        let m = uniform(2, 2, 3, vec![1.0; 4], vec![1.0; 4]);
        let v = value_of_policy_exact(&m, &HashedPolicy { seed: 3, actions: 2 }).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn half_rewards_give_half_horizon() {
        let m = uniform(2, 2, 3, vec![0.5; 4], vec![0.5; 4]);
        let v = value_of_policy_exact(&m, &HashedPolicy { seed: 9, actions: 2 }).unwrap();
        assert!((v - 1.5).abs() < 1e-12);
    }

    #[test]
    fn single_step_optimum_is_greedy_on_p_plus() {
        let m = uniform(2, 3, 1, vec![0.1, 0.9, 0.4, 0.3, 0.2, 0.8], vec![0.5, 0.1, 0.4, 0.3, 0.6, 0.6]);
        let (v, _) = optimal_value_exact(&m).unwrap();
        let expected = 0.5 * (0.5_f64.max(0.3))
            + 0.5 * ((0.3_f64).max(0.4).max(0.7));
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn optimal_policy_value_matches_optimum_exactly() {
        let m = uniform(2, 2, 3, vec![0.9, 0.2, 0.4, 0.6], vec![0.1, 0.3, 0.8, 0.6]);
        let (v, pi) = optimal_value_exact(&m).unwrap();
        assert_eq!(value_of_policy_exact(&m, &pi).unwrap(), v);
    }

    #[test]
    fn cap_is_enforced() {
        let m = uniform(3, 3, 8, vec![0.5; 9], vec![0.5; 9]);
        match optimal_value_exact(&m) {
            Err(Error::EnumerationCap { count, cap }) => {
                assert_eq!(count, 18u128.pow(8));
                assert_eq!(cap, DEFAULT_ENUMERATION_CAP);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
        assert!(ExactOracle::new(&m).with_cap(u128::MAX).check_cap().is_ok());
    }

    #[test]
    fn l1_examples() {
        let m = uniform(2, 2, 2, vec![0.3, 0.6, 0.2, 0.9], vec![0.7, 0.1, 0.5, 0.5]);
        let pi = HashedPolicy { seed: 1, actions: 2 };
        assert_eq!(trajectory_l1_distance(&m, &m, &pi).unwrap(), 0.0);

        let pi = OpenLoopPolicy(vec![0, 0]);
        let mut ones = uniform(1, 1, 2, vec![1.0], vec![1.0]);
        ones.transitions = vec![1.0];
        let mut zeros = ones.clone();
        zeros.p1 = vec![0.0];
        zeros.p2 = vec![0.0];
        assert!((trajectory_l1_distance(&ones, &zeros, &pi).unwrap() - 2.0).abs() < 1e-12);

        // One step: outcomes r=1 / r=0 each shift by 0.1.
        let a = uniform(1, 1, 1, vec![0.6], vec![0.2]);
        let mut b = a.clone();
        b.p1 = vec![0.7];
        b.p2 = vec![0.3];
        assert!((trajectory_l1_distance(&a, &b, &pi).unwrap() - 0.2).abs() < 1e-12);

        let short = uniform(1, 1, 2, vec![0.6], vec![0.2]);
        assert!(matches!(
            trajectory_l1_distance(&a, &short, &pi),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn open_loop_distribution_sums_to_one() {
        let m = uniform(2, 2, 3, vec![0.3, 0.6, 0.2, 0.9], vec![0.7, 0.1, 0.5, 0.5]);
        let d = ExactOracle::new(&m).open_loop_reward_distribution(&[0, 1, 1]).unwrap();
        assert_eq!(d.len(), 8);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plain_mdp_and_uniform_random_oracles() {
        let m = uniform(1, 2, 3, vec![0.2, 0.7], vec![0.2, 0.7]);
        assert!((plain_mdp_optimal_value(&m, &m.p1) - 2.1).abs() < 1e-12);
        assert!((uniform_random_value(&m) - 1.35).abs() < 1e-12);
    }
}
