use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::Step;

/// Index of the unordered pair `{i, j}` in a packed upper triangle.
#[inline]
pub fn pair_index(i: usize, j: usize) -> usize {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    hi * (hi + 1) / 2 + lo
}

pub fn pair_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Inverse of [`pair_index`]; `(lo, hi)` with `lo <= hi`.
pub fn pair_members(index: usize) -> (usize, usize) {
    let mut hi = ((((8 * index + 1) as f64).sqrt() - 1.0) / 2.0) as usize;
    while hi * (hi + 1) / 2 > index {
        hi -= 1;
    }
    while (hi + 1) * (hi + 2) / 2 <= index {
        hi += 1;
    }
    (index - hi * (hi + 1) / 2, hi)
}

/// Counters and empirical moments gathered by exploration.
///
/// Pair tables are packed upper triangles over state-action indices
/// (see [`pair_index`]); the ordered collection `t1 < t2` is symmetrized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationStats {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub n_x: Vec<u64>,
    pub p_plus_hat: Vec<f64>,
    pub n_pair: Vec<u64>,
    pub mu_hat: Vec<f64>,
    /// `t_counts[(s * A + a) * S + s']`, recorded for steps `t <= H - 1`.
    pub t_counts: Vec<u64>,
    pub nu_counts: Vec<u64>,
    pub k: u64,
}

impl ExplorationStats {
    pub fn new(states: usize, actions: usize, horizon: usize) -> Self {
        let sa = states * actions;
        ExplorationStats {
            states,
            actions,
            horizon,
            n_x: vec![0; sa],
            p_plus_hat: vec![0.0; sa],
            n_pair: vec![0; pair_count(sa)],
            mu_hat: vec![0.0; pair_count(sa)],
            t_counts: vec![0; sa * states],
            nu_counts: vec![0; states],
            k: 0,
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.states * self.actions
    }

    #[inline]
    pub fn pair_n(&self, xi: usize, xj: usize) -> u64 {
        self.n_pair[pair_index(xi, xj)]
    }

    #[inline]
    pub fn pair_mu(&self, xi: usize, xj: usize) -> f64 {
        self.mu_hat[pair_index(xi, xj)]
    }

    /// Number of observed transitions out of `(s, a)`.
    pub fn transition_total(&self, x: usize) -> u64 {
        self.t_counts[x * self.states..(x + 1) * self.states].iter().sum()
    }

    /// Folds one episode into the statistics. `collected` is the pair of
    /// state-action indices whose rewards multiplied to `product`.
    pub fn record_episode(&mut self, steps: &[Step], collected: Option<((usize, usize), u8)>) {
        let a_count = self.actions;
        if let Some(first) = steps.first() {
            self.nu_counts[first.s] += 1;
        }
        for (t, st) in steps.iter().enumerate() {
            let x = st.s * a_count + st.a;
            self.n_x[x] += 1;
            let n = self.n_x[x] as f64;
            self.p_plus_hat[x] += (st.r as f64 - self.p_plus_hat[x]) / n;
            if let Some(next) = steps.get(t + 1) {
                self.t_counts[x * self.states + next.s] += 1;
            }
        }
        if let Some(((xi, xj), product)) = collected {
            let idx = pair_index(xi, xj);
            self.n_pair[idx] += 1;
            let n = self.n_pair[idx] as f64;
            self.mu_hat[idx] += (product as f64 - self.mu_hat[idx]) / n;
        }
        self.k += 1;
    }

    pub fn check_shape(&self) -> Result<()> {
        let sa = self.num_pairs();
        let ok = self.n_x.len() == sa
            && self.p_plus_hat.len() == sa
            && self.n_pair.len() == pair_count(sa)
            && self.mu_hat.len() == pair_count(sa)
            && self.t_counts.len() == sa * self.states
            && self.nu_counts.len() == self.states;
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch("exploration statistics tables do not match S, A".into()))
        }
    }
}

/// Normalized estimates handed to recovery.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalEstimates {
    pub p_plus: Vec<f64>,
    /// Flat `S * A * S` transition estimate.
    pub transitions: Vec<f64>,
    pub initial: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub n_x: Vec<u64>,
    pub n_pair: Vec<u64>,
}

/// `T_hat = counts / total` with a uniform row when `(s, a)` has no observed
/// transition; `nu_hat = nu_counts / k` (uniform when `k = 0`).
pub fn empirical_estimates(stats: &ExplorationStats) -> EmpiricalEstimates {
    let ns = stats.states;
    let mut transitions = Vec::with_capacity(stats.t_counts.len());
    for x in 0..stats.num_pairs() {
        let row = &stats.t_counts[x * ns..(x + 1) * ns];
        let total: u64 = row.iter().sum();
        if total == 0 {
            transitions.extend(std::iter::repeat_n(1.0 / ns as f64, ns));
        } else {
            transitions.extend(row.iter().map(|&c| c as f64 / total as f64));
        }
    }
    let total: u64 = stats.nu_counts.iter().sum();
    let initial = if total == 0 {
        vec![1.0 / ns as f64; ns]
    } else {
        stats.nu_counts.iter().map(|&c| c as f64 / total as f64).collect()
    };
    EmpiricalEstimates {
        p_plus: stats.p_plus_hat.clone(),
        transitions,
        initial,
        mu_hat: stats.mu_hat.clone(),
        n_x: stats.n_x.clone(),
        n_pair: stats.n_pair.clone(),
    }
}
