//! Pure exploration of second-order reward correlations.
//!
//! The learner runs greedily on an optimistic error bound `Q~` over the
//! augmented MDP whose states `(i, v, s)` remember up to two selected
//! state-actions. Bonuses only reward completing new pairs and reducing
//! transition uncertainty, so the collected data is independent of which
//! rewards are high.

mod augmented;
mod params;
mod stats;

pub use augmented::{augmented_transition, AugmentedState, StateAction};
pub use params::{default_k_max, ConfidenceParams, ParamSpec, DEFAULT_C_CONF};
pub use stats::{
    empirical_estimates, pair_count, pair_index, pair_members, EmpiricalEstimates,
    ExplorationStats,
};

use serde::{Deserialize, Serialize};

use crate::env::{EnvInstance, Trajectory};
use crate::error::Result;
use crate::exact::Step;

#[inline]
fn capped_bonus(iota: f64, n: u64) -> f64 {
    (iota / (n.max(1) as f64)).sqrt().min(1.0)
}

/// Reward-correlation bonus for completing the pair `v_next`; nonzero only
/// when selecting (`z = 1`) at stage 2.
pub fn bonus_r(
    stage: u8,
    v_next: &[Option<StateAction>; 2],
    z: u8,
    stats: &ExplorationStats,
    params: &ConfidenceParams,
) -> f64 {
    if stage != 2 || z != 1 {
        return 0.0;
    }
    match v_next {
        [Some((s1, a1)), Some((s2, a2))] => {
            let a = stats.actions;
            capped_bonus(params.iota2, stats.pair_n(s1 * a + a1, s2 * a + a2))
        }
        _ => 0.0,
    }
}

/// Transition bonus `min(1, sqrt(iota_T / max(1, n(s, a))))`.
pub fn bonus_t(s: usize, a: usize, stats: &ExplorationStats, params: &ConfidenceParams) -> f64 {
    capped_bonus(params.iota_t, stats.n_x[s * stats.actions + a])
}

/// Optimistic values over the augmented MDP for all `t` in `0..H`
/// (0-based, so `t = 0` is the first step of an episode).
///
/// Stage-3 values do not depend on the stored pair (no further bonus is
/// reachable), so they are kept per `(t, s)`; stage-2 values are kept per
/// `(t, v1, s)`. This is exact with respect to the full table over
/// `(i, v, s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    states: usize,
    actions: usize,
    horizon: usize,
    q1: Vec<f64>,
    q2: Vec<f64>,
    q3: Vec<f64>,
    // Value rows include t = H (all zero).
    v1: Vec<f64>,
    v2: Vec<f64>,
    v3: Vec<f64>,
}

impl QTable {
    pub fn new(states: usize, actions: usize, horizon: usize) -> Self {
        let sa = states * actions;
        QTable {
            states,
            actions,
            horizon,
            q1: vec![1.0; horizon * sa * 2],
            q2: vec![1.0; horizon * sa * sa * 2],
            q3: vec![1.0; horizon * sa * 2],
            v1: vec![0.0; (horizon + 1) * states],
            v2: vec![0.0; (horizon + 1) * sa * states],
            v3: vec![0.0; (horizon + 1) * states],
        }
    }

    #[inline]
    fn q_index(&self, t: usize, s: usize, a: usize, z: u8) -> usize {
        ((t * self.states + s) * self.actions + a) * 2 + z as usize
    }

    #[inline]
    fn q2_index(&self, t: usize, x1: usize, s: usize, a: usize, z: u8) -> usize {
        let sa = self.states * self.actions;
        (((t * sa + x1) * self.states + s) * self.actions + a) * 2 + z as usize
    }

    fn flat(&self, sa: (usize, usize)) -> usize {
        sa.0 * self.actions + sa.1
    }

    /// `Q~_t(aug, (a, z))`.
    pub fn q(&self, t: usize, aug: &AugmentedState, a: usize, z: u8) -> f64 {
        if t >= self.horizon {
            return 0.0;
        }
        match aug.stage {
            1 => self.q1[self.q_index(t, aug.s, a, z)],
            2 => {
                let x1 = self.flat(aug.v[0].expect("stage 2 has a first slot"));
                self.q2[self.q2_index(t, x1, aug.s, a, z)]
            }
            _ => self.q3[self.q_index(t, aug.s, a, z)],
        }
    }

    /// `V~_t(aug)`; `t = H` gives 0.
    pub fn v(&self, t: usize, aug: &AugmentedState) -> f64 {
        match aug.stage {
            1 => self.v1[t * self.states + aug.s],
            2 => {
                let x1 = self.flat(aug.v[0].expect("stage 2 has a first slot"));
                self.v2[(t * self.states * self.actions + x1) * self.states + aug.s]
            }
            _ => self.v3[t * self.states + aug.s],
        }
    }

    /// `V~_1(1, (null, null), s)` for every `s`.
    pub fn root_values(&self) -> &[f64] {
        &self.v1[..self.states]
    }

    /// Greedy `(a, z)`: lowest action first, `z = 1` before `z = 0` on ties.
    pub fn greedy(&self, t: usize, aug: &AugmentedState) -> (usize, u8) {
        let mut best = (0, 1);
        let mut best_q = f64::NEG_INFINITY;
        for a in 0..self.actions {
            for z in [1u8, 0u8] {
                let q = self.q(t, aug, a, z);
                if q > best_q {
                    best_q = q;
                    best = (a, z);
                }
            }
        }
        best
    }

    /// Backward induction with `Q~_{H+1} = 0`:
    /// `Q~_t = min(1, b_r + E_{s' ~ T_hat}[V~_{t+1}(i', v', s')] + b_T)`.
    pub fn recompute(&mut self, stats: &ExplorationStats, params: &ConfidenceParams) {
        let (ns, na, h) = (self.states, self.actions, self.horizon);
        let sa = ns * na;
        let est = empirical_estimates(stats);
        let bt: Vec<f64> = (0..sa).map(|x| capped_bonus(params.iota_t, stats.n_x[x])).collect();
        let mut br = vec![0.0; sa * sa];
        for x1 in 0..sa {
            for x in 0..sa {
                br[x1 * sa + x] = capped_bonus(params.iota2, stats.pair_n(x1, x));
            }
        }
        let expect = |row: &[f64], values: &[f64]| -> f64 {
            row.iter().zip(values).map(|(p, v)| p * v).sum()
        };
        for t in (0..h).rev() {
            let next = t + 1;
            for s in 0..ns {
                for a in 0..na {
                    let x = s * na + a;
                    let row = &est.transitions[x * ns..(x + 1) * ns];
                    let e1 = expect(row, &self.v1[next * ns..(next + 1) * ns]);
                    let e3 = expect(row, &self.v3[next * ns..(next + 1) * ns]);
                    let v2_row = |x1: usize| (next * sa + x1) * ns;
                    let e2_sel = expect(row, &self.v2[v2_row(x)..v2_row(x) + ns]);
                    let q_skip3 = (e3 + bt[x]).min(1.0);
                    let i = self.q_index(t, s, a, 0);
                    self.q3[i] = q_skip3;
                    self.q3[i + 1] = q_skip3;
                    self.q1[i] = (e1 + bt[x]).min(1.0);
                    self.q1[i + 1] = (e2_sel + bt[x]).min(1.0);
                    for x1 in 0..sa {
                        let e2 = expect(row, &self.v2[v2_row(x1)..v2_row(x1) + ns]);
                        let j = self.q2_index(t, x1, s, a, 0);
                        self.q2[j] = (e2 + bt[x]).min(1.0);
                        self.q2[j + 1] = (br[x1 * sa + x] + e3 + bt[x]).min(1.0);
                    }
                }
                let max_over = |q: &[f64], base: usize| -> f64 {
                    q[base..base + 2 * na].iter().copied().fold(f64::NEG_INFINITY, f64::max)
                };
                let base = self.q_index(t, s, 0, 0);
                self.v1[t * ns + s] = max_over(&self.q1, base);
                self.v3[t * ns + s] = max_over(&self.q3, base);
                for x1 in 0..sa {
                    let base = self.q2_index(t, x1, s, 0, 0);
                    self.v2[(t * sa + x1) * ns + s] = max_over(&self.q2, base);
                }
            }
        }
    }
}

pub fn compute_qtilde(stats: &ExplorationStats, params: &ConfidenceParams) -> QTable {
    let mut q = QTable::new(stats.states, stats.actions, stats.horizon);
    q.recompute(stats, params);
    q
}

/// Root error bound `sqrt(iota_nu / k) + sum_s nu_hat(s) V~_1(1, null, s)`;
/// 1 before any episode has been played.
pub fn vtilde0(stats: &ExplorationStats, params: &ConfidenceParams, root_values: &[f64]) -> f64 {
    if stats.k == 0 {
        return 1.0;
    }
    let est = empirical_estimates(stats);
    let k = stats.k as f64;
    (params.iota_nu / k).sqrt() + est.initial.iter().zip(root_values).map(|(p, v)| p * v).sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// `V~_0 <= eps_pe`.
    Converged,
    /// Episode cap reached first.
    KMaxReached,
}

impl TerminationReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminationReason::Converged => "converged",
            TerminationReason::KMaxReached => "k_max_reached",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreOptions {
    /// Recompute `Q~` every this many episodes (1 = every episode).
    pub recompute_every: u64,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions { recompute_every: 1 }
    }
}

/// Everything one exploration run produces; serialized as the stats dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationRun {
    pub stats: ExplorationStats,
    pub params: ConfidenceParams,
    pub options: ExploreOptions,
    pub termination: TerminationReason,
    pub vtilde0: f64,
    /// `(k, V~_0)` at k = 1, 2, 4, ... and at termination.
    pub vtilde0_trace: Vec<(u64, f64)>,
}

impl ExplorationRun {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let run: ExplorationRun = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        run.stats.check_shape()?;
        Ok(run)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// What the learner decided during one exploration episode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub trajectory: Trajectory,
    /// `z_t` per step.
    pub selections: Vec<u8>,
    /// Collected pair (flat state-action indices in selection order) and
    /// the product of their two rewards.
    pub collected: Option<((usize, usize), u8)>,
}

pub fn explore(env: &mut EnvInstance, params: &ConfidenceParams) -> Result<ExplorationRun> {
    explore_with(env, params, ExploreOptions::default(), |_| {})
}

/// Runs pure exploration until `V~_0 <= eps_pe` or `k = K_max`, calling
/// `observer` after every episode.
pub fn explore_with(
    env: &mut EnvInstance,
    params: &ConfidenceParams,
    options: ExploreOptions,
    mut observer: impl FnMut(&EpisodeRecord),
) -> Result<ExplorationRun> {
    params.validate()?;
    let (ns, na, h) = {
        let m = env.model();
        (m.states, m.actions, m.horizon)
    };
    let mut stats = ExplorationStats::new(ns, na, h);
    let mut table = QTable::new(ns, na, h);
    let mut v0 = 1.0;
    let mut trace = Vec::new();
    let every = options.recompute_every.max(1);
    let termination = loop {
        if v0 <= params.eps_pe {
            break TerminationReason::Converged;
        }
        if stats.k >= params.k_max {
            break TerminationReason::KMaxReached;
        }
        let episode = env.episode_count();
        let mut s = env.reset();
        let mut aug = AugmentedState::initial(s);
        let mut steps = Vec::with_capacity(h);
        let mut selections = Vec::with_capacity(h);
        let mut product = 1u8;
        for t in 0..h {
            let (a, z) = table.greedy(t, &aug);
            let out = env.step(a)?;
            if aug.stage <= 2 && z == 1 {
                product *= out.reward;
            }
            steps.push(Step { s, a, r: out.reward });
            selections.push(z);
            aug = augmented_transition(aug, a, z, out.next_state);
            s = out.next_state;
        }
        let collected = match aug.v {
            [Some((s1, a1)), Some((s2, a2))] => Some(((s1 * na + a1, s2 * na + a2), product)),
            _ => None,
        };
        stats.record_episode(&steps, collected);
        if stats.k.is_multiple_of(every) {
            table.recompute(&stats, params);
            v0 = vtilde0(&stats, params, table.root_values());
        }
        if stats.k.is_power_of_two() {
            trace.push((stats.k, v0));
        }
        let latent_context = env.revealed_context().expect("episode in progress");
        observer(&EpisodeRecord {
            episode,
            trajectory: Trajectory { steps, latent_context },
            selections,
            collected,
        });
    };
    if trace.last().map(|&(k, _)| k) != Some(stats.k) {
        trace.push((stats.k, v0));
    }
    Ok(ExplorationRun {
        stats,
        params: params.clone(),
        options,
        termination,
        vtilde0: v0,
        vtilde0_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::uniform;
    use crate::exact_moments;

    fn params(k_max: u64) -> ConfidenceParams {
        ParamSpec { k_max: Some(k_max), ..ParamSpec::new(0.1, 0.01, 0.1) }.resolve(2, 2, 3).unwrap()
    }

    #[test]
    fn reward_bonus_examples() {
        let p = params(1000);
        let mut stats = ExplorationStats::new(1, 2, 2);
        let pair = [Some((0, 0)), Some((0, 1))];
        assert_eq!(bonus_r(1, &pair, 1, &stats, &p), 0.0);
        assert_eq!(bonus_r(2, &pair, 0, &stats, &p), 0.0);
        assert_eq!(bonus_r(2, &pair, 1, &stats, &p), 1.0);
        stats.n_pair[pair_index(0, 1)] = (10_000.0 * p.iota2).round() as u64;
        let b = bonus_r(2, &pair, 1, &stats, &p);
        assert!((b - 0.01).abs() < 1e-6, "{b}");
    }

    #[test]
    fn transition_bonus_examples() {
        let mut p = params(1000);
        p.iota_t = 4.0;
        let mut stats = ExplorationStats::new(1, 1, 1);
        assert_eq!(bonus_t(0, 0, &stats, &p), 1.0);
        stats.n_x[0] = 4;
        assert_eq!(bonus_t(0, 0, &stats, &p), 1.0);
        stats.n_x[0] = 400;
        assert!((bonus_t(0, 0, &stats, &p) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_counts_saturate_every_q() {
        let stats = ExplorationStats::new(2, 2, 3);
        let q = compute_qtilde(&stats, &params(1000));
        assert!(q.q1.iter().chain(&q.q2).chain(&q.q3).all(|&v| v == 1.0));
    }

    #[test]
    fn last_step_stage_three_is_transition_bonus() {
        let mut stats = ExplorationStats::new(2, 2, 3);
        stats.n_x = vec![100_000, 50_000, 200_000, 10_000];
        let p = params(1000);
        let q = compute_qtilde(&stats, &p);
        let aug = AugmentedState { stage: 3, v: [Some((0, 0)), Some((1, 1))], s: 1 };
        for a in 0..2 {
            for z in [0, 1] {
                assert_eq!(q.q(2, &aug, a, z), bonus_t(1, a, &stats, &p).min(1.0));
            }
        }
    }

    #[test]
    fn large_counts_shrink_values_toward_zero() {
        let mut stats = ExplorationStats::new(1, 1, 3);
        let big = 100_000_000;
        stats.n_x = vec![big];
        stats.n_pair = vec![big];
        stats.t_counts = vec![big];
        let p = params(1000);
        let q = compute_qtilde(&stats, &p);
        let max_bonus = capped_bonus(p.iota_t, big).max(capped_bonus(p.iota2, big));
        for t in 0..3 {
            for aug in [
                AugmentedState::initial(0),
                AugmentedState { stage: 2, v: [Some((0, 0)), None], s: 0 },
                AugmentedState { stage: 3, v: [Some((0, 0)), Some((0, 0))], s: 0 },
            ] {
                // Each remaining step contributes at most one bonus of each kind.
                let remaining = (3 - t) as f64;
                assert!(q.v(t, &aug) <= 2.0 * remaining * max_bonus + 1e-15);
            }
        }
    }

    #[test]
    fn vtilde0_examples() {
        let p = params(1000);
        let mut stats = ExplorationStats::new(2, 1, 1);
        assert_eq!(vtilde0(&stats, &p, &[0.5, 0.5]), 1.0);
        stats.k = p.iota_nu.round() as u64;
        stats.nu_counts = vec![stats.k, 0];
        let mut q = p.clone();
        q.iota_nu = stats.k as f64;
        assert!((vtilde0(&stats, &q, &[0.0, 0.0]) - 1.0).abs() < 1e-15);
        stats.k = 1 << 50;
        assert!(vtilde0(&stats, &q, &[0.0, 0.0]) < 1e-5);
    }

    #[test]
    fn unit_threshold_stops_immediately() {
        let m = uniform(2, 2, 3, vec![0.5; 4], vec![0.5; 4]);
        let mut p = params(1000);
        p.eps_pe = 1.0;
        let run = explore(&mut EnvInstance::new(m, 1), &p).unwrap();
        assert_eq!(run.termination, TerminationReason::Converged);
        assert_eq!(run.stats.k, 0);
    }

    #[test]
    fn kmax_is_reported_not_raised() {
        let m = uniform(2, 2, 3, vec![0.5; 4], vec![0.5; 4]);
        let p = params(25);
        let run = explore(&mut EnvInstance::new(m, 1), &p).unwrap();
        assert_eq!(run.termination, TerminationReason::KMaxReached);
        assert_eq!(run.stats.k, 25);
        assert_eq!(run.vtilde0_trace.last().unwrap().0, 25);
    }

    #[test]
    fn single_cell_collects_self_pair() {
        let m = uniform(1, 1, 2, vec![0.8], vec![0.2]);
        let p = ParamSpec { k_max: Some(200_000), ..ParamSpec::new(0.2, 0.01, 0.1) }.resolve(1, 1, 2).unwrap();
        let run = explore(&mut EnvInstance::new(m.clone(), 3), &p).unwrap();
        assert_eq!(run.termination, TerminationReason::Converged);
        let n = run.stats.n_pair[0];
        assert!(n > 0);
        let mu = exact_moments(&m).mu.get(0, 0);
        assert!((run.stats.mu_hat[0] - mu).abs() <= 3.0 * (p.iota2 / n as f64).sqrt());
    }

    #[test]
    fn unreachable_state_action_is_never_sampled() {
        let mut m = uniform(2, 1, 3, vec![0.5; 2], vec![0.5; 2]);
        m.initial = vec![1.0, 0.0];
        m.transitions = vec![1.0, 0.0, 0.0, 1.0];
        let run = explore(&mut EnvInstance::new(m, 2), &params(2000)).unwrap();
        assert_eq!(run.stats.n_x[1], 0);
        assert_eq!(run.stats.pair_n(1, 1), 0);
        assert_eq!(run.stats.pair_n(0, 1), 0);
        assert!(run.stats.pair_n(0, 0) > 0);
    }
}
