//! Two-reward-mixing MDP models, validation and closed-form moment oracles.
//!
//! State-action pairs are flattened as `x = s * A + a` everywhere in the crate.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-9;

/// A 2RM-MDP: shared dynamics, two Bernoulli reward tables and the weight of
/// context 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelFile", try_from = "ModelFile")]
pub struct RmMdpModel {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    /// Flat `S * A * S` table; `transitions[(s * A + a) * S + s']`.
    pub transitions: Vec<f64>,
    pub initial: Vec<f64>,
    pub weight: f64,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
}

/// On-disk layout of a model file. `T` is nested `[s][a][s']`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(rename = "A")]
    pub a: usize,
    #[serde(rename = "H")]
    pub h: usize,
    pub w: f64,
    pub nu: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<Vec<Vec<f64>>>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
}

impl From<RmMdpModel> for ModelFile {
    fn from(m: RmMdpModel) -> Self {
        let t = (0..m.states)
            .map(|s| (0..m.actions).map(|a| m.next_state_probs(s, a).to_vec()).collect())
            .collect();
        ModelFile {
            s: m.states,
            a: m.actions,
            h: m.horizon,
            w: m.weight,
            nu: m.initial,
            t,
            p1: m.p1,
            p2: m.p2,
        }
    }
}

impl TryFrom<ModelFile> for RmMdpModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.t.len() != f.s || f.t.iter().any(|row| row.len() != f.a || row.iter().any(|p| p.len() != f.s)) {
            return Err(Error::DimensionMismatch(format!(
                "T must be nested {}x{}x{}",
                f.s, f.a, f.s
            )));
        }
        let model = RmMdpModel {
            states: f.s,
            actions: f.a,
            horizon: f.h,
            transitions: f.t.into_iter().flatten().flatten().collect(),
            initial: f.nu,
            weight: f.w,
            p1: f.p1,
            p2: f.p2,
        };
        model.validate().into_result()?;
        Ok(model)
    }
}

/// A single violated model invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    EmptyDimension { name: &'static str },
    TableLength { name: &'static str, expected: usize, found: usize },
    TransitionRowSum { s: usize, a: usize, sum: f64 },
    TransitionEntry { s: usize, a: usize, next: usize, value: f64 },
    InitialSum { sum: f64 },
    InitialEntry { s: usize, value: f64 },
    RewardEntry { context: u8, x: usize, value: f64 },
    Weight { value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDimension { name } => write!(f, "{name} must be at least 1"),
            Violation::TableLength { name, expected, found } => {
                write!(f, "{name} has length {found}, expected {expected}")
            }
            Violation::TransitionRowSum { s, a, sum } => {
                write!(f, "T[{s}][{a}] sums to {sum}")
            }
            Violation::TransitionEntry { s, a, next, value } => {
                write!(f, "T[{s}][{a}][{next}] = {value} outside [0,1]")
            }
            Violation::InitialSum { sum } => write!(f, "nu sums to {sum}"),
            Violation::InitialEntry { s, value } => write!(f, "nu[{s}] = {value} outside [0,1]"),
            Violation::RewardEntry { context, x, value } => {
                write!(f, "p{context}[{x}] = {value} outside [0,1]")
            }
            Violation::Weight { value } => write!(f, "w = {value} outside [0,1]"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidModel(self.violations))
        }
    }
}

fn in_unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

impl RmMdpModel {
    pub fn num_pairs(&self) -> usize {
        self.states * self.actions
    }

    #[inline]
    pub fn index(&self, s: usize, a: usize) -> usize {
        s * self.actions + a
    }

    /// `T(. | s, a)` as a slice of length `S`.
    #[inline]
    pub fn next_state_probs(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.actions + a) * self.states;
        &self.transitions[start..start + self.states]
    }

    /// Bernoulli mean of the reward at `x` under context `m` (1 or 2).
    #[inline]
    pub fn reward_mean(&self, context: u8, x: usize) -> f64 {
        if context == 1 {
            self.p1[x]
        } else {
            self.p2[x]
        }
    }

    /// Probability of reward `r` at `x` under context `m`.
    #[inline]
    pub fn reward_prob(&self, context: u8, x: usize, r: u8) -> f64 {
        let p = self.reward_mean(context, x);
        if r == 1 {
            p
        } else {
            1.0 - p
        }
    }

    /// Same model with contexts relabeled: `p1 <-> p2`, `w <-> 1 - w`.
    pub fn swap_contexts(&self) -> Self {
        let mut m = self.clone();
        std::mem::swap(&mut m.p1, &mut m.p2);
        m.weight = 1.0 - self.weight;
        m
    }

    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        for (name, n) in [("S", self.states), ("A", self.actions), ("H", self.horizon)] {
            if n == 0 {
                v.push(Violation::EmptyDimension { name });
            }
        }
        let sa = self.states * self.actions;
        let lengths = [
            ("T", self.transitions.len(), sa * self.states),
            ("nu", self.initial.len(), self.states),
            ("p1", self.p1.len(), sa),
            ("p2", self.p2.len(), sa),
        ];
        let mut shapes_ok = true;
        for (name, found, expected) in lengths {
            if found != expected {
                shapes_ok = false;
                v.push(Violation::TableLength { name, expected, found });
            }
        }
        if !in_unit(self.weight) {
            v.push(Violation::Weight { value: self.weight });
        }
        if !shapes_ok {
            return ValidationReport { violations: v };
        }
        for s in 0..self.states {
            for a in 0..self.actions {
                let row = self.next_state_probs(s, a);
                for (next, &p) in row.iter().enumerate() {
                    if !in_unit(p) {
                        v.push(Violation::TransitionEntry { s, a, next, value: p });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > SUM_TOL {
                    v.push(Violation::TransitionRowSum { s, a, sum });
                }
            }
        }
        for (s, &p) in self.initial.iter().enumerate() {
            if !in_unit(p) {
                v.push(Violation::InitialEntry { s, value: p });
            }
        }
        let sum: f64 = self.initial.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            v.push(Violation::InitialSum { sum });
        }
        for (context, table) in [(1u8, &self.p1), (2u8, &self.p2)] {
            for (x, &p) in table.iter().enumerate() {
                if !in_unit(p) {
                    v.push(Violation::RewardEntry { context, x, value: p });
                }
            }
        }
        ValidationReport { violations: v }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    /// Canonical unordered form `{(w, p1), (1 - w, p2)}` used to compare
    /// models that may differ by a context relabeling. Returns the pair of
    /// (weight, table) with the lexicographically smaller one first.
    pub fn canonical_contexts(&self) -> [(f64, Vec<f64>); 2] {
        let a = (self.weight, self.p1.clone());
        let b = (1.0 - self.weight, self.p2.clone());
        let key = |c: &(f64, Vec<f64>)| {
            std::iter::once(c.0).chain(c.1.iter().copied()).collect::<Vec<_>>()
        };
        if key(&a).partial_cmp(&key(&b)) == Some(std::cmp::Ordering::Greater) {
            [b, a]
        } else {
            [a, b]
        }
    }
}

pub fn validate_model(model: &RmMdpModel) -> ValidationReport {
    model.validate()
}

/// Averaged reward, signed half-difference and minimum separation.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedRewardStats {
    pub p_plus: Vec<f64>,
    pub p_minus: Vec<f64>,
    pub delta_x: Vec<f64>,
    pub delta: f64,
}

pub fn derive_reward_stats(model: &RmMdpModel) -> DerivedRewardStats {
    let p_plus: Vec<f64> = model.p1.iter().zip(&model.p2).map(|(a, b)| (a + b) / 2.0).collect();
    let p_minus: Vec<f64> = model.p1.iter().zip(&model.p2).map(|(a, b)| (a - b) / 2.0).collect();
    let delta_x: Vec<f64> = p_minus.iter().map(|d| d.abs()).collect();
    let delta = delta_x
        .iter()
        .copied()
        .filter(|&d| d > 0.0)
        .fold(1.0_f64, f64::min);
    DerivedRewardStats { p_plus, p_minus, delta_x, delta }
}

/// Dense square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Matrix { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }
}

/// Exact second-order moments of the reward mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTables {
    /// `mu(xi, xj) = w p1(xi) p1(xj) + (1 - w) p2(xi) p2(xj)`.
    pub mu: Matrix,
    /// `u(xi, xj) = p_-(xi) p_-(xj)`.
    pub u: Matrix,
    /// `mu - p_+ p_+^T`; equals `u` when `w = 1/2`.
    pub b: Matrix,
}

pub fn exact_moments(model: &RmMdpModel) -> MomentTables {
    let n = model.num_pairs();
    let w = model.weight;
    let stats = derive_reward_stats(model);
    let mu = Matrix::from_fn(n, |i, j| {
        w * model.p1[i] * model.p1[j] + (1.0 - w) * model.p2[i] * model.p2[j]
    });
    let u = Matrix::from_fn(n, |i, j| stats.p_minus[i] * stats.p_minus[j]);
    let b = Matrix::from_fn(n, |i, j| mu.get(i, j) - stats.p_plus[i] * stats.p_plus[j]);
    MomentTables { mu, u, b }
}

/// Rank-one factor of `B = mu - p_+ p_+^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankOneFactor {
    /// Signed factor with `q q^T = B`; first nonzero entry is nonnegative.
    pub q: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// `+1` / `-1` per entry; zero entries get `+1`.
    pub sign: Vec<i8>,
    pub residual: f64,
}

pub const RANK_ONE_TOL: f64 = 1e-8;
const NONZERO_TOL: f64 = 1e-9;

/// Recovers `p_-` up to a global sign from exact moments by factoring
/// `B = mu - p_+ p_+^T` as `q q^T`.
///
/// Uses the largest-diagonal pivot column scaled by `1/sqrt(B_kk)`, which
/// is exact whenever `B` is truly rank one.
pub fn oracle_recover_from_exact_moments(
    moments: &MomentTables,
    p_plus: &[f64],
) -> Result<RankOneFactor> {
    let n = moments.mu.n;
    if p_plus.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "p_plus has length {}, moments are {n}x{n}",
            p_plus.len()
        )));
    }
    let b = Matrix::from_fn(n, |i, j| moments.mu.get(i, j) - p_plus[i] * p_plus[j]);
    let mut pivot = None;
    for k in 0..n {
        let d = b.get(k, k);
        if d > 0.0 && pivot.is_none_or(|(_, best)| d > best) {
            pivot = Some((k, d));
        }
    }
    let mut q = vec![0.0; n];
    if let Some((k, d)) = pivot {
        let scale = d.sqrt();
        for (i, qi) in q.iter_mut().enumerate() {
            *qi = b.get(i, k) / scale;
        }
    }
    if let Some(first) = q.iter().position(|v| v.abs() > NONZERO_TOL) {
        if q[first] < 0.0 {
            q.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let mut residual: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            residual = residual.max((q[i] * q[j] - b.get(i, j)).abs());
        }
    }
    if residual > RANK_ONE_TOL {
        return Err(Error::RankDeficient { residual, tolerance: RANK_ONE_TOL });
    }
    let magnitude = q.iter().map(|v| v.abs()).collect();
    let sign = q.iter().map(|&v| if v < -NONZERO_TOL { -1 } else { 1 }).collect();
    Ok(RankOneFactor { q, magnitude, sign, residual })
}
