//! Reward-model recovery from second-order correlations.
//!
//! Magnitudes `|p_-(x)|` come from a log-space LP over pair bounds, signs
//! from a 2-SAT instance over the pairs whose correlation sign is known.

mod bounds;
pub mod simplex;
pub mod twosat;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use bounds::{compute_pair_bounds, PairBound, PairBounds};

use crate::error::{Error, Result};
use crate::explore::{empirical_estimates, pair_count, pair_index, ConfidenceParams, ExplorationStats};
use crate::model::{derive_reward_stats, exact_moments, RmMdpModel};
use simplex::{Constraint, LpOutcome, Relation};
use twosat::TwoSat;

/// Solver tolerance on recovered magnitudes.
pub const LP_TOL: f64 = 1e-7;

/// One row of the magnitude LP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LpConstraint {
    /// `l(x_i) + l(x_j) <= ln max(|c_u|, |c_l|)`
    PairUpper { xi: usize, xj: usize },
    /// `l(x_i) + l(x_j) >= ln min(|c_u|, |c_l|)`, sign-known pairs only.
    PairLower { xi: usize, xj: usize },
    /// `l(x) <= ln(min(p_+, 1 - p_+) + sqrt(iota1 / n(x)) + eps0^2)`
    Cap { x: usize },
    /// `l(x) >= 10 ln eps0`
    Floor { x: usize },
}

impl fmt::Display for LpConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpConstraint::PairUpper { xi, xj } => write!(f, "upper({xi},{xj})"),
            LpConstraint::PairLower { xi, xj } => write!(f, "lower({xi},{xj})"),
            LpConstraint::Cap { x } => write!(f, "cap({x})"),
            LpConstraint::Floor { x } => write!(f, "floor({x})"),
        }
    }
}

/// Log-space constraint `sum coeff * l <= / >= rhs`.
#[derive(Clone, Debug)]
struct LogRow {
    label: LpConstraint,
    terms: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

fn floor_value(eps0: f64) -> f64 {
    10.0 * eps0.ln()
}

fn safe_ln(v: f64, eps0: f64) -> f64 {
    if v <= eps0.powi(10) {
        floor_value(eps0)
    } else {
        v.ln()
    }
}

fn log_rows(bounds: &PairBounds, params: &ConfidenceParams) -> Vec<LogRow> {
    let eps0 = params.eps0;
    let mut rows = Vec::new();
    let terms = |xi: usize, xj: usize| if xi == xj { vec![(xi, 2.0)] } else { vec![(xi, 1.0), (xj, 1.0)] };
    for pb in &bounds.pairs {
        let (hi, lo) = (pb.c_u.abs().max(pb.c_l.abs()), pb.c_u.abs().min(pb.c_l.abs()));
        rows.push(LogRow {
            label: LpConstraint::PairUpper { xi: pb.xi, xj: pb.xj },
            terms: terms(pb.xi, pb.xj),
            relation: Relation::Le,
            rhs: safe_ln(hi, eps0),
        });
        if pb.sign.is_some() {
            rows.push(LogRow {
                label: LpConstraint::PairLower { xi: pb.xi, xj: pb.xj },
                terms: terms(pb.xi, pb.xj),
                relation: Relation::Ge,
                rhs: safe_ln(lo, eps0),
            });
        }
    }
    for x in 0..bounds.num_pairs() {
        let p = bounds.p_plus[x];
        let arg = p.min(1.0 - p) + (params.iota1 / bounds.n_x[x].max(1) as f64).sqrt() + eps0 * eps0;
        rows.push(LogRow { label: LpConstraint::Cap { x }, terms: vec![(x, 1.0)], relation: Relation::Le, rhs: safe_ln(arg, eps0) });
    }
    rows
}

/// Rows in the shifted variables `y = l - 10 ln eps0 >= 0`.
fn shifted(rows: &[LogRow], n: usize, floor: f64) -> Vec<Constraint> {
    rows.iter()
        .map(|r| {
            let mut coeffs = vec![0.0; n];
            let mut weight = 0.0;
            for &(x, c) in &r.terms {
                coeffs[x] += c;
                weight += c;
            }
            Constraint { coeffs, relation: r.relation, rhs: r.rhs - weight * floor }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeSolution {
    /// Log-magnitudes; entries at `floor` carry no usable correlation.
    pub l_hat: Vec<f64>,
    pub objective: f64,
    pub feasible: bool,
    pub floor: f64,
    /// Irreducible infeasible subset when `!feasible`.
    pub witness: Vec<LpConstraint>,
    pub pivot_hash: u64,
}

/// Minimizes `sum l(x)` over the pair and cap constraints.
pub fn solve_magnitude_lp(bounds: &PairBounds, params: &ConfidenceParams) -> MagnitudeSolution {
    let n = bounds.num_pairs();
    let floor = floor_value(params.eps0);
    let rows = log_rows(bounds, params);
    let constraints = shifted(&rows, n, floor);
    match simplex::solve(&vec![1.0; n], &constraints) {
        LpOutcome::Optimal { x, pivot_hash, .. } => {
            let l_hat: Vec<f64> = x.iter().map(|y| y.max(0.0) + floor).collect();
            MagnitudeSolution { objective: l_hat.iter().sum(), l_hat, feasible: true, floor, witness: Vec::new(), pivot_hash }
        }
        LpOutcome::Infeasible | LpOutcome::Unbounded => {
            let iis = simplex::irreducible_infeasible_subset(n, &constraints);
            let mut witness: Vec<LpConstraint> = iis.iter().map(|&i| rows[i].label).collect();
            // The floor is implicit in `y >= 0`; any variable in the subset may lean on it.
            let mut vars: Vec<usize> = iis.iter().flat_map(|&i| rows[i].terms.iter().map(|t| t.0)).collect();
            vars.sort_unstable();
            vars.dedup();
            witness.extend(vars.into_iter().map(|x| LpConstraint::Floor { x }));
            MagnitudeSolution {
                l_hat: vec![floor; n],
                objective: f64::NAN,
                feasible: false,
                floor,
                witness,
                pivot_hash: 0,
            }
        }
    }
}

/// Signs per state-action plus the constraint-graph component structure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignAssignment {
    pub signs: Vec<i8>,
    /// Lowest-index member of the component each `x` belongs to.
    pub component: Vec<usize>,
}

fn find(parent: &mut [usize], mut v: usize) -> usize {
    while parent[v] != v {
        parent[v] = parent[parent[v]];
        v = parent[v];
    }
    v
}

/// Picks `sign(x)` with `sign(x_i) sign(x_j) = sign_value` on every
/// sign-known pair; each connected component's lowest index gets `+1`.
pub fn assign_signs(bounds: &PairBounds) -> Result<SignAssignment> {
    let n = bounds.num_pairs();
    let mut sat = TwoSat::new(n);
    let mut parent: Vec<usize> = (0..n).collect();
    for pb in &bounds.pairs {
        let Some(sv) = pb.sign else { continue };
        if pb.xi == pb.xj {
            if sv < 0 {
                return Err(Error::Unsatisfiable { variable: pb.xi });
            }
            continue;
        }
        if sv > 0 {
            sat.add_equal(pb.xi, pb.xj);
        } else {
            sat.add_differ(pb.xi, pb.xj);
        }
        let (a, b) = (find(&mut parent, pb.xi), find(&mut parent, pb.xj));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let truth = sat.solve().map_err(|variable| Error::Unsatisfiable { variable })?;
    let component: Vec<usize> = (0..n).map(|x| find(&mut parent, x)).collect();
    let signs = (0..n)
        .map(|x| if truth[x] == truth[component[x]] { 1 } else { -1 })
        .collect();
    Ok(SignAssignment { signs, component })
}

/// Rejects mixing weights other than one half.
pub fn ensure_supported_weight(weight: f64) -> Result<()> {
    if weight == 0.5 {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("recovery requires w = 1/2, got w = {weight}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub params: ConfidenceParams,
    /// FNV-1a digest of the serialized statistics.
    pub counts_digest: String,
    pub episodes: u64,
    pub lp_objective: f64,
    pub pivot_hash: String,
    pub l_hat: Vec<f64>,
    pub clipped: Vec<bool>,
    pub signs: Vec<i8>,
    pub component: Vec<usize>,
}

/// A model with `w = 1/2` assembled from exploration statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveredModel {
    #[serde(flatten)]
    pub model: RmMdpModel,
    pub provenance: Provenance,
}

impl RecoveredModel {
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

    /// Signed `p_-(x) = (p1 - p2) / 2`.
    pub fn p_minus(&self) -> Vec<f64> {
        self.model.p1.iter().zip(&self.model.p2).map(|(a, b)| 0.5 * (a - b)).collect()
    }
}

pub fn stats_digest(stats: &ExplorationStats) -> Result<String> {
    let bytes = serde_json::to_vec(stats)?;
    Ok(format!("{:016x}", simplex::fnv1a(simplex::fnv1a_new(), &bytes)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlugIn {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub clipped: Vec<bool>,
}

/// `p_- = sign * min(exp(l), min(p_+, 1 - p_+))`, `p1,2 = p_+ +/- p_-`.
pub fn plug_in_rewards(p_plus: &[f64], l_hat: &[f64], signs: &[i8]) -> PlugIn {
    let mut out = PlugIn { p1: Vec::new(), p2: Vec::new(), clipped: Vec::new() };
    for ((&p, &l), &sign) in p_plus.iter().zip(l_hat).zip(signs) {
        let p = p.clamp(0.0, 1.0);
        let room = p.min(1.0 - p);
        let raw = l.exp();
        out.clipped.push(raw > room);
        let m = f64::from(sign) * raw.min(room);
        out.p1.push((p + m).clamp(0.0, 1.0));
        out.p2.push((p - m).clamp(0.0, 1.0));
    }
    out
}

/// Runs LP, sign assignment and clipping, then attaches `T_hat`, `nu_hat`.
pub fn recover_model(stats: &ExplorationStats, params: &ConfidenceParams) -> Result<RecoveredModel> {
    stats.check_shape()?;
    let bounds = compute_pair_bounds(stats, params);
    let solution = solve_magnitude_lp(&bounds, params);
    if !solution.feasible {
        return Err(Error::Infeasible { witness: solution.witness.iter().map(|c| c.to_string()).collect() });
    }
    let assignment = assign_signs(&bounds)?;
    let rewards = plug_in_rewards(&stats.p_plus_hat, &solution.l_hat, &assignment.signs);
    let est = empirical_estimates(stats);
    let model = RmMdpModel {
        states: stats.states,
        actions: stats.actions,
        horizon: stats.horizon,
        transitions: est.transitions,
        initial: est.initial,
        weight: 0.5,
        p1: rewards.p1,
        p2: rewards.p2,
    };
    model.validate().into_result()?;
    Ok(RecoveredModel {
        model,
        provenance: Provenance {
            params: params.clone(),
            counts_digest: stats_digest(stats)?,
            episodes: stats.k,
            lp_objective: solution.objective,
            pivot_hash: format!("{:016x}", solution.pivot_hash),
            l_hat: solution.l_hat,
            clipped: rewards.clipped,
            signs: assignment.signs,
            component: assignment.component,
        },
    })
}

/// Statistics an infinitely patient explorer would report: `n` samples of
/// every pair and state-action, exact `mu`, `p_+` and rounded counts.
pub fn exact_stats(model: &RmMdpModel, n: u64) -> ExplorationStats {
    let sa = model.num_pairs();
    let moments = exact_moments(model);
    let derived = derive_reward_stats(model);
    let mut stats = ExplorationStats::new(model.states, model.actions, model.horizon);
    stats.n_x = vec![n; sa];
    stats.p_plus_hat = derived.p_plus;
    stats.n_pair = vec![n; pair_count(sa)];
    for i in 0..sa {
        for j in i..sa {
            stats.mu_hat[pair_index(i, j)] = moments.mu.get(i, j);
        }
    }
    stats.t_counts = model.transitions.iter().map(|p| (p * n as f64).round() as u64).collect();
    stats.nu_counts = model.initial.iter().map(|p| (p * n as f64).round() as u64).collect();
    stats.k = n;
    stats
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSlack {
    pub constraint: LpConstraint,
    /// Nonnegative when satisfied.
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpCheckReport {
    pub feasible: bool,
    pub min_slack: f64,
    pub slacks: Vec<ConstraintSlack>,
}

/// Evaluates every LP row (including the floor) at `l`.
pub fn check_magnitudes(bounds: &PairBounds, params: &ConfidenceParams, l: &[f64]) -> LpCheckReport {
    let floor = floor_value(params.eps0);
    let mut slacks: Vec<ConstraintSlack> = log_rows(bounds, params)
        .into_iter()
        .map(|r| {
            let lhs: f64 = r.terms.iter().map(|&(x, c)| c * l[x]).sum();
            let slack = match r.relation {
                Relation::Le => r.rhs - lhs,
                Relation::Ge => lhs - r.rhs,
                Relation::Eq => -(lhs - r.rhs).abs(),
            };
            ConstraintSlack { constraint: r.label, slack }
        })
        .collect();
    slacks.extend(l.iter().enumerate().map(|(x, &v)| ConstraintSlack { constraint: LpConstraint::Floor { x }, slack: v - floor }));
    let min_slack = slacks.iter().map(|s| s.slack).fold(f64::INFINITY, f64::min);
    LpCheckReport { feasible: min_slack >= 0.0, min_slack, slacks }
}

/// `l*(x) = ln max(Delta(x), eps0^5)` from the true model, checked against
/// bounds built from exact moments with `n` samples per pair.
pub fn oracle_lp_check(model: &RmMdpModel, params: &ConfidenceParams, n: u64) -> Result<LpCheckReport> {
    ensure_supported_weight(model.weight)?;
    let bounds = compute_pair_bounds(&exact_stats(model, n), params);
    let eps5 = params.eps0.powi(5);
    let l_star: Vec<f64> = derive_reward_stats(model).delta_x.iter().map(|d| d.max(eps5).ln()).collect();
    Ok(check_magnitudes(&bounds, params, &l_star))
}

/// `|mu_hat - (u_hat + p_+ p_+)| - b` per collected pair; clipped members
/// are reported but exempt.
#[derive(Clone, Debug, PartialEq)]
pub struct PairResidual {
    pub xi: usize,
    pub xj: usize,
    pub residual: f64,
    pub half_width: f64,
    pub sign_known: bool,
    pub exempt: bool,
}

pub fn pair_residuals(bounds: &PairBounds, recovered: &RecoveredModel) -> Vec<PairResidual> {
    let pm = recovered.p_minus();
    let clipped = &recovered.provenance.clipped;
    bounds
        .pairs
        .iter()
        .map(|pb| PairResidual {
            xi: pb.xi,
            xj: pb.xj,
            residual: (pb.center() - pm[pb.xi] * pm[pb.xj]).abs(),
            half_width: pb.half_width,
            sign_known: pb.sign.is_some(),
            exempt: clipped[pb.xi] || clipped[pb.xj],
        })
        .collect()
}
