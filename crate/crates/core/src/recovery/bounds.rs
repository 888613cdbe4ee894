use serde::{Deserialize, Serialize};

use crate::explore::{pair_members, ConfidenceParams, ExplorationStats};

/// Confidence interval `[c_l, c_u]` on `u(x_i, x_j) = p_-(x_i) p_-(x_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairBound {
    pub xi: usize,
    pub xj: usize,
    pub n: u64,
    pub c_u: f64,
    pub c_l: f64,
    pub half_width: f64,
    /// `Some(+1 | -1)` when `c_u * c_l > 0`.
    pub sign: Option<i8>,
}

impl PairBound {
    pub fn new(xi: usize, xj: usize, n: u64, c_u: f64, c_l: f64, half_width: f64) -> Self {
        let sign = if c_u * c_l > 0.0 { Some(if c_u > 0.0 { 1 } else { -1 }) } else { None };
        PairBound { xi, xj, n, c_u, c_l, half_width, sign }
    }

    /// Center of the interval, `mu_hat - p_+ p_+`.
    pub fn center(&self) -> f64 {
        0.5 * (self.c_u + self.c_l)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairBounds {
    /// One entry per collected unordered pair, in packed-triangle order.
    pub pairs: Vec<PairBound>,
    pub p_plus: Vec<f64>,
    pub n_x: Vec<u64>,
    /// `sqrt(iota2 / max(1, n(x)))`.
    pub b_x: Vec<f64>,
}

impl PairBounds {
    pub fn num_pairs(&self) -> usize {
        self.p_plus.len()
    }
}

/// `c_u, c_l = mu_hat - p_+ p_+ +/- (sqrt(iota2 / n) + eps0^2)` for every pair
/// with at least one collected sample.
pub fn compute_pair_bounds(stats: &ExplorationStats, params: &ConfidenceParams) -> PairBounds {
    let eps_sq = params.eps0 * params.eps0;
    let pairs = stats
        .n_pair
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(idx, &n)| {
            let (xi, xj) = pair_members(idx);
            let center = stats.mu_hat[idx] - stats.p_plus_hat[xi] * stats.p_plus_hat[xj];
            let h = (params.iota2 / n as f64).sqrt() + eps_sq;
            PairBound::new(xi, xj, n, center + h, center - h, h)
        })
        .collect();
    let b_x = stats.n_x.iter().map(|&n| (params.iota2 / n.max(1) as f64).sqrt()).collect();
    PairBounds { pairs, p_plus: stats.p_plus_hat.clone(), n_x: stats.n_x.clone(), b_x }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explore::{pair_index, ParamSpec};

    fn params() -> ConfidenceParams {
        ParamSpec { k_max: Some(1000), ..ParamSpec::new(0.1, 1e-3, 0.1) }.resolve(1, 2, 2).unwrap()
    }

    #[test]
    fn arithmetic_example() {
        let p = params();
        let mut stats = ExplorationStats::new(1, 2, 2);
        stats.p_plus_hat = vec![0.5, 0.5];
        let idx = pair_index(0, 1);
        stats.mu_hat[idx] = 0.5;
        stats.n_pair[idx] = (p.iota2 * 1e4).round() as u64;
        let b = compute_pair_bounds(&stats, &p);
        assert_eq!(b.pairs.len(), 1);
        let pb = &b.pairs[0];
        assert!((pb.c_u - (0.25 + 0.01 + 1e-6)).abs() < 1e-7);
        assert!((pb.c_l - (0.25 - 0.01 - 1e-6)).abs() < 1e-7);
        assert_eq!(pb.sign, Some(1));
    }

    #[test]
    fn uncorrelated_pair_has_unknown_sign() {
        let p = params();
        let mut stats = ExplorationStats::new(1, 2, 2);
        stats.p_plus_hat = vec![0.3, 0.6];
        let idx = pair_index(0, 1);
        stats.mu_hat[idx] = 0.3 * 0.6;
        stats.n_pair[idx] = 50;
        let pb = &compute_pair_bounds(&stats, &p).pairs[0];
        assert!(pb.c_u > 0.0 && pb.c_l < 0.0);
        assert_eq!(pb.sign, None);
    }

    #[test]
    fn uncollected_pairs_are_absent() {
        let mut stats = ExplorationStats::new(2, 1, 2);
        stats.n_pair[pair_index(1, 1)] = 3;
        let b = compute_pair_bounds(&stats, &params());
        assert_eq!(b.pairs.iter().map(|p| (p.xi, p.xj)).collect::<Vec<_>>(), vec![(1, 1)]);
    }
}
