//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! Solves `min c^T y` subject to rows `a_i^T y {<=, >=, =} b_i` and `y >= 0`.
//! Sized for the recovery LP (tens of variables, a few hundred rows).

const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal {
        x: Vec<f64>,
        objective: f64,
        /// FNV-1a hash of the `(entering, leaving)` pivot sequence.
        pivot_hash: u64,
        pivots: usize,
    },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// `rows x (cols + 1)`, last column is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    hash: u64,
    pivots: usize,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;

pub(crate) fn fnv1a(hash: u64, bytes: &[u8]) -> u64 {
    bytes.iter().fold(hash, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub(crate) fn fnv1a_new() -> u64 {
    FNV_OFFSET
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        self.hash = fnv1a(self.hash, &(col as u64).to_le_bytes());
        self.hash = fnv1a(self.hash, &(self.basis[row] as u64).to_le_bytes());
        self.pivots += 1;
        let width = self.cols + 1;
        let p = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[row].clone();
        for (r, line) in self.a.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = line[col];
            if f != 0.0 {
                for c in 0..width {
                    line[c] -= f * pivot_row[c];
                }
                line[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Minimizes `cost^T y` over the current feasible basis, considering
    /// only columns with `allowed[c]`. Returns false when unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        loop {
            // Reduced costs r_c = c_c - c_B^T B^-1 A_c, Bland: lowest index.
            let entering = (0..self.cols).find(|&c| {
                if !allowed[c] || self.basis.contains(&c) {
                    return false;
                }
                let mut rc = cost[c];
                for (r, &b) in self.basis.iter().enumerate() {
                    rc -= cost[b] * self.a[r][c];
                }
                rc < -EPS
            });
            let Some(col) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.a.len() {
                let coef = self.a[r][col];
                if coef > EPS {
                    let ratio = self.a[r][self.cols] / coef;
                    let better = match leave {
                        None => true,
                        Some((lr, best)) => {
                            ratio < best - EPS
                                || (ratio <= best + EPS && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else { return false };
            self.pivot(row, col);
        }
    }
}

/// Solves the LP. `objective` has one entry per variable.
pub fn solve(objective: &[f64], constraints: &[Constraint]) -> LpOutcome {
    let n = objective.len();
    let m = constraints.len();
    let mut slack_cols = 0;
    let mut art_cols = 0;
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(m);
    for c in constraints {
        assert_eq!(c.coeffs.len(), n, "constraint width");
        let (coeffs, relation, rhs) = if c.rhs < 0.0 {
            let flipped = match c.relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
            (c.coeffs.iter().map(|v| -v).collect(), flipped, -c.rhs)
        } else {
            (c.coeffs.clone(), c.relation, c.rhs)
        };
        match relation {
            Relation::Le => slack_cols += 1,
            Relation::Ge => {
                slack_cols += 1;
                art_cols += 1;
            }
            Relation::Eq => art_cols += 1,
        }
        rows.push((coeffs, relation, rhs));
    }
    let cols = n + slack_cols + art_cols;
    let art_start = n + slack_cols;
    let mut a = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let (mut next_slack, mut next_art) = (n, art_start);
    for (coeffs, relation, rhs) in rows {
        let mut line = vec![0.0; cols + 1];
        line[..n].copy_from_slice(&coeffs);
        line[cols] = rhs;
        match relation {
            Relation::Le => {
                line[next_slack] = 1.0;
                basis.push(next_slack);
                next_slack += 1;
            }
            Relation::Ge => {
                line[next_slack] = -1.0;
                next_slack += 1;
                line[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
            Relation::Eq => {
                line[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
        }
        a.push(line);
    }
    let mut tab = Tableau { a, basis, cols, hash: fnv1a_new(), pivots: 0 };

    if art_cols > 0 {
        let mut phase1 = vec![0.0; cols];
        phase1[art_start..].iter_mut().for_each(|c| *c = 1.0);
        let all = vec![true; cols];
        tab.optimize(&phase1, &all);
        let infeas: f64 = tab
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= art_start)
            .map(|(r, _)| tab.a[r][cols])
            .sum();
        if infeas > 1e-7 {
            return LpOutcome::Infeasible;
        }
        // Drive zero-valued artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < tab.a.len() {
            if tab.basis[r] >= art_start {
                if let Some(c) = (0..art_start).find(|&c| tab.a[r][c].abs() > EPS && !tab.basis.contains(&c)) {
                    tab.pivot(r, c);
                } else {
                    tab.a.remove(r);
                    tab.basis.remove(r);
                    continue;
                }
            }
            r += 1;
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(objective);
    let allowed: Vec<bool> = (0..cols).map(|c| c < art_start).collect();
    if !tab.optimize(&cost, &allowed) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.a[r][cols];
        }
    }
    let objective_value = x.iter().zip(objective).map(|(v, c)| v * c).sum();
    LpOutcome::Optimal { x, objective: objective_value, pivot_hash: tab.hash, pivots: tab.pivots }
}

/// Feasibility only (phase one).
pub fn is_feasible(n: usize, constraints: &[Constraint]) -> bool {
    !matches!(solve(&vec![0.0; n], constraints), LpOutcome::Infeasible)
}

/// Deletion filter: returns indices of an irreducible infeasible subset of
/// `constraints`, or an empty vector if the system is feasible.
pub fn irreducible_infeasible_subset(n: usize, constraints: &[Constraint]) -> Vec<usize> {
    if is_feasible(n, constraints) {
        return Vec::new();
    }
    let mut active: Vec<usize> = (0..constraints.len()).collect();
    let mut i = 0;
    while i < active.len() {
        let trial: Vec<Constraint> = active
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &k)| constraints[k].clone())
            .collect();
        if is_feasible(n, &trial) {
            i += 1;
        } else {
            active.remove(i);
        }
    }
    active
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(coeffs: &[f64], relation: Relation, rhs: f64) -> Constraint {
        Constraint { coeffs: coeffs.to_vec(), relation, rhs }
    }

    fn optimal(out: LpOutcome) -> (Vec<f64>, f64) {
        match out {
            LpOutcome::Optimal { x, objective, .. } => (x, objective),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let (x, obj) = optimal(solve(
            &[-3.0, -5.0],
            &[
                row(&[1.0, 0.0], Relation::Le, 4.0),
                row(&[0.0, 2.0], Relation::Le, 12.0),
                row(&[3.0, 2.0], Relation::Le, 18.0),
            ],
        ));
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
        assert!((obj + 36.0).abs() < 1e-9);
    }

    #[test]
    fn ge_and_eq_rows_need_phase_one() {
        // min x + y, x + y >= 2, x - y = 1 -> (1.5, 0.5)
        let (x, obj) = optimal(solve(
            &[1.0, 1.0],
            &[row(&[1.0, 1.0], Relation::Ge, 2.0), row(&[1.0, -1.0], Relation::Eq, 1.0)],
        ));
        assert!((x[0] - 1.5).abs() < 1e-9 && (x[1] - 0.5).abs() < 1e-9);
        assert!((obj - 2.0).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // -x <= -3  <=>  x >= 3
        let (x, _) = optimal(solve(&[1.0], &[row(&[-1.0], Relation::Le, -3.0)]));
        assert!((x[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let rows = [row(&[1.0], Relation::Le, 1.0), row(&[1.0], Relation::Ge, 2.0)];
        assert_eq!(solve(&[1.0], &rows), LpOutcome::Infeasible);
        assert_eq!(solve(&[-1.0], &[row(&[1.0], Relation::Ge, 1.0)]), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example cycles under the largest-coefficient rule.
        let (_, obj) = optimal(solve(
            &[-0.75, 150.0, -0.02, 6.0],
            &[
                row(&[0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0),
                row(&[0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0),
                row(&[0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0),
            ],
        ));
        assert!((obj + 0.05).abs() < 1e-9);
    }

    #[test]
    fn iis_isolates_the_conflict() {
        let rows = [
            row(&[1.0, 0.0], Relation::Le, 5.0),
            row(&[0.0, 1.0], Relation::Ge, 1.0),
            row(&[1.0, 1.0], Relation::Le, 1.0),
            row(&[1.0, 0.0], Relation::Ge, 0.5),
        ];
        let iis = irreducible_infeasible_subset(2, &rows);
        assert_eq!(iis, vec![1, 2, 3]);
        assert!(irreducible_infeasible_subset(2, &rows[..2]).is_empty());
    }
}
