//! A small dense two-phase simplex for the desk-scale linear programs used
//! by the geometry and separation code: membership tests, support functions,
//! gauge values and body-to-body distances. Variables are free; the solver
//! splits them into nonnegative parts internally. Bland's rule keeps the
//! pivoting cycle-free.

use thiserror::Error;

const EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 20_000;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("row has {0} coefficients but the program has {1} variables")]
    RowLength(usize, usize),
    #[error("objective has {0} coefficients but the program has {1} variables")]
    ObjectiveLength(usize, usize),
    #[error("pivot limit exceeded")]
    PivotLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(&self) -> Option<(&[f64], f64)> {
        match self {
            LpOutcome::Optimal { x, value } => Some((x, *value)),
            _ => None,
        }
    }
}

/// `min c·x` subject to rows `a·x REL b`, all variables free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    n: usize,
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Rel, f64)>,
}

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        LinearProgram { n, objective: vec![0.0; n], rows: Vec::new() }
    }

    pub fn minimize(&mut self, objective: &[f64]) -> Result<&mut Self, LpError> {
        if objective.len() != self.n {
            return Err(LpError::ObjectiveLength(objective.len(), self.n));
        }
        self.objective = objective.to_vec();
        Ok(self)
    }

    pub fn add_row(&mut self, coeffs: &[f64], rel: Rel, rhs: f64) -> Result<&mut Self, LpError> {
        if coeffs.len() != self.n {
            return Err(LpError::RowLength(coeffs.len(), self.n));
        }
        self.rows.push((coeffs.to_vec(), rel, rhs));
        Ok(self)
    }

    pub fn solve(&self) -> Result<LpOutcome, LpError> {
        let n = self.n;
        let m = self.rows.len();
        // Column layout: 2n split variables (x_i = col_{2i} - col_{2i+1}),
        // then one slack/surplus per inequality row, then artificials.
        let n_split = 2 * n;
        let n_slack = self.rows.iter().filter(|(_, rel, _)| *rel != Rel::Eq).count();

        let mut rows_norm: Vec<(Vec<f64>, Rel, f64)> = Vec::with_capacity(m);
        for (coeffs, rel, rhs) in &self.rows {
            let scale = coeffs
                .iter()
                .map(|c| c.abs())
                .fold(rhs.abs(), f64::max)
                .max(1.0);
            let mut c: Vec<f64> = coeffs.iter().map(|v| v / scale).collect();
            let mut r = rhs / scale;
            let mut rel = *rel;
            if r < 0.0 {
                for v in &mut c {
                    *v = -*v;
                }
                r = -r;
                rel = match rel {
                    Rel::Le => Rel::Ge,
                    Rel::Ge => Rel::Le,
                    Rel::Eq => Rel::Eq,
                };
            }
            rows_norm.push((c, rel, r));
        }

        // Artificials are needed for Ge and Eq rows.
        let n_art = rows_norm.iter().filter(|(_, rel, _)| *rel != Rel::Le).count();
        let n_cols = n_split + n_slack + n_art;

        let mut a = vec![vec![0.0; n_cols]; m];
        let mut b = vec![0.0; m];
        let mut basis = vec![usize::MAX; m];
        let mut slack_idx = n_split;
        let mut art_idx = n_split + n_slack;
        for (i, (coeffs, rel, rhs)) in rows_norm.iter().enumerate() {
            for j in 0..n {
                a[i][2 * j] = coeffs[j];
                a[i][2 * j + 1] = -coeffs[j];
            }
            b[i] = *rhs;
            match rel {
                Rel::Le => {
                    a[i][slack_idx] = 1.0;
                    basis[i] = slack_idx;
                    slack_idx += 1;
                }
                Rel::Ge => {
                    a[i][slack_idx] = -1.0;
                    slack_idx += 1;
                    a[i][art_idx] = 1.0;
                    basis[i] = art_idx;
                    art_idx += 1;
                }
                Rel::Eq => {
                    a[i][art_idx] = 1.0;
                    basis[i] = art_idx;
                    art_idx += 1;
                }
            }
        }

        // Phase 1: minimize the sum of artificials.
        if n_art > 0 {
            let mut cost = vec![0.0; n_cols];
            for j in n_split + n_slack..n_cols {
                cost[j] = 1.0;
            }
            match run_simplex(&mut a, &mut b, &mut basis, &cost, n_cols)? {
                SimplexEnd::Optimal(value) => {
                    if value > 1e-7 {
                        return Ok(LpOutcome::Infeasible);
                    }
                }
                SimplexEnd::Unbounded => unreachable!("phase-1 objective is bounded below"),
            }
            // Pivot any lingering artificial out of the basis.
            for i in 0..m {
                if basis[i] >= n_split + n_slack {
                    if let Some(j) = (0..n_split + n_slack).find(|&j| a[i][j].abs() > EPS) {
                        pivot(&mut a, &mut b, &mut basis, i, j);
                    }
                    // A fully zero row is redundant; its artificial stays
                    // basic at value zero, which is harmless in phase 2
                    // because the artificial columns get +inf-like cost 0
                    // and never re-enter (they are excluded below).
                }
            }
        }

        // Phase 2: original objective on the split variables.
        let mut cost = vec![0.0; n_cols];
        for j in 0..n {
            cost[2 * j] = self.objective[j];
            cost[2 * j + 1] = -self.objective[j];
        }
        let usable = n_split + n_slack;
        match run_simplex_restricted(&mut a, &mut b, &mut basis, &cost, usable)? {
            SimplexEnd::Optimal(value) => {
                let mut x = vec![0.0; n];
                for (i, &bi) in basis.iter().enumerate() {
                    if bi < n_split {
                        let var = bi / 2;
                        if bi % 2 == 0 {
                            x[var] += b[i];
                        } else {
                            x[var] -= b[i];
                        }
                    }
                }
                Ok(LpOutcome::Optimal { x, value })
            }
            SimplexEnd::Unbounded => Ok(LpOutcome::Unbounded),
        }
    }
}

enum SimplexEnd {
    Optimal(f64),
    Unbounded,
}

fn run_simplex(
    a: &mut [Vec<f64>],
    b: &mut [f64],
    basis: &mut [usize],
    cost: &[f64],
    n_enterable: usize,
) -> Result<SimplexEnd, LpError> {
    run_simplex_restricted(a, b, basis, cost, n_enterable)
}

/// Bland-rule simplex over the current canonical tableau, allowing only
/// columns below `n_enterable` to enter the basis.
fn run_simplex_restricted(
    a: &mut [Vec<f64>],
    b: &mut [f64],
    basis: &mut [usize],
    cost: &[f64],
    n_enterable: usize,
) -> Result<SimplexEnd, LpError> {
    let m = a.len();
    for _ in 0..MAX_PIVOTS {
        // Reduced costs against the current basis.
        let mut reduced = cost.to_vec();
        for i in 0..m {
            let cb = cost[basis[i]];
            if cb != 0.0 {
                for j in 0..reduced.len() {
                    reduced[j] -= cb * a[i][j];
                }
            }
        }
        // Entering column: Bland's rule.
        let entering = (0..n_enterable).find(|&j| reduced[j] < -EPS);
        let Some(e) = entering else {
            let value = (0..m).map(|i| cost[basis[i]] * b[i]).sum();
            return Ok(SimplexEnd::Optimal(value));
        };
        // Ratio test.
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if a[i][e] > EPS {
                let ratio = b[i] / a[i][e];
                let better = ratio < best - 1e-12
                    || ((ratio - best).abs() <= 1e-12
                        && leave.is_some_and(|l| basis[i] < basis[l]));
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(r) = leave else {
            return Ok(SimplexEnd::Unbounded);
        };
        pivot(a, b, basis, r, e);
    }
    Err(LpError::PivotLimit)
}

fn pivot(a: &mut [Vec<f64>], b: &mut [f64], basis: &mut [usize], r: usize, e: usize) {
    let m = a.len();
    let p = a[r][e];
    for v in a[r].iter_mut() {
        *v /= p;
    }
    b[r] /= p;
    for i in 0..m {
        if i != r {
            let f = a[i][e];
            if f != 0.0 {
                for j in 0..a[i].len() {
                    a[i][j] -= f * a[r][j];
                }
                b[i] -= f * b[r];
            }
        }
    }
    basis[r] = e;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_bounded() {
        // min -x - y  s.t.  x + y <= 1, x <= 0.7, y <= 0.8  (x, y free).
        let mut lp = LinearProgram::new(2);
        lp.minimize(&[-1.0, -1.0]).unwrap();
        lp.add_row(&[1.0, 1.0], Rel::Le, 1.0).unwrap();
        lp.add_row(&[1.0, 0.0], Rel::Le, 0.7).unwrap();
        lp.add_row(&[0.0, 1.0], Rel::Le, 0.8).unwrap();
        match lp.solve().unwrap() {
            LpOutcome::Optimal { value, .. } => assert!((value + 1.0).abs() < 1e-8),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn equality_and_negative_coords() {
        // min x  s.t.  x + y = -2, y <= 3  ->  x = -5 at y = 3.
        let mut lp = LinearProgram::new(2);
        lp.minimize(&[1.0, 0.0]).unwrap();
        lp.add_row(&[1.0, 1.0], Rel::Eq, -2.0).unwrap();
        lp.add_row(&[0.0, 1.0], Rel::Le, 3.0).unwrap();
        match lp.solve().unwrap() {
            LpOutcome::Optimal { x, value } => {
                assert!((value + 5.0).abs() < 1e-8);
                assert!((x[0] + 5.0).abs() < 1e-8);
                assert!((x[1] - 3.0).abs() < 1e-8);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn detects_infeasible() {
        let mut lp = LinearProgram::new(1);
        lp.add_row(&[1.0], Rel::Le, -1.0).unwrap();
        lp.add_row(&[1.0], Rel::Ge, 1.0).unwrap();
        assert_eq!(lp.solve().unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.minimize(&[1.0]).unwrap();
        lp.add_row(&[1.0], Rel::Le, 5.0).unwrap();
        assert_eq!(lp.solve().unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_vertex() {
        // Three constraints meeting at the optimum (0,0).
        let mut lp = LinearProgram::new(2);
        lp.minimize(&[1.0, 1.0]).unwrap();
        lp.add_row(&[1.0, 0.0], Rel::Ge, 0.0).unwrap();
        lp.add_row(&[0.0, 1.0], Rel::Ge, 0.0).unwrap();
        lp.add_row(&[1.0, 1.0], Rel::Ge, 0.0).unwrap();
        match lp.solve().unwrap() {
            LpOutcome::Optimal { value, .. } => assert!(value.abs() < 1e-9),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn cross_polytope_support() {
        // max (2,1)·x over the l1 ball: value 2 at (±1, 0).
        let mut lp = LinearProgram::new(2);
        lp.minimize(&[-2.0, -1.0]).unwrap();
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                lp.add_row(&[sx, sy], Rel::Le, 1.0).unwrap();
            }
        }
        match lp.solve().unwrap() {
            LpOutcome::Optimal { x, value } => {
                assert!((value + 2.0).abs() < 1e-8);
                assert!((x[0] - 1.0).abs() < 1e-8);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }
}
