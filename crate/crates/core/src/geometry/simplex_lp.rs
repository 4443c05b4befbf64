//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Solves `min cᵀx  s.t.  Ax ≤ b` with `x` free by lifting to standard form
//! `A x⁺ − A x⁻ + s = b`, `x⁺, x⁻, s ≥ 0`. Rows with negative right-hand side
//! are sign-flipped and receive an artificial column for phase one.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const PHASE_ONE_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

struct Tableau {
    /// `m` constraint rows, each `ncols + 1` wide (rhs last).
    rows: Vec<Vec<f64>>,
    /// Reduced costs; last entry holds minus the objective value.
    cost: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (v, pv) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations over columns `< allowed` until optimal.
    fn optimize(&mut self, allowed: usize, pivots: &mut usize) -> Result<()> {
        loop {
            // Bland: lowest-index improving column.
            let entering = (0..allowed).find(|&j| self.cost[j] < -COST_TOL);
            let Some(c) = entering else {
                return Ok(());
            };
            let rhs = self.ncols;
            let mut leaving: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a > PIVOT_TOL {
                    let ratio = row[rhs] / a;
                    leaving = match leaving {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leaving else {
                return Err(Error::Unbounded);
            };
            self.pivot(r, c);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(Error::PivotLimit(MAX_PIVOTS));
            }
        }
    }
}

/// Minimizes `cᵀx` over `{x : Ax ≤ b}` and returns an optimal basic solution.
pub fn minimize(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, d) = a.shape();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: b.len(),
        });
    }
    if c.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: c.len(),
        });
    }

    // Columns: x⁺ (d), x⁻ (d), slacks (m), artificials (one per negative row).
    let negative: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let n_struct = 2 * d + m;
    let ncols = n_struct + negative.len();
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art_col = n_struct;
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; ncols + 1];
        for j in 0..d {
            row[j] = sign * a[(i, j)];
            row[d + j] = -sign * a[(i, j)];
        }
        row[2 * d + i] = sign;
        row[ncols] = sign * b[i];
        if sign < 0.0 {
            row[art_col] = 1.0;
            basis.push(art_col);
            art_col += 1;
        } else {
            basis.push(2 * d + i);
        }
        rows.push(row);
    }

    let mut tab = Tableau {
        rows,
        cost: vec![0.0; ncols + 1],
        basis,
        ncols,
    };
    let mut pivots = 0;

    if !negative.is_empty() {
        // Phase one: minimize the sum of artificials.
        for &i in &negative {
            for j in 0..=ncols {
                if j < n_struct || j == ncols {
                    tab.cost[j] -= tab.rows[i][j];
                }
            }
        }
        match tab.optimize(ncols, &mut pivots) {
            Ok(()) => {}
            Err(Error::Unbounded) => unreachable!("phase one objective is bounded below"),
            Err(e) => return Err(e),
        }
        if -tab.cost[ncols] > PHASE_ONE_TOL * (1.0 + b.amax()) {
            return Err(Error::Infeasible);
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < tab.rows.len() {
            if tab.basis[r] >= n_struct {
                let col = (0..n_struct).find(|&j| tab.rows[r][j].abs() > PIVOT_TOL);
                match col {
                    Some(c) => {
                        tab.pivot(r, c);
                        r += 1;
                    }
                    None => {
                        tab.rows.remove(r);
                        tab.basis.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
        for row in tab.rows.iter_mut() {
            for v in row[n_struct..ncols].iter_mut() {
                *v = 0.0;
            }
        }
    }

    // Phase two costs in reduced form.
    let mut cost = vec![0.0; ncols + 1];
    for j in 0..d {
        cost[j] = c[j];
        cost[d + j] = -c[j];
    }
    let full = cost.clone();
    for (row, &bj) in tab.rows.iter().zip(&tab.basis) {
        let cb = full[bj];
        if cb != 0.0 {
            for (v, rv) in cost.iter_mut().zip(row) {
                *v -= cb * rv;
            }
        }
    }
    tab.cost = cost;
    tab.optimize(n_struct, &mut pivots)?;

    let mut x = DVector::zeros(d);
    for (row, &bj) in tab.rows.iter().zip(&tab.basis) {
        let val = row[ncols];
        if bj < d {
            x[bj] += val;
        } else if bj < 2 * d {
            x[bj - d] -= val;
        }
    }
    Ok(x)
}
