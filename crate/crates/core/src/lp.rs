//! A small dense simplex solver over exact rationals.
//!
//! Solves `max c^T x  s.t.  A x <= b, x >= 0` for `b >= 0`, which is all the
//! capacity module needs. The slack basis is immediately feasible, so no
//! phase-one is required, and Bland's rule guarantees termination on
//! degenerate instances.

use crate::rational::Rat;
use num_traits::{Signed, Zero};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimplexSolution {
    pub value: Rat,
    /// Primal solution, one entry per decision variable.
    pub x: Vec<Rat>,
    /// Dual values, one entry per constraint row.
    pub duals: Vec<Rat>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpOutcome {
    Optimal(SimplexSolution),
    Unbounded,
}

/// Maximizes `c^T x` subject to `A x <= b`, `x >= 0`.
///
/// Panics if dimensions are inconsistent or any `b_i` is negative; callers
/// construct these programs, so violations are bugs rather than input errors.
pub fn maximize(c: &[Rat], a: &[Vec<Rat>], b: &[Rat]) -> LpOutcome {
    let n = c.len();
    let m = a.len();
    assert_eq!(m, b.len(), "one rhs entry per constraint");
    assert!(
        b.iter().all(|v| !v.is_negative()),
        "slack-basis simplex requires b >= 0"
    );
    for row in a {
        assert_eq!(row.len(), n, "constraint width must match variable count");
    }

    // Tableau columns: n decision vars, m slacks, then the rhs.
    let width = n + m + 1;
    let mut rows: Vec<Vec<Rat>> = Vec::with_capacity(m);
    for (i, arow) in a.iter().enumerate() {
        let mut row = Vec::with_capacity(width);
        row.extend(arow.iter().cloned());
        for k in 0..m {
            row.push(if k == i { Rat::from_integer(1.into()) } else { Rat::zero() });
        }
        row.push(b[i].clone());
        rows.push(row);
    }
    // Objective row holds reduced costs; the last entry is the negated
    // objective value so the same elimination step applies to it.
    let mut obj: Vec<Rat> = Vec::with_capacity(width);
    obj.extend(c.iter().cloned());
    obj.extend(std::iter::repeat_n(Rat::zero(), m + 1));

    let mut basis: Vec<usize> = (n..n + m).collect();

    // Bland: the entering variable is the lowest-index column with a
    // positive reduced cost; no candidate means optimality.
    while let Some(enter) = (0..n + m).find(|&j| obj[j].is_positive()) {
        // Ratio test over rows with a positive pivot column entry.
        let mut leave: Option<usize> = None;
        let mut best: Option<Rat> = None;
        for (i, row) in rows.iter().enumerate() {
            if !row[enter].is_positive() {
                continue;
            }
            let ratio = row[width - 1].clone() / row[enter].clone();
            let better = match &best {
                None => true,
                Some(b) => {
                    ratio < *b
                        || (ratio == *b
                            && basis[i] < basis[leave.expect("leave set with best")])
                }
            };
            if better {
                best = Some(ratio);
                leave = Some(i);
            }
        }
        let Some(r) = leave else {
            return LpOutcome::Unbounded;
        };

        // Pivot on (r, enter).
        let pivot = rows[r][enter].clone();
        for v in rows[r].iter_mut() {
            *v /= pivot.clone();
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[enter].is_zero() {
                continue;
            }
            let factor = row[enter].clone();
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= factor.clone() * p.clone();
            }
        }
        if !obj[enter].is_zero() {
            let factor = obj[enter].clone();
            for (v, p) in obj.iter_mut().zip(&pivot_row) {
                *v -= factor.clone() * p.clone();
            }
        }
        basis[r] = enter;
    }

    let mut x = vec![Rat::zero(); n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            x[bv] = rows[i][width - 1].clone();
        }
    }
    // At optimality the slack column's reduced cost is -y_i.
    let duals = (0..m).map(|i| -obj[n + i].clone()).collect();
    let value = -obj[width - 1].clone();
    LpOutcome::Optimal(SimplexSolution { value, x, duals })
}
