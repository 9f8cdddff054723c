//! Dense-tableau primal simplex for the packing LP
//!
//! ```text
//! max 1ᵀy   s.t.  Aᵀy ≤ 1,  y ≥ 0
//! ```
//!
//! which is the dual of the set-cover relaxation `min 1ᵀx, Ax ≥ 1, x ≥ 0`.
//! The slack basis is feasible, so no phase 1 is needed, and every iterate is a
//! feasible packing: its value is a valid lower bound even if the iteration cap
//! is hit. The covering solution `x` is read off the slack reduced costs.

const PIVOT_TOL: f64 = 1e-10;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PackingStatus {
    Optimal,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct PackingLp {
    pub status: PackingStatus,
    /// `1ᵀy`; at optimality also the covering LP value.
    pub value: f64,
    /// Packing solution, one entry per row of `A`.
    pub y: Vec<f64>,
    /// Covering solution, one entry per column of `A`. Only meaningful when
    /// `status` is `Optimal`.
    pub x: Vec<f64>,
    pub iterations: usize,
}

/// `rows[i]` lists the columns (in `0..n_cols`) with a one in row `i`.
pub fn solve_packing_lp(rows: &[Vec<usize>], n_cols: usize, max_iter: usize) -> PackingLp {
    let m = rows.len();
    let n = n_cols;
    let width = m + n + 1;
    let rhs_col = m + n;
    // Constraint j: Σ_{i ∋ j} y_i + s_j = 1.
    let mut tab = vec![0.0; n * width];
    for (i, cols) in rows.iter().enumerate() {
        for &j in cols {
            tab[j * width + i] = 1.0;
        }
    }
    for j in 0..n {
        tab[j * width + m + j] = 1.0;
        tab[j * width + rhs_col] = 1.0;
    }
    let mut reduced = vec![0.0; m + n];
    for r in reduced.iter_mut().take(m) {
        *r = -1.0;
    }
    let mut value = 0.0;
    let mut basis: Vec<usize> = (m..m + n).collect();

    let mut iterations = 0;
    let mut degenerate_run = 0;
    let status = loop {
        let bland = degenerate_run >= DEGENERATE_LIMIT;
        let entering = if bland {
            reduced.iter().position(|&r| r < -PIVOT_TOL)
        } else {
            let mut best: Option<(usize, f64)> = None;
            for (j, &r) in reduced.iter().enumerate() {
                if r < -PIVOT_TOL && best.is_none_or(|(_, b)| r < b) {
                    best = Some((j, r));
                }
            }
            best.map(|(j, _)| j)
        };
        let Some(e) = entering else {
            break PackingStatus::Optimal;
        };
        if iterations >= max_iter {
            break PackingStatus::IterationLimit;
        }
        iterations += 1;

        let mut leave: Option<(usize, f64)> = None;
        for row in 0..n {
            let a = tab[row * width + e];
            if a > PIVOT_TOL {
                let ratio = tab[row * width + rhs_col] / a;
                let better = match leave {
                    None => true,
                    Some((r0, best)) => {
                        ratio < best - 1e-12 || (ratio <= best + 1e-12 && basis[row] < basis[r0])
                    }
                };
                if better {
                    leave = Some((row, ratio));
                }
            }
        }
        // Every y_i appears in a constraint with coefficient 1 and the feasible
        // region is bounded, so a leaving row always exists.
        let (p, ratio) = leave.expect("packing LP is bounded");
        degenerate_run = if ratio <= 1e-12 { degenerate_run + 1 } else { 0 };

        let pivot = tab[p * width + e];
        for v in &mut tab[p * width..(p + 1) * width] {
            *v /= pivot;
        }
        let pivot_row: Vec<f64> = tab[p * width..(p + 1) * width].to_vec();
        for row in 0..n {
            if row == p {
                continue;
            }
            let f = tab[row * width + e];
            if f != 0.0 {
                for (v, &pr) in tab[row * width..(row + 1) * width].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
            }
        }
        let f = reduced[e];
        for (r, &pr) in reduced.iter_mut().zip(&pivot_row) {
            *r -= f * pr;
        }
        value -= f * pivot_row[rhs_col];
        basis[p] = e;
    };

    let mut y = vec![0.0; m];
    for (row, &b) in basis.iter().enumerate() {
        if b < m {
            y[b] = tab[row * width + rhs_col];
        }
    }
    let x = reduced[m..].iter().map(|&r| r.max(0.0)).collect();
    PackingLp {
        status,
        value,
        y,
        x,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_cover_is_half_integral() {
        // Elements {0,1}, {1,2}, {0,2}: LP optimum 1.5 at x = (½, ½, ½).
        let rows = vec![vec![0, 1], vec![1, 2], vec![0, 2]];
        let lp = solve_packing_lp(&rows, 3, 100);
        assert_eq!(lp.status, PackingStatus::Optimal);
        assert!((lp.value - 1.5).abs() < 1e-12);
        for v in &lp.x {
            assert!((v - 0.5).abs() < 1e-12);
        }
        assert!((lp.y.iter().sum::<f64>() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn single_set_covering_everything() {
        let rows = vec![vec![0, 1], vec![0], vec![0, 2]];
        let lp = solve_packing_lp(&rows, 3, 100);
        assert!((lp.value - 1.0).abs() < 1e-12);
        assert!((lp.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iteration_cap_still_gives_feasible_packing() {
        let rows = vec![vec![0, 1], vec![1, 2], vec![0, 2], vec![2, 3]];
        let lp = solve_packing_lp(&rows, 4, 1);
        assert_eq!(lp.status, PackingStatus::IterationLimit);
        for j in 0..4 {
            let load: f64 = rows
                .iter()
                .enumerate()
                .filter(|(_, r)| r.contains(&j))
                .map(|(i, _)| lp.y[i])
                .sum();
            assert!(load <= 1.0 + 1e-12);
        }
        assert!((lp.value - lp.y.iter().sum::<f64>()).abs() < 1e-12);
    }
}
