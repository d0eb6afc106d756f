//! Phase-1 simplex for `A x = b, x >= 0`.
//!
//! Dense tableau with Bland's rule; sized for a handful of rows.

const PIVOT_EPS: f64 = 1e-12;
const MAX_PIVOTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PhaseOne {
    pub x: Vec<f64>,
    /// Minimal `sum |A x - b|` reached (sum of artificial variables).
    pub infeasibility: f64,
}

pub(crate) fn phase_one(a: &[Vec<f64>], b: &[f64]) -> PhaseOne {
    let m = a.len();
    let n = a.first().map_or(0, |r| r.len());
    let width = n + m + 1;
    let rhs = width - 1;
    let mut t = vec![vec![0.0; width]; m];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][rhs] = sign * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    // Reduced costs of min sum(artificials).
    let mut cost = vec![0.0; width];
    for row in &t {
        for j in 0..n {
            cost[j] -= row[j];
        }
        cost[rhs] -= row[rhs];
    }

    for _ in 0..MAX_PIVOTS {
        let Some(enter) = (0..n + m).find(|&j| cost[j] < -PIVOT_EPS) else {
            break;
        };
        let mut leave: Option<usize> = None;
        for i in 0..m {
            if t[i][enter] > PIVOT_EPS {
                let ratio = t[i][rhs] / t[i][enter];
                leave = match leave {
                    None => Some(i),
                    Some(k) => {
                        let best = t[k][rhs] / t[k][enter];
                        if ratio < best - PIVOT_EPS || (ratio <= best + PIVOT_EPS && basis[i] < basis[k]) {
                            Some(i)
                        } else {
                            Some(k)
                        }
                    }
                };
            }
        }
        let Some(row) = leave else {
            // Unbounded direction cannot occur for a phase-1 objective
            // bounded below by zero; treat as optimal.
            break;
        };
        pivot(&mut t, &mut cost, row, enter);
        basis[row] = enter;
    }

    let mut x = vec![0.0; n];
    let mut infeasibility = 0.0;
    for (i, &var) in basis.iter().enumerate() {
        let v = t[i][rhs].max(0.0);
        if var < n {
            x[var] = v;
        } else {
            infeasibility += v;
        }
    }
    PhaseOne { x, infeasibility }
}

fn pivot(t: &mut [Vec<f64>], cost: &mut [f64], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i != row {
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    let f = cost[col];
    for (v, pv) in cost.iter_mut().zip(&pivot_row) {
        *v -= f * pv;
    }
}
