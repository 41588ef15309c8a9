//! Reference implementations shared by the integration tests. Nothing here
//! calls into the code under test.

#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Positive probability vector with entries bounded away from zero.
pub fn random_simplex(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

/// `1 - cos` between random Gaussian-ish points and centers, computed with
/// plain loops.
pub fn random_cosine_costs(rng: &mut ChaCha8Rng, n: usize, k: usize, d: usize) -> Array2<f64> {
    let x = random_matrix(rng, n, d, -1.0, 1.0);
    let c = random_matrix(rng, k, d, -1.0, 1.0);
    Array2::from_shape_fn((n, k), |(i, j)| {
        let mut dot = 0.0;
        let mut nx = 0.0;
        let mut nc = 0.0;
        for t in 0..d {
            dot += x[[i, t]] * c[[j, t]];
            nx += x[[i, t]] * x[[i, t]];
            nc += c[[j, t]] * c[[j, t]];
        }
        1.0 - dot / (nx.sqrt() * nc.sqrt())
    })
}

fn combinations(n: usize, r: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if cur.len() == r {
            visit(cur);
            return;
        }
        for i in start..=n - (r - cur.len()) {
            cur.push(i);
            rec(i + 1, n, r, cur, visit);
            cur.pop();
        }
    }
    rec(0, n, r, &mut Vec::with_capacity(r), visit);
}

/// Solve a square system by Gaussian elimination with partial pivoting;
/// `None` when singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Minimum transport cost over every basic feasible solution, found by
/// enumerating all `(n + m - 1)`-cell supports.
pub fn brute_force_ot(cost: &Array2<f64>, a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = cost.dim();
    let r = n + m - 1;
    let mut best = f64::INFINITY;
    combinations(n * m, r, &mut |cells| {
        // Row equations, then all column equations but the last.
        let mut mat = vec![vec![0.0; r]; r];
        let mut rhs = vec![0.0; r];
        for (var, &cell) in cells.iter().enumerate() {
            let (i, j) = (cell / m, cell % m);
            mat[i][var] = 1.0;
            if j < m - 1 {
                mat[n + j][var] = 1.0;
            }
        }
        rhs[..n].copy_from_slice(a);
        rhs[n..].copy_from_slice(&b[..m - 1]);
        if let Some(x) = solve(mat, rhs) {
            if x.iter().all(|&v| v >= -1e-12) {
                let c: f64 = cells.iter().zip(&x).map(|(&cell, &v)| v * cost[[cell / m, cell % m]]).sum();
                best = best.min(c);
            }
        }
    });
    best
}

/// Probability that a random positive outranks a random negative, ties one half.
pub fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !positive[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if positive[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / pairs
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
