//! Transportation simplex for small dense instances.
//!
//! North-west-corner start, potentials (MODI) for reduced costs, and Bland's
//! rule for both the entering and the leaving cell. The basis always holds
//! exactly `n + m - 1` cells, degenerate zero-flow cells included, so it stays
//! a spanning tree of the bipartite row/column graph.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2};

use super::{check_cost, check_marginal};
use crate::{Error, Result};

/// Largest `n * m` accepted by [`exact_ot`].
pub const EXACT_CELL_CAP: usize = 1024;

const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub plan: Array2<f64>,
    pub cost: f64,
    pub pivots: usize,
}

/// Exact minimum of `<T, D>` over plans with marginals `a` and `b`.
pub fn exact_ot(cost: ArrayView2<'_, f64>, a: &[f64], b: &[f64]) -> Result<ExactSolution> {
    let (n, m) = cost.dim();
    if n * m > EXACT_CELL_CAP {
        return Err(Error::InstanceTooLarge {
            cells: n * m,
            cap: EXACT_CELL_CAP,
        });
    }
    check_cost(cost, a, b)?;
    check_marginal("row", a)?;
    check_marginal("column", b)?;

    let mut tableau = Tableau::north_west(cost, a, b);
    let scale = cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let eps = 1e-12 * (1.0 + scale);

    let mut pivots = 0;
    loop {
        let (u, v) = tableau.potentials();
        let entering = (0..n * m).find(|&cell| {
            !tableau.in_basis[cell] && cost[[cell / m, cell % m]] - u[cell / m] - v[cell % m] < -eps
        });
        let Some(entering) = entering else { break };
        tableau.pivot(entering);
        pivots += 1;
        if pivots > MAX_PIVOTS {
            return Err(Error::NumericalBreakdown(format!(
                "transportation simplex exceeded {MAX_PIVOTS} pivots"
            )));
        }
    }

    let plan = Array2::from_shape_fn((n, m), |(i, j)| tableau.flow[i * m + j].max(0.0));
    let total = plan.iter().zip(cost.iter()).map(|(x, c)| x * c).sum();
    Ok(ExactSolution {
        plan,
        cost: total,
        pivots,
    })
}

struct Tableau<'a> {
    cost: ArrayView2<'a, f64>,
    n: usize,
    m: usize,
    flow: Vec<f64>,
    in_basis: Vec<bool>,
}

impl<'a> Tableau<'a> {
    fn north_west(cost: ArrayView2<'a, f64>, a: &[f64], b: &[f64]) -> Self {
        let (n, m) = cost.dim();
        let mut supply = a.to_vec();
        let mut demand = b.to_vec();
        let mut flow = vec![0.0; n * m];
        let mut in_basis = vec![false; n * m];
        let (mut i, mut j) = (0, 0);
        loop {
            let q = supply[i].min(demand[j]);
            flow[i * m + j] = q;
            in_basis[i * m + j] = true;
            supply[i] -= q;
            demand[j] -= q;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if (supply[i] <= demand[j] && i < n - 1) || j == m - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self {
            cost,
            n,
            m,
            flow,
            in_basis,
        }
    }

    /// Node ids: rows `0..n`, columns `n..n+m`.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n + self.m];
        for cell in (0..self.n * self.m).filter(|&c| self.in_basis[c]) {
            let (i, j) = (cell / self.m, cell % self.m);
            adj[i].push(self.n + j);
            adj[self.n + j].push(i);
        }
        adj
    }

    fn potentials(&self) -> (Vec<f64>, Vec<f64>) {
        let adj = self.adjacency();
        let mut pot = vec![f64::NAN; self.n + self.m];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0]);
        while let Some(node) = queue.pop_front() {
            for &next in &adj[node] {
                if pot[next].is_nan() {
                    let (i, j) = if node < self.n {
                        (node, next - self.n)
                    } else {
                        (next, node - self.n)
                    };
                    // c_ij = u_i + v_j on basic cells.
                    pot[next] = self.cost[[i, j]] - pot[node];
                    queue.push_back(next);
                }
            }
        }
        let v = pot.split_off(self.n);
        (pot, v)
    }

    fn pivot(&mut self, entering: usize) {
        let (ei, ej) = (entering / self.m, entering % self.m);
        let adj = self.adjacency();

        // Tree path from row `ei` to column `ej`.
        let mut parent = vec![usize::MAX; self.n + self.m];
        parent[ei] = ei;
        let mut queue = VecDeque::from([ei]);
        while let Some(node) = queue.pop_front() {
            for &next in &adj[node] {
                if parent[next] == usize::MAX {
                    parent[next] = node;
                    queue.push_back(next);
                }
            }
        }

        // Walk back from the column; cells alternate -, +, -, ... and the
        // first and last are both donors.
        let mut cycle = Vec::new();
        let mut node = self.n + ej;
        while node != ei {
            let prev = parent[node];
            let cell = if node < self.n {
                node * self.m + (prev - self.n)
            } else {
                prev * self.m + (node - self.n)
            };
            cycle.push(cell);
            node = prev;
        }

        let theta = cycle
            .iter()
            .step_by(2)
            .map(|&c| self.flow[c])
            .fold(f64::INFINITY, f64::min);
        let leaving = cycle
            .iter()
            .step_by(2)
            .copied()
            .filter(|&c| self.flow[c] <= theta)
            .min()
            .expect("cycle has a donor cell");

        for (k, &cell) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                self.flow[cell] -= theta;
            } else {
                self.flow[cell] += theta;
            }
        }
        self.flow[leaving] = 0.0;
        self.in_basis[leaving] = false;
        self.flow[entering] = theta;
        self.in_basis[entering] = true;
    }
}
