use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_cost, check_marginal};
use crate::datamodel::{marginal_residuals, ConvergenceWarning, TransportPlan};
use crate::{Error, Result};

/// Sinkhorn solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    /// Entropic regularization `γ`.
    pub gamma: f64,
    pub max_iterations: usize,
    /// Stop once the column-marginal residual (max-norm) drops to this value.
    pub tolerance: f64,
    /// Work on dual potentials in the log domain, with Newton-accelerated
    /// column updates. `false` runs textbook Sinkhorn on kernel scalings.
    pub stabilized: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-2,
            max_iterations: 1000,
            tolerance: 1e-9,
            stabilized: true,
        }
    }
}

impl SinkhornConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidConfig(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

impl TransportPlan {
    /// `Some` when the solver stopped on its iteration budget.
    pub fn convergence_warning(&self, tolerance: f64) -> Option<ConvergenceWarning> {
        (!self.converged).then_some(ConvergenceWarning {
            iterations: self.iterations_used,
            achieved_residual: self.marginal_violation,
            tolerance,
        })
    }
}

/// Entropic OT plan between row marginal `a` and column marginal `b`.
///
/// Each iteration ends with a row update, so row sums match `a` up to
/// rounding and only the column residual is tested. Running out of
/// iterations is not an error: the plan comes back with `converged == false`
/// and the achieved residual.
pub fn sinkhorn(cost: ArrayView2<'_, f64>, a: &[f64], b: &[f64], cfg: &SinkhornConfig) -> Result<TransportPlan> {
    cfg.validate()?;
    check_cost(cost, a, b)?;
    check_marginal("row", a)?;
    check_marginal("column", b)?;

    let (plan, iterations_used, converged) = if cfg.stabilized {
        log_domain(cost, a, b, cfg)
    } else {
        scaling_domain(cost, a, b, cfg)?
    };
    let (row_res, col_res) = marginal_residuals(plan.view(), a, b);
    Ok(TransportPlan {
        plan,
        row_marginal: a.to_vec(),
        col_marginal: b.to_vec(),
        regularization: cfg.gamma,
        iterations_used,
        marginal_violation: row_res.max(col_res),
        converged,
    })
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Halvings tried by the line search before falling back to a plain update.
const MAX_HALVINGS: usize = 40;

/// Log-domain solver on the potentials `f` (rows) and `g` (columns).
///
/// Every iteration performs the row update, so row sums match `a`, then
/// tests the column residual. The column potentials then take a damped
/// Newton step on the concave semi-dual
/// `φ(g) = Σ_j b_j g_j + Σ_i a_i f_i(g)`, whose gradient is the column
/// residual and whose Hessian is `K x K`. If the line search finds no
/// progress, the plain column update is used instead.
fn log_domain(cost: ArrayView2<'_, f64>, a: &[f64], b: &[f64], cfg: &SinkhornConfig) -> (Array2<f64>, usize, bool) {
    let (n, m) = cost.dim();
    let gamma = cfg.gamma;
    let c = cost.as_standard_layout().into_owned();
    let ct = cost.t().as_standard_layout().into_owned();
    let c = c.as_slice().expect("standard layout");
    let ct = ct.as_slice().expect("standard layout");
    let ln_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let ln_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();

    let row_update = |g: &[f64], f: &mut [f64]| {
        for i in 0..n {
            let d = &c[i * m..(i + 1) * m];
            let lse = log_sum_exp(g.iter().zip(d).map(|(gj, dij)| (gj - dij) / gamma));
            f[i] = gamma * (ln_a[i] - lse);
        }
    };
    let col_update = |f: &[f64], g: &mut [f64]| {
        for j in 0..m {
            let d = &ct[j * n..(j + 1) * n];
            let lse = log_sum_exp(f.iter().zip(d).map(|(fi, dij)| (fi - dij) / gamma));
            g[j] = gamma * (ln_b[j] - lse);
        }
    };
    let semi_dual = |f: &[f64], g: &[f64]| -> f64 {
        let fs: f64 = f.iter().zip(a).map(|(fi, ai)| fi * ai).sum();
        let gs: f64 = g.iter().zip(b).map(|(gj, bj)| gj * bj).sum();
        fs + gs
    };
    // Column sums of the plan and its max-norm residual.
    let columns = |f: &[f64], g: &[f64], col: &mut [f64]| -> f64 {
        col.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let d = &c[i * m..(i + 1) * m];
            for j in 0..m {
                col[j] += ((f[i] + g[j] - d[j]) / gamma).exp();
            }
        }
        col.iter().zip(b).map(|(s, bj)| (s - bj).abs()).fold(0.0, f64::max)
    };

    // No optimal potential needs to move further than the cost range plus
    // the spread of the log-marginals.
    let spread = |v: &[f64]| {
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        hi - lo
    };
    let max_step = spread(c) + gamma * (spread(&ln_a) + spread(&ln_b)) + gamma;

    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    col_update(&f, &mut g);
    let mut col = vec![0.0; m];
    let mut trial_f = vec![0.0; n];
    let mut trial_g = vec![0.0; m];
    let mut trial_col = vec![0.0; m];
    let mut iterations = 0;
    let mut converged = false;

    row_update(&g, &mut f);
    let mut residual = columns(&f, &g, &mut col);
    while iterations < cfg.max_iterations {
        iterations += 1;
        if residual <= cfg.tolerance {
            converged = true;
            break;
        }
        let grad: Vec<f64> = b.iter().zip(&col).map(|(bj, cj)| bj - cj).collect();
        let accepted = newton_direction(c, &f, &g, a, &col, &grad, gamma).and_then(|dir| {
            let slope: f64 = grad.iter().zip(&dir).map(|(p, q)| p * q).sum();
            let phi = semi_dual(&f, &g);
            let longest = dir.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
            let mut t = (max_step / longest).min(1.0);
            for _ in 0..MAX_HALVINGS {
                for j in 0..m {
                    trial_g[j] = g[j] + t * dir[j];
                }
                row_update(&trial_g, &mut trial_f);
                let trial_res = columns(&trial_f, &trial_g, &mut trial_col);
                let gain = semi_dual(&trial_f, &trial_g) - phi;
                // Armijo ascent, or a residual decrease once the objective
                // change is below rounding.
                let in_noise = gain.abs() <= 1e-13 * (1.0 + phi.abs());
                if trial_res.is_finite() && (gain >= 1e-4 * t * slope || (in_noise && trial_res < residual)) {
                    return Some(trial_res);
                }
                t *= 0.5;
            }
            None
        });
        match accepted {
            Some(trial_res) => {
                std::mem::swap(&mut f, &mut trial_f);
                std::mem::swap(&mut g, &mut trial_g);
                std::mem::swap(&mut col, &mut trial_col);
                residual = trial_res;
            }
            None => {
                col_update(&f, &mut g);
                row_update(&g, &mut f);
                residual = columns(&f, &g, &mut col);
            }
        }
    }

    let plan = Array2::from_shape_fn((n, m), |(i, j)| ((f[i] + g[j] - c[i * m + j]) / gamma).exp());
    (plan, iterations, converged)
}

/// Ascent direction for the column potentials: solves
/// `(H + λI) Δ = b - col` with `H = (diag(col) - Σ_i T_i T_iᵀ / a_i) / γ`,
/// the negated semi-dual Hessian. `H` is singular along the all-ones vector,
/// which the small ridge `λ` absorbs.
fn newton_direction(
    c: &[f64],
    f: &[f64],
    g: &[f64],
    a: &[f64],
    col: &[f64],
    grad: &[f64],
    gamma: f64,
) -> Option<Vec<f64>> {
    let m = g.len();
    let mut h = vec![vec![0.0; m]; m];
    let mut row = vec![0.0; m];
    for (i, (fi, ai)) in f.iter().zip(a).enumerate() {
        let d = &c[i * m..(i + 1) * m];
        for j in 0..m {
            row[j] = ((fi + g[j] - d[j]) / gamma).exp();
        }
        for p in 0..m {
            let rp = row[p] / ai;
            if rp == 0.0 {
                continue;
            }
            for q in 0..m {
                h[p][q] -= rp * row[q];
            }
        }
    }
    for p in 0..m {
        h[p][p] += col[p];
    }
    let scale = (0..m).map(|p| h[p][p]).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let ridge = 1e-12 * scale;
    for (p, hp) in h.iter_mut().enumerate() {
        for v in hp.iter_mut() {
            *v /= gamma;
        }
        hp[p] += ridge / gamma;
    }
    // Both the gradient and the step live orthogonal to the all-ones vector;
    // rounding must not leak into the null direction.
    let mut dir = solve_spd(h, centered(grad))?;
    dir = centered(&dir);
    dir.iter().all(|v| v.is_finite()).then_some(dir)
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

/// Cholesky solve of a small symmetric positive definite system.
fn solve_spd(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    for i in 0..n {
        for k in 0..i {
            b[i] -= a[i][k] * b[k];
        }
        b[i] /= a[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            b[i] -= a[k][i] * b[k];
        }
        b[i] /= a[i][i];
    }
    Some(b)
}

fn scaling_domain(
    cost: ArrayView2<'_, f64>,
    a: &[f64],
    b: &[f64],
    cfg: &SinkhornConfig,
) -> Result<(Array2<f64>, usize, bool)> {
    let (n, m) = cost.dim();
    let kernel = cost.mapv(|d| (-d / cfg.gamma).exp());
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; m];
    let mut iterations = 0;
    let mut converged = false;

    let breakdown = |what: &str, idx: usize| {
        Error::NumericalBreakdown(format!(
            "{what} {idx} of the Gibbs kernel vanished at gamma {}; use the log-domain solver",
            cfg.gamma
        ))
    };

    while iterations < cfg.max_iterations {
        iterations += 1;
        for j in 0..m {
            let s: f64 = (0..n).map(|i| kernel[[i, j]] * u[i]).sum();
            if !(s > 0.0) || !s.is_finite() {
                return Err(breakdown("column", j));
            }
            v[j] = b[j] / s;
        }
        for i in 0..n {
            let s: f64 = (0..m).map(|j| kernel[[i, j]] * v[j]).sum();
            if !(s > 0.0) || !s.is_finite() {
                return Err(breakdown("row", i));
            }
            u[i] = a[i] / s;
        }
        let residual = (0..m)
            .map(|j| ((0..n).map(|i| u[i] * kernel[[i, j]] * v[j]).sum::<f64>() - b[j]).abs())
            .fold(0.0, f64::max);
        if residual <= cfg.tolerance {
            converged = true;
            break;
        }
    }
    let plan = Array2::from_shape_fn((n, m), |(i, j)| u[i] * kernel[[i, j]] * v[j]);
    Ok((plan, iterations, converged))
}
