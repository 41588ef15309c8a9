//! Discrete optimal transport between samples and prototypes.
//!
//! [`sinkhorn`] solves the entropy-regularized problem
//! `min <T, D> - γ H(T)` over plans with prescribed marginals.
//! [`exact_ot`] solves the unregularized linear program on small instances and
//! serves as a reference in tests.

mod exact;
mod sinkhorn;

pub use exact::{exact_ot, ExactSolution, EXACT_CELL_CAP};
pub use sinkhorn::{sinkhorn, SinkhornConfig};

use ndarray::ArrayView2;

use crate::{Error, Result};

/// Transport cost, entropy and regularized objective of a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanObjective {
    pub transport_cost: f64,
    /// `H(T) = -Σ T_ij ln T_ij`, with `0 ln 0 = 0`.
    pub entropy: f64,
    /// `<T, D> - γ H(T)`.
    pub regularized: f64,
}

/// Evaluate `<T, D>`, `H(T)` and `<T, D> - γ H(T)`.
pub fn plan_objective(plan: ArrayView2<'_, f64>, cost: ArrayView2<'_, f64>, gamma: f64) -> Result<PlanObjective> {
    if plan.dim() != cost.dim() {
        return Err(Error::ShapeMismatch(format!(
            "plan is {:?}, cost is {:?}",
            plan.dim(),
            cost.dim()
        )));
    }
    let mut transport_cost = 0.0;
    let mut entropy = 0.0;
    for (&t, &d) in plan.iter().zip(cost.iter()) {
        transport_cost += t * d;
        if t > 0.0 {
            entropy -= t * t.ln();
        }
    }
    Ok(PlanObjective {
        transport_cost,
        entropy,
        regularized: transport_cost - gamma * entropy,
    })
}

/// Marginals must be positive and sum to one within this tolerance.
pub(crate) const MARGINAL_SUM_TOL: f64 = 1e-9;

pub(crate) fn check_marginal(name: &str, m: &[f64]) -> Result<()> {
    if m.is_empty() {
        return Err(Error::InfeasibleMarginals(format!("{name} marginal is empty")));
    }
    if let Some(i) = m.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InfeasibleMarginals(format!(
            "{name} marginal entry {i} is {} (must be positive)",
            m[i]
        )));
    }
    let s: f64 = m.iter().sum();
    if (s - 1.0).abs() > MARGINAL_SUM_TOL {
        return Err(Error::InfeasibleMarginals(format!("{name} marginal sums to {s}")));
    }
    Ok(())
}

pub(crate) fn check_cost(cost: ArrayView2<'_, f64>, a: &[f64], b: &[f64]) -> Result<()> {
    if cost.nrows() != a.len() || cost.ncols() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "cost is {:?}, marginals have lengths {} and {}",
            cost.dim(),
            a.len(),
            b.len()
        )));
    }
    for ((i, j), v) in cost.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteCost(i, j));
        }
    }
    Ok(())
}
