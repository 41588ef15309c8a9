//! Sample-to-prototype cost matrices.
//!
//! Only defined prototypes take part: column `k` of the result corresponds to
//! the `k`-th entry of [`PrototypeBank::defined_classes`].

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::datamodel::{EmbeddingSet, PrototypeBank};
use crate::{Error, Result};

const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CostMetric {
    #[default]
    Cosine,
    Euclidean,
}

impl CostMetric {
    pub fn cost(self, e: &EmbeddingSet, p: &PrototypeBank) -> Result<Array2<f64>> {
        match self {
            CostMetric::Cosine => cosine_cost(e, p),
            CostMetric::Euclidean => euclidean_cost(e, p),
        }
    }
}

impl std::str::FromStr for CostMetric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "euclidean" => Ok(Self::Euclidean),
            other => Err(format!("unknown cost metric `{other}`")),
        }
    }
}

/// `D_ij = 1 - cos(z_i, C_j)` over defined prototypes.
pub fn cosine_cost(e: &EmbeddingSet, p: &PrototypeBank) -> Result<Array2<f64>> {
    let protos = defined_rows(e, p)?;
    cosine_cost_matrix(e.features(), protos.view())
}

/// `D_ij = ||z_i - C_j||_2` over defined prototypes.
pub fn euclidean_cost(e: &EmbeddingSet, p: &PrototypeBank) -> Result<Array2<f64>> {
    let protos = defined_rows(e, p)?;
    Ok(euclidean_cost_matrix(e.features(), protos.view()))
}

fn defined_rows(e: &EmbeddingSet, p: &PrototypeBank) -> Result<Array2<f64>> {
    if e.dim() != p.dim() {
        return Err(Error::ShapeMismatch(format!(
            "features have dimension {}, prototypes {}",
            e.dim(),
            p.dim()
        )));
    }
    let classes = p.defined_classes();
    if classes.is_empty() {
        return Err(Error::EmptyInput("no defined prototypes"));
    }
    Ok(p.prototypes().select(ndarray::Axis(0), &classes))
}

/// Cosine cost between the rows of two matrices.
pub fn cosine_cost_matrix(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let xn = unit_rows(x, "sample")?;
    let yn = unit_rows(y, "prototype")?;
    let mut d = xn.dot(&yn.t());
    // Rounding can push |cos| a hair past 1.
    d.mapv_inplace(|c| (1.0 - c).clamp(0.0, 2.0));
    Ok(d)
}

/// Euclidean distance between the rows of two matrices.
pub fn euclidean_cost_matrix(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((x.nrows(), y.nrows()), |(i, j)| distance(x.row(i), y.row(j)))
}

fn unit_rows(m: ArrayView2<'_, f64>, what: &'static str) -> Result<Array2<f64>> {
    let mut out = m.to_owned();
    for (index, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm < MIN_NORM {
            return Err(Error::ZeroNormVector { what, index });
        }
        row /= norm;
    }
    Ok(out)
}

pub(crate) fn distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
