//! Linear softmax head trained on the kept subset, and the nearest-prototype
//! baseline.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::cost::{cosine_cost_matrix, euclidean_cost_matrix, CostMetric};
use crate::datamodel::{EmbeddingSet, ExtractionResult, PrototypeBank};
use crate::labeling::argmax_rows;
use crate::{Error, Result};

/// Full-batch gradient descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Fixed step size; `None` uses [`conservative_step`].
    pub step: Option<f64>,
    /// Ridge penalty on the weight matrix (not the bias).
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            step: None,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `K x d`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// Objective before each step, then once more after the last step.
    pub training_log: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            weights: Array2::zeros((num_classes, dim)),
            bias: Array1::zeros(num_classes),
            training_log: Vec::new(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.weights.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "model expects dimension {}, got {}",
                self.weights.ncols(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.weights.t()) + &self.bias)
    }

    /// Argmax of the logits, lowest class on ties.
    pub fn predict(&self, e: &EmbeddingSet) -> Result<Vec<usize>> {
        Ok(argmax_rows(self.logits(e.features())?.view()))
    }
}

/// Mean cross-entropy plus `l2/2 ||W||²`, with its gradient.
pub fn loss_and_gradient(
    weights: ArrayView2<'_, f64>,
    bias: &Array1<f64>,
    x: ArrayView2<'_, f64>,
    y: &[usize],
    l2: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let mut probs = x.dot(&weights.t()) + bias;
    let mut loss = 0.0;
    for (mut row, &label) in probs.rows_mut().into_iter().zip(y) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        loss += z.ln() - (row[label].ln());
        row /= z;
    }
    loss /= n;
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();

    // probs becomes (p - onehot) / n.
    for (mut row, &label) in probs.rows_mut().into_iter().zip(y) {
        row[label] -= 1.0;
        row /= n;
    }
    let grad_w = probs.t().dot(&x) + &(&weights * l2);
    let grad_b = probs.sum_axis(Axis(0));
    (loss, grad_w, grad_b)
}

/// `1 / L` with `L = max ||(x, 1)||² + l2`, a bound on the Hessian of the
/// objective, so plain gradient descent never increases the loss.
pub fn conservative_step(x: ArrayView2<'_, f64>, l2: f64) -> f64 {
    let max_sq = x.rows().into_iter().map(|r| r.dot(&r)).fold(0.0, f64::max);
    1.0 / (max_sq + 1.0 + l2)
}

/// Train from zero initialization by full-batch gradient descent.
pub fn train_softmax(x: ArrayView2<'_, f64>, y: &[usize], num_classes: usize, cfg: &TrainConfig) -> Result<LinearModel> {
    if x.nrows() == 0 {
        return Err(Error::EmptySubset);
    }
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch(x.nrows(), y.len()));
    }
    if let Some((index, &label)) = y.iter().enumerate().find(|(_, &l)| l >= num_classes) {
        return Err(Error::LabelOutOfRange {
            index,
            label,
            num_classes,
        });
    }
    if !(cfg.l2 >= 0.0) {
        return Err(Error::InvalidConfig(format!("l2 must be nonnegative, got {}", cfg.l2)));
    }
    let step = cfg.step.unwrap_or_else(|| conservative_step(x, cfg.l2));
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidConfig(format!("step must be positive, got {step}")));
    }

    let mut model = LinearModel::zeros(num_classes, x.ncols());
    let mut log = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        let (loss, gw, gb) = loss_and_gradient(model.weights.view(), &model.bias, x, y, cfg.l2);
        log.push(loss);
        model.weights.scaled_add(-step, &gw);
        model.bias.scaled_add(-step, &gb);
    }
    let (loss, _, _) = loss_and_gradient(model.weights.view(), &model.bias, x, y, cfg.l2);
    log.push(loss);
    if !loss.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NumericalBreakdown("classifier parameters diverged".into()));
    }
    model.training_log = log;
    Ok(model)
}

/// Train on the kept rows of an extraction result with their retained labels.
pub fn train_on_subset(
    e: &EmbeddingSet,
    subset: &ExtractionResult,
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<LinearModel> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let x = e.features().select(Axis(0), &subset.kept_rows);
    train_softmax(x.view(), &subset.kept_labels, num_classes, cfg)
}

/// Label each sample with its closest prototype (lowest class on ties).
pub fn nearest_prototype_predict(p: &PrototypeBank, e: &EmbeddingSet, metric: CostMetric) -> Result<Vec<usize>> {
    if let Some(j) = (0..p.num_classes()).find(|&j| !p.is_defined(j)) {
        return Err(Error::UndefinedPrototype(j));
    }
    if p.dim() != e.dim() {
        return Err(Error::ShapeMismatch(format!(
            "features have dimension {}, prototypes {}",
            e.dim(),
            p.dim()
        )));
    }
    let d = match metric {
        CostMetric::Cosine => cosine_cost_matrix(e.features(), p.prototypes())?,
        CostMetric::Euclidean => euclidean_cost_matrix(e.features(), p.prototypes()),
    };
    Ok(argmax_rows(d.mapv(|v| -v).view()))
}
