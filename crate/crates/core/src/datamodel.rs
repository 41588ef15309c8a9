//! Shared data types.
//!
//! Everything here is immutable once built. Constructors validate their own
//! invariants; [`validate_dataset`] checks the cross-type ones.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An `n x d` feature matrix with one id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<u64>,
    features: Array2<f64>,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<u64>, features: Array2<f64>) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::EmptyInput("embedding set needs at least one row and column"));
        }
        if ids.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} ids for {} feature rows",
                ids.len(),
                n
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        for ((row, col), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature { row, col });
            }
        }
        Ok(Self { ids, features })
    }

    /// Rows get ids `0..n`.
    pub fn from_features(features: Array2<f64>) -> Result<Self> {
        let ids = (0..features.nrows() as u64).collect();
        Self::new(ids, features)
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// New set made of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let features = self.features.select(ndarray::Axis(0), rows);
        let ids = rows.iter().map(|&r| self.ids[r]).collect();
        Self::new(ids, features)
    }

    /// Every feature multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.ids.clone(), &self.features * factor)
    }
}

/// Observed (possibly noisy) labels, optional ground truth, and the class count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    observed: Vec<usize>,
    truth: Option<Vec<usize>>,
    num_classes: usize,
}

impl LabelTable {
    pub fn new(observed: Vec<usize>, truth: Option<Vec<usize>>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::EmptyInput("class count must be positive"));
        }
        check_labels(&observed, num_classes)?;
        if let Some(t) = &truth {
            if t.len() != observed.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} truth labels for {} observed labels",
                    t.len(),
                    observed.len()
                )));
            }
            check_labels(t, num_classes)?;
        }
        Ok(Self {
            observed,
            truth,
            num_classes,
        })
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn truth(&self) -> Option<&[usize]> {
        self.truth.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    /// Per-class counts of the observed labels.
    pub fn observed_counts(&self) -> Vec<usize> {
        class_counts(&self.observed, self.num_classes)
    }

    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let observed = rows.iter().map(|&r| self.observed[r]).collect();
        let truth = self
            .truth
            .as_ref()
            .map(|t| rows.iter().map(|&r| t[r]).collect());
        Self::new(observed, truth, self.num_classes)
    }
}

fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    for (index, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                num_classes,
            });
        }
    }
    Ok(())
}

/// Count occurrences of each class in `labels`. Labels must be `< num_classes`.
pub fn class_counts(labels: &[usize], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

/// Cross-check an embedding set against its labels.
pub fn validate_dataset(embeddings: &EmbeddingSet, labels: &LabelTable) -> Result<()> {
    if embeddings.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} embeddings but {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    // Both constructors already enforce their own invariants; re-check so a
    // hand-built pair cannot slip through.
    check_labels(labels.observed(), labels.num_classes())?;
    if let Some(t) = labels.truth() {
        check_labels(t, labels.num_classes())?;
    }
    for ((row, col), v) in embeddings.features().indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteFeature { row, col });
        }
    }
    Ok(())
}

/// `K x d` class prototypes with their supporting sample counts.
///
/// A class with zero support has an undefined prototype. Its row is kept
/// (zeros for a fresh bank, the carried value after calibration) but every
/// consumer must consult [`PrototypeBank::is_defined`].
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    prototypes: Array2<f64>,
    support: Vec<usize>,
    defined: Vec<bool>,
}

impl PrototypeBank {
    /// A bank whose defined classes are exactly those with positive support.
    pub fn new(prototypes: Array2<f64>, support: Vec<usize>) -> Result<Self> {
        let defined = support.iter().map(|&s| s > 0).collect();
        Self::with_flags(prototypes, support, defined)
    }

    /// A bank with explicit definedness flags (a calibrated class may keep a
    /// prototype after its support dropped to zero).
    pub fn with_flags(prototypes: Array2<f64>, support: Vec<usize>, defined: Vec<bool>) -> Result<Self> {
        let k = prototypes.nrows();
        if k == 0 || prototypes.ncols() == 0 {
            return Err(Error::EmptyInput("prototype bank needs at least one class and dimension"));
        }
        if support.len() != k || defined.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "{} prototypes, {} support counts, {} flags",
                k,
                support.len(),
                defined.len()
            )));
        }
        for ((row, col), v) in prototypes.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature { row, col });
            }
        }
        Ok(Self {
            prototypes,
            support,
            defined,
        })
    }

    pub fn prototypes(&self) -> ArrayView2<'_, f64> {
        self.prototypes.view()
    }

    pub fn prototype(&self, class: usize) -> ArrayView1<'_, f64> {
        self.prototypes.row(class)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn is_defined(&self, class: usize) -> bool {
        self.defined[class]
    }

    pub fn defined_flags(&self) -> &[bool] {
        &self.defined
    }

    /// Indices of classes with a defined prototype, ascending.
    pub fn defined_classes(&self) -> Vec<usize> {
        (0..self.num_classes()).filter(|&j| self.defined[j]).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.nrows()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.ncols()
    }

    /// Same prototypes with replaced support counts; flags are unchanged.
    pub fn with_support(&self, support: Vec<usize>) -> Result<Self> {
        Self::with_flags(self.prototypes.clone(), support, self.defined.clone())
    }
}

/// Entropic transport plan between `n` samples and `m` prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub plan: Array2<f64>,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
    pub regularization: f64,
    pub iterations_used: usize,
    /// Max-norm residual of both marginal constraints for `plan`.
    pub marginal_violation: f64,
    /// False when the solver ran out of iterations before reaching its tolerance.
    pub converged: bool,
}

/// Attached to a plan that did not reach the requested tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceWarning {
    pub iterations: usize,
    pub achieved_residual: f64,
    pub tolerance: f64,
}

impl std::fmt::Display for ConvergenceWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "sinkhorn stopped after {} iterations with residual {:.3e} (tolerance {:.3e})",
            self.iterations, self.achieved_residual, self.tolerance
        )
    }
}

impl TransportPlan {
    pub fn nrows(&self) -> usize {
        self.plan.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.plan.ncols()
    }

    /// Row-sum and column-sum residuals in max-norm.
    pub fn residuals(&self) -> (f64, f64) {
        marginal_residuals(self.plan.view(), &self.row_marginal, &self.col_marginal)
    }
}

pub(crate) fn marginal_residuals(plan: ArrayView2<'_, f64>, a: &[f64], b: &[f64]) -> (f64, f64) {
    let row = plan
        .rows()
        .into_iter()
        .zip(a)
        .map(|(r, &ai)| (r.sum() - ai).abs())
        .fold(0.0, f64::max);
    let col = plan
        .columns()
        .into_iter()
        .zip(b)
        .map(|(c, &bj)| (c.sum() - bj).abs())
        .fold(0.0, f64::max);
    (row, col)
}

/// How the prototype-side mass was derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum WeightingScheme {
    Uniform,
    EffectiveNumber { beta: f64 },
    InverseFrequency { r: f64 },
}

/// Probability vector over the active classes.
///
/// `classes[k]` is the class index that `weights[k]` belongs to; classes
/// without a defined prototype are not listed.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub classes: Vec<usize>,
    pub weights: Vec<f64>,
    pub scheme: WeightingScheme,
}

impl ClassWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weight of `class`, or `None` when the class was excluded.
    pub fn weight_of(&self, class: usize) -> Option<f64> {
        self.classes
            .iter()
            .position(|&c| c == class)
            .map(|k| self.weights[k])
    }
}

/// Summary of a kept subset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetStats {
    /// `None` when the subset is empty.
    pub imbalance_factor: Option<f64>,
    /// `None` without ground truth.
    pub noise_ratio: Option<f64>,
    pub per_class_counts: Vec<usize>,
}

/// Output of one labeling pass over the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    /// Row positions (into the input set) of kept samples, ascending.
    pub kept_rows: Vec<usize>,
    /// Ids of kept samples, aligned with `kept_rows`.
    pub kept_ids: Vec<u64>,
    /// One pseudo-label per input sample.
    pub pseudo_labels: Vec<usize>,
    /// Retained label per kept sample (observed label, equal to the pseudo-label).
    pub kept_labels: Vec<usize>,
    pub epoch: usize,
    pub stats: SubsetStats,
}

impl ExtractionResult {
    pub fn len(&self) -> usize {
        self.kept_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_rows.is_empty()
    }

    /// Kept flag per input row.
    pub fn kept_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.pseudo_labels.len()];
        for &r in &self.kept_rows {
            mask[r] = true;
        }
        mask
    }
}
