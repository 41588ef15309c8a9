//! The extraction loop.
//!
//! Each epoch shuffles the training set into mini-batches, solves one
//! transport problem per batch against the current prototypes, keeps the
//! samples whose observed label matches their pseudo-label, and finally
//! refines the prototypes (and optionally the class counts) from the kept
//! subset. Features are fixed inputs; the learnable part is a linear head
//! retrained on every epoch's subset.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{train_on_subset, LinearModel, TrainConfig};
use crate::cost::{cosine_cost_matrix, euclidean_cost_matrix, CostMetric};
use crate::datamodel::{validate_dataset, EmbeddingSet, ExtractionResult, LabelTable, PrototypeBank};
use crate::labeling::{argmax_rows, build_prototypes, calibrate_prototypes, filter_clean};
use crate::metrics::{self, pseudo_label_quality};
use crate::ot::{sinkhorn, SinkhornConfig};
use crate::weighting::Weighting;
use crate::{Error, Result};

/// Source of the pseudo-labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Labeler {
    /// Argmax of the entropic transport plan.
    #[default]
    Transport,
    /// Closest prototype under the configured cost metric.
    NearestPrototype,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// EMA weight on the previous prototype.
    pub alpha: f64,
    pub weighting: WeightingConfig,
    pub cost: CostMetric,
    pub sinkhorn: SinkhornConfig,
    /// Replace class counts with the kept subset's counts after each epoch.
    pub update_counts_from_subset: bool,
    pub labeler: Labeler,
    pub classifier: TrainConfig,
    pub seed: u64,
}

/// Serializable form of [`Weighting`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum WeightingConfig {
    Effective { beta: f64 },
    Icf { r: f64 },
    Uniform,
}

impl From<WeightingConfig> for Weighting {
    fn from(w: WeightingConfig) -> Self {
        match w {
            WeightingConfig::Effective { beta } => Weighting::EffectiveNumber(beta),
            WeightingConfig::Icf { r } => Weighting::InverseFrequency(r),
            WeightingConfig::Uniform => Weighting::Uniform,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            alpha: 0.9,
            weighting: WeightingConfig::Effective { beta: 0.95 },
            cost: CostMetric::Cosine,
            sinkhorn: SinkhornConfig::default(),
            update_counts_from_subset: true,
            labeler: Labeler::Transport,
            classifier: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        self.sinkhorn.validate()
    }
}

/// Per-epoch summary. Rates are `None` when they cannot be computed (no
/// ground truth, empty subset, no test set).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub subset_size: usize,
    pub imbalance_factor: Option<f64>,
    pub noise_ratio: Option<f64>,
    pub per_class_counts: Vec<usize>,
    /// Pseudo-label quality on the kept subset.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub accuracy: Option<f64>,
    pub macro_auc: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Max-norm prototype change per class.
    pub prototype_drift: Vec<f64>,
    /// Imbalance factor of the unfiltered pseudo-labels.
    pub pseudo_imbalance_factor: Option<f64>,
    /// Noise ratio of the unfiltered pseudo-labels.
    pub pseudo_noise_ratio: Option<f64>,
    /// Batches whose transport solve hit the iteration budget.
    pub unconverged_batches: usize,
}

#[derive(Debug, Clone)]
pub struct EpochOutcome {
    pub result: ExtractionResult,
    pub report: EpochReport,
    pub prototypes: PrototypeBank,
    /// Soft pseudo-label scores, one row per training sample, `K` columns.
    pub soft_scores: Array2<f64>,
}

/// Prototypes of the full noisy training set.
pub fn initial_prototypes(train: &EmbeddingSet, labels: &LabelTable) -> Result<PrototypeBank> {
    validate_dataset(train, labels)?;
    build_prototypes(train.features(), labels.observed(), labels.num_classes())
}

struct BatchOutput {
    rows: Vec<usize>,
    pseudo: Vec<usize>,
    scores: Array2<f64>,
    converged: bool,
}

fn label_batch(
    train: &EmbeddingSet,
    rows: Vec<usize>,
    protos: &Array2<f64>,
    active: &[usize],
    weights: &[f64],
    cfg: &PipelineConfig,
) -> Result<BatchOutput> {
    let x = train.features().select(Axis(0), &rows);
    let cost = match cfg.cost {
        CostMetric::Cosine => cosine_cost_matrix(x.view(), protos.view())?,
        CostMetric::Euclidean => euclidean_cost_matrix(x.view(), protos.view()),
    };
    let (columns, scores, converged) = match cfg.labeler {
        Labeler::Transport => {
            let a = vec![1.0 / rows.len() as f64; rows.len()];
            let plan = sinkhorn(cost.view(), &a, weights, &cfg.sinkhorn)?;
            let scores = crate::labeling::soft_scores(&plan)?;
            (crate::labeling::pseudo_label(&plan)?, scores, plan.converged)
        }
        Labeler::NearestPrototype => {
            let mut scores = cost.mapv(|d| -d / cfg.sinkhorn.gamma);
            for mut row in scores.rows_mut() {
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                row.mapv_inplace(|v| (v - max).exp());
                let z = row.sum();
                row /= z;
            }
            (argmax_rows(cost.mapv(|d| -d).view()), scores, true)
        }
    };
    Ok(BatchOutput {
        pseudo: columns.into_iter().map(|c| active[c]).collect(),
        rows,
        scores,
        converged,
    })
}

#[cfg(feature = "parallel")]
fn label_batches(
    batches: Vec<Vec<usize>>,
    f: impl Fn(Vec<usize>) -> Result<BatchOutput> + Sync + Send,
) -> Result<Vec<BatchOutput>> {
    use rayon::prelude::*;
    batches.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn label_batches(batches: Vec<Vec<usize>>, f: impl Fn(Vec<usize>) -> Result<BatchOutput>) -> Result<Vec<BatchOutput>> {
    batches.into_iter().map(f).collect()
}

/// Seeded batch partition for `epoch`. A single batch keeps the input order.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if batch_size < n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
    }
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// One pass over the training set followed by prototype calibration.
pub fn run_epoch(
    train: &EmbeddingSet,
    labels: &LabelTable,
    prototypes: &PrototypeBank,
    cfg: &PipelineConfig,
    epoch: usize,
) -> Result<EpochOutcome> {
    cfg.validate()?;
    validate_dataset(train, labels)?;
    let k = labels.num_classes();
    if prototypes.num_classes() != k || prototypes.dim() != train.dim() {
        return Err(Error::ShapeMismatch(format!(
            "prototype bank is {}x{}, data has {} classes and dimension {}",
            prototypes.num_classes(),
            prototypes.dim(),
            k,
            train.dim()
        )));
    }

    let observed_counts = labels.observed_counts();
    let active: Vec<usize> = prototypes
        .defined_classes()
        .into_iter()
        .filter(|&j| observed_counts[j] > 0)
        .collect();
    if active.is_empty() {
        return Err(Error::EmptyInput("no class has both a prototype and observed samples"));
    }
    let support: Vec<usize> = active.iter().map(|&j| prototypes.support()[j]).collect();
    let weights = Weighting::from(cfg.weighting).compute(&active, &support)?;
    let protos = prototypes.prototypes().select(Axis(0), &active);

    let batches = epoch_batches(train.len(), cfg.batch_size, cfg.seed, epoch);
    let outputs = label_batches(batches, |rows| {
        label_batch(train, rows, &protos, &active, &weights.weights, cfg)
    })?;

    let n = train.len();
    let mut pseudo = vec![0usize; n];
    let mut soft = Array2::<f64>::zeros((n, k));
    let mut unconverged_batches = 0;
    for out in &outputs {
        if !out.converged {
            unconverged_batches += 1;
        }
        for (local, &row) in out.rows.iter().enumerate() {
            pseudo[row] = out.pseudo[local];
            for (c, &class) in active.iter().enumerate() {
                soft[[row, class]] = out.scores[[local, c]];
            }
        }
    }

    let truth = labels.truth();
    let result = filter_clean(labels.observed(), &pseudo, train.ids(), k, truth, epoch)?;

    let (precision, recall, accuracy, macro_auc) = match truth {
        Some(t) if !result.is_empty() => {
            let kept_truth: Vec<usize> = result.kept_rows.iter().map(|&r| t[r]).collect();
            let kept_scores = soft.select(Axis(0), &result.kept_rows);
            let q = pseudo_label_quality(&result.kept_labels, kept_scores.view(), &kept_truth)?;
            (Some(q.precision), Some(q.recall), Some(q.accuracy), q.macro_auc)
        }
        _ => (None, None, None, None),
    };

    let pseudo_counts = crate::datamodel::class_counts(&pseudo, k);
    let pseudo_imbalance_factor = metrics::imbalance_factor(&pseudo_counts).ok().map(|f| f.value);
    let pseudo_noise_ratio = match truth {
        Some(t) => Some(metrics::noise_ratio(&pseudo, t)?.value),
        None => None,
    };

    let updated = if result.is_empty() {
        prototypes.clone()
    } else {
        let kept_x = train.features().select(Axis(0), &result.kept_rows);
        let current = build_prototypes(kept_x.view(), &result.kept_labels, k)?;
        let calibrated = calibrate_prototypes(prototypes, &current, cfg.alpha)?;
        if cfg.update_counts_from_subset {
            let counts = result
                .stats
                .per_class_counts
                .iter()
                .zip(prototypes.support())
                .map(|(&new, &old)| if new > 0 { new } else { old })
                .collect();
            calibrated.with_support(counts)?
        } else {
            calibrated
        }
    };

    let prototype_drift = (0..k)
        .map(|j| {
            updated
                .prototype(j)
                .iter()
                .zip(prototypes.prototype(j))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();

    let report = EpochReport {
        epoch,
        subset_size: result.len(),
        imbalance_factor: result.stats.imbalance_factor,
        noise_ratio: result.stats.noise_ratio,
        per_class_counts: result.stats.per_class_counts.clone(),
        precision,
        recall,
        accuracy,
        macro_auc,
        test_accuracy: None,
        prototype_drift,
        pseudo_imbalance_factor,
        pseudo_noise_ratio,
        unconverged_batches,
    };
    Ok(EpochOutcome {
        result,
        report,
        prototypes: updated,
        soft_scores: soft,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub reports: Vec<EpochReport>,
    pub final_result: ExtractionResult,
    /// Classifier trained on the final subset; `None` if it was empty.
    pub model: Option<LinearModel>,
    pub prototypes: PrototypeBank,
}

/// Run all epochs. With a test set, each epoch's report carries the test
/// accuracy of a classifier trained on that epoch's subset.
pub fn run_pipeline(
    train: &EmbeddingSet,
    labels: &LabelTable,
    test: Option<(&EmbeddingSet, &LabelTable)>,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    run_pipeline_with(train, labels, test, cfg, |_| {})
}

/// [`run_pipeline`] with a callback invoked after every epoch.
pub fn run_pipeline_with(
    train: &EmbeddingSet,
    labels: &LabelTable,
    test: Option<(&EmbeddingSet, &LabelTable)>,
    cfg: &PipelineConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<PipelineOutput> {
    cfg.validate()?;
    if let Some((te, tl)) = test {
        validate_dataset(te, tl)?;
        if te.dim() != train.dim() {
            return Err(Error::ShapeMismatch("test features differ in dimension".into()));
        }
    }
    let k = labels.num_classes();
    let mut prototypes = initial_prototypes(train, labels)?;
    let mut reports = Vec::with_capacity(cfg.epochs);
    let mut last = None;
    let mut model = None;
    for epoch in 1..=cfg.epochs {
        let mut out = run_epoch(train, labels, &prototypes, cfg, epoch)?;
        model = if out.result.is_empty() {
            None
        } else {
            Some(train_on_subset(train, &out.result, k, &cfg.classifier)?)
        };
        if let (Some(m), Some((te, tl))) = (&model, test) {
            let truth = tl.truth().unwrap_or(tl.observed());
            out.report.test_accuracy = Some(metrics::accuracy(&m.predict(te)?, truth));
        }
        on_epoch(&out.report);
        reports.push(out.report);
        prototypes = out.prototypes;
        last = Some(out.result);
    }
    Ok(PipelineOutput {
        reports,
        final_result: last.expect("at least one epoch"),
        model,
        prototypes,
    })
}
