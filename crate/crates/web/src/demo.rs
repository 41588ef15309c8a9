//! Computations behind the browser page, kept free of JavaScript types so they
//! run and test natively.

use ndarray::Axis;
use serde::Serialize;

use otsieve::cost::cosine_cost_matrix;
use otsieve::labeling::{argmax_rows, prototypes_of};
use otsieve::ot::{sinkhorn, SinkhornConfig};
use otsieve::pipeline::{run_pipeline_with, PipelineConfig, WeightingConfig};
use otsieve::simkit::{longtail_counts, sample_gaussian_mixture, NoiseModel, SimSpec};
use otsieve::weighting::effective_number_weights;
use otsieve::Result;

/// Effective-number weights for a long-tailed profile.
pub fn profile_weights(classes: usize, head: usize, imbalance: f64, beta: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    let counts = longtail_counts(classes, head, imbalance);
    let w = effective_number_weights(&counts, beta)?;
    Ok((counts, w.weights))
}

/// A small transport problem between mixture samples and their class means.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSample {
    /// Row-major `rows x cols`, each row scaled to sum to one.
    pub conditional: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    /// True class of each row; rows are sorted by it.
    pub truth: Vec<usize>,
    pub pseudo: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
}

pub fn plan_sample(gamma: f64, beta: f64, seed: u64) -> Result<PlanSample> {
    let spec = SimSpec {
        num_classes: 4,
        dim: 4,
        head_count: 48,
        imbalance_factor: 8.0,
        cluster_separation: 2.5,
        noise: NoiseModel::Joint { eta: 0.0 },
        test_per_class: 1,
        seed,
        ..SimSpec::default()
    };
    let ds = sample_gaussian_mixture(&spec)?;
    let truth = ds.train_labels.observed().to_vec();
    let bank = prototypes_of(&ds.train, &truth, spec.num_classes)?;
    let cost = cosine_cost_matrix(ds.train.features(), bank.prototypes())?;
    let n = ds.train.len();
    let a = vec![1.0 / n as f64; n];
    let b = effective_number_weights(bank.support(), beta)?.weights;
    let cfg = SinkhornConfig {
        gamma,
        max_iterations: 5000,
        ..SinkhornConfig::default()
    };
    let t = sinkhorn(cost.view(), &a, &b, &cfg)?;
    let pseudo = argmax_rows(t.plan.view());
    let conditional = (t.plan.clone() * n as f64).into_iter().collect();
    Ok(PlanSample {
        conditional,
        rows: n,
        cols: t.plan.len_of(Axis(1)),
        truth,
        pseudo,
        iterations: t.iterations_used,
        residual: t.marginal_violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub subset_size: usize,
    pub imbalance_factor: Option<f64>,
    pub noise_ratio: Option<f64>,
    pub pseudo_imbalance_factor: Option<f64>,
    pub test_accuracy: Option<f64>,
}

/// Per-epoch subset statistics on a reduced long-tailed mixture.
pub fn extraction_curves(seed: u64, beta: f64, eta: f64, epochs: usize) -> Result<Vec<CurvePoint>> {
    let ds = sample_gaussian_mixture(&SimSpec {
        head_count: 200,
        noise: NoiseModel::Joint { eta },
        test_per_class: 40,
        seed,
        ..SimSpec::default()
    })?;
    let cfg = PipelineConfig {
        epochs,
        weighting: WeightingConfig::Effective { beta },
        seed,
        ..PipelineConfig::default()
    };
    let mut points = Vec::with_capacity(epochs);
    run_pipeline_with(&ds.train, &ds.train_labels, Some((&ds.test, &ds.test_labels)), &cfg, |r| {
        points.push(CurvePoint {
            epoch: r.epoch,
            subset_size: r.subset_size,
            imbalance_factor: r.imbalance_factor,
            noise_ratio: r.noise_ratio,
            pseudo_imbalance_factor: r.pseudo_imbalance_factor,
            test_accuracy: r.test_accuracy,
        })
    })?;
    Ok(points)
}
