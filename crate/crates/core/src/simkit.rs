//! Synthetic long-tailed Gaussian mixtures and label-noise injectors.
//!
//! Everything is driven by a seeded ChaCha stream, so a [`SimSpec`] fully
//! determines its dataset. Generated features are rounded to `f32` precision
//! so that they survive the binary file format unchanged.

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{class_counts, EmbeddingSet, LabelTable};
use crate::{Error, Result};

/// Label corruption applied to the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Flip with probability `eta`, to class `j` in proportion to its size.
    Joint { eta: f64 },
    /// Flip with probability `eta`, uniformly to one of the other classes.
    Symmetric { eta: f64 },
    /// Flip non-target samples to `target` with probability `eta`. `None`
    /// targets the smallest true class.
    Asymmetric { eta: f64, target: Option<usize> },
}

impl NoiseModel {
    pub fn eta(&self) -> f64 {
        match *self {
            NoiseModel::Joint { eta } | NoiseModel::Symmetric { eta } | NoiseModel::Asymmetric { eta, .. } => eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub num_classes: usize,
    pub dim: usize,
    /// Size of the largest class.
    pub head_count: usize,
    /// Largest over smallest class size.
    pub imbalance_factor: f64,
    /// Pairwise distance between class means, in units of `within_class_std`.
    pub cluster_separation: f64,
    pub within_class_std: f64,
    pub noise: NoiseModel,
    /// Size of every class in the balanced test split.
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            dim: 32,
            head_count: 500,
            imbalance_factor: 100.0,
            cluster_separation: 10.0,
            within_class_std: 1.0,
            noise: NoiseModel::Joint { eta: 0.5 },
            test_per_class: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub train: EmbeddingSet,
    /// Noisy observed labels with ground truth.
    pub train_labels: LabelTable,
    pub test: EmbeddingSet,
    /// Clean labels (observed equals truth).
    pub test_labels: LabelTable,
    pub class_means: Array2<f64>,
    /// True per-class training counts.
    pub train_counts: Vec<usize>,
}

/// Exponential long-tail profile `N_k = round(N_1 · IF^{-k/(K-1)})`,
/// 0-based `k`, rounding half to even, at least one sample per class.
pub fn longtail_counts(num_classes: usize, head_count: usize, imbalance_factor: f64) -> Vec<usize> {
    if num_classes <= 1 {
        return vec![head_count; num_classes];
    }
    (0..num_classes)
        .map(|k| {
            let exponent = -(k as f64) / (num_classes - 1) as f64;
            let n = (head_count as f64 * imbalance_factor.powf(exponent)).round_ties_even();
            (n as usize).max(1)
        })
        .collect()
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::EtaOutOfRange(eta))
    }
}

fn check_truth(truth: &[usize], num_classes: usize) -> Result<()> {
    match truth.iter().enumerate().find(|(_, &l)| l >= num_classes) {
        Some((index, &label)) => Err(Error::LabelOutOfRange {
            index,
            label,
            num_classes,
        }),
        None => Ok(()),
    }
}

/// Joint noise: keep with probability `1 - η`, otherwise move from class `i`
/// to `j ≠ i` with probability `N_j / (N - N_i)`.
pub fn inject_joint_noise<R: Rng + ?Sized>(truth: &[usize], counts: &[usize], eta: f64, rng: &mut R) -> Result<Vec<usize>> {
    check_eta(eta)?;
    let k = counts.len();
    check_truth(truth, k)?;
    let flips: Vec<Option<WeightedIndex<usize>>> = (0..k)
        .map(|i| {
            let w: Vec<usize> = (0..k).map(|j| if j == i { 0 } else { counts[j] }).collect();
            WeightedIndex::new(w).ok()
        })
        .collect();
    Ok(truth
        .iter()
        .map(|&y| {
            let u: f64 = rng.random();
            match &flips[y] {
                Some(dist) if u < eta => dist.sample(rng),
                _ => y,
            }
        })
        .collect())
}

/// Symmetric noise: with probability `η` replace the label by a uniform draw
/// over the other `K - 1` classes.
pub fn inject_symmetric_noise<R: Rng + ?Sized>(
    truth: &[usize],
    num_classes: usize,
    eta: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    check_eta(eta)?;
    if num_classes < 2 {
        return Err(Error::InvalidConfig("symmetric noise needs at least two classes".into()));
    }
    check_truth(truth, num_classes)?;
    Ok(truth
        .iter()
        .map(|&y| {
            let u: f64 = rng.random();
            if u < eta {
                let other = rng.random_range(0..num_classes - 1);
                if other >= y {
                    other + 1
                } else {
                    other
                }
            } else {
                y
            }
        })
        .collect())
}

/// The smallest class by count; ties go to the highest index (the tail end).
pub fn smallest_class(counts: &[usize]) -> Option<usize> {
    let min = *counts.iter().min()?;
    counts.iter().rposition(|&c| c == min)
}

/// Asymmetric noise: every non-target sample moves to `target` with
/// probability `η`; target samples never move.
pub fn inject_asymmetric_noise<R: Rng + ?Sized>(
    truth: &[usize],
    num_classes: usize,
    eta: f64,
    target: Option<usize>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    check_eta(eta)?;
    check_truth(truth, num_classes)?;
    let target = match target {
        Some(t) if t >= num_classes => {
            return Err(Error::LabelOutOfRange {
                index: 0,
                label: t,
                num_classes,
            })
        }
        Some(t) => t,
        None => smallest_class(&class_counts(truth, num_classes)).ok_or(Error::EmptyInput("no classes"))?,
    };
    Ok(truth
        .iter()
        .map(|&y| {
            if y == target {
                return y;
            }
            let u: f64 = rng.random();
            if u < eta {
                target
            } else {
                y
            }
        })
        .collect())
}

/// Orthonormal directions from Gram-Schmidt on Gaussian draws.
fn orthonormal_rows<R: Rng + ?Sized>(k: usize, d: usize, rng: &mut R) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((k, d));
    let mut j = 0;
    while j < k {
        let mut v: ndarray::Array1<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for prev in 0..j {
            let p = q.row(prev);
            let proj = v.dot(&p);
            v.scaled_add(-proj, &p);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            q.row_mut(j).assign(&(v / norm));
            j += 1;
        }
    }
    q
}

fn draw_split<R: Rng + ?Sized>(
    means: &Array2<f64>,
    counts: &[usize],
    std: f64,
    rng: &mut R,
) -> (Array2<f64>, Vec<usize>) {
    let total: usize = counts.iter().sum();
    let d = means.ncols();
    let mut x = Array2::<f64>::zeros((total, d));
    let mut labels = Vec::with_capacity(total);
    let mut row = 0;
    for (class, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            for c in 0..d {
                let z: f64 = StandardNormal.sample(rng);
                x[[row, c]] = (means[[class, c]] + std * z) as f32 as f64;
            }
            labels.push(class);
            row += 1;
        }
    }
    (x, labels)
}

/// Draw a long-tailed training split with noisy labels and a balanced clean
/// test split.
pub fn sample_gaussian_mixture(spec: &SimSpec) -> Result<SimDataset> {
    let k = spec.num_classes;
    if k == 0 || spec.dim == 0 || spec.head_count == 0 || spec.test_per_class == 0 {
        return Err(Error::InvalidConfig("class count, dimension and sample counts must be at least 1".into()));
    }
    if !(spec.imbalance_factor >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "imbalance factor must be at least 1, got {}",
            spec.imbalance_factor
        )));
    }
    if !(spec.within_class_std >= 0.0) || !(spec.cluster_separation >= 0.0) {
        return Err(Error::InvalidConfig("separation and spread must be nonnegative".into()));
    }
    check_eta(spec.noise.eta())?;
    if spec.dim < k {
        return Err(Error::DimensionTooSmall {
            dim: spec.dim,
            classes: k,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Orthonormal means scaled by s sit s·√2 apart.
    let scale = spec.cluster_separation * spec.within_class_std / std::f64::consts::SQRT_2;
    let means = orthonormal_rows(k, spec.dim, &mut rng) * scale;

    let counts = longtail_counts(k, spec.head_count, spec.imbalance_factor);
    let (train_x, truth) = draw_split(&means, &counts, spec.within_class_std, &mut rng);
    let (test_x, test_truth) = draw_split(&means, &vec![spec.test_per_class; k], spec.within_class_std, &mut rng);

    let observed = match spec.noise {
        NoiseModel::Joint { eta } => inject_joint_noise(&truth, &counts, eta, &mut rng)?,
        NoiseModel::Symmetric { eta } if k >= 2 => inject_symmetric_noise(&truth, k, eta, &mut rng)?,
        NoiseModel::Symmetric { .. } => truth.clone(),
        NoiseModel::Asymmetric { eta, target } => inject_asymmetric_noise(&truth, k, eta, target, &mut rng)?,
    };

    Ok(SimDataset {
        train: EmbeddingSet::from_features(train_x)?,
        train_labels: LabelTable::new(observed, Some(truth), k)?,
        test: EmbeddingSet::from_features(test_x)?,
        test_labels: LabelTable::new(test_truth.clone(), Some(test_truth), k)?,
        class_means: means,
        train_counts: counts,
    })
}
