//! Subset and pseudo-label evaluation.
//!
//! Precision and recall are macro-averaged one-vs-rest over the classes present
//! in the ground truth. A class that is never predicted has precision 0. The
//! multi-class AUC is the mean of per-class one-vs-rest ranking AUCs computed
//! from the class's soft-score column; ties count one half.

use std::collections::BTreeSet;

use ndarray::ArrayView2;
use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImbalanceFactor {
    /// Largest over smallest nonzero count.
    pub value: f64,
    /// Classes with zero count, left out of the ratio.
    pub excluded: Vec<usize>,
}

/// `max / min` over the classes with a nonzero count.
pub fn imbalance_factor(counts: &[usize]) -> Result<ImbalanceFactor> {
    let nonzero = counts.iter().copied().filter(|&c| c > 0);
    let max = nonzero.clone().max().ok_or(Error::AllEmpty)?;
    let min = nonzero.min().ok_or(Error::AllEmpty)?;
    Ok(ImbalanceFactor {
        value: max as f64 / min as f64,
        excluded: (0..counts.len()).filter(|&j| counts[j] == 0).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseRatio {
    /// Fraction of retained labels that differ from the truth; 0 when empty.
    pub value: f64,
    pub size: usize,
}

pub fn noise_ratio(kept_labels: &[usize], truth: &[usize]) -> Result<NoiseRatio> {
    if kept_labels.len() != truth.len() {
        return Err(Error::MissingTruth);
    }
    let size = kept_labels.len();
    if size == 0 {
        return Ok(NoiseRatio { value: 0.0, size });
    }
    let wrong = kept_labels.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(NoiseRatio {
        value: wrong as f64 / size as f64,
        size,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PseudoLabelQuality {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    /// `None` when every class is degenerate.
    pub macro_auc: Option<f64>,
    /// Classes with no positives or no negatives, left out of the AUC.
    pub degenerate_classes: Vec<usize>,
}

/// Quality of pseudo-labels and their soft scores against ground truth.
///
/// `scores` has one row per sample and one column per class.
pub fn pseudo_label_quality(pseudo: &[usize], scores: ArrayView2<'_, f64>, truth: &[usize]) -> Result<PseudoLabelQuality> {
    let n = truth.len();
    if pseudo.len() != n || scores.nrows() != n {
        return Err(Error::MissingTruth);
    }
    if n == 0 {
        return Err(Error::EmptyInput("no samples to evaluate"));
    }
    let k = scores.ncols();
    if let Some(&l) = pseudo.iter().chain(truth).find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange {
            index: 0,
            label: l,
            num_classes: k,
        });
    }

    let present: BTreeSet<usize> = truth.iter().copied().collect();
    let mut precision = 0.0;
    let mut recall = 0.0;
    for &c in &present {
        let tp = (0..n).filter(|&i| pseudo[i] == c && truth[i] == c).count() as f64;
        let predicted = pseudo.iter().filter(|&&p| p == c).count() as f64;
        let actual = truth.iter().filter(|&&t| t == c).count() as f64;
        if predicted > 0.0 {
            precision += tp / predicted;
        }
        recall += tp / actual;
    }
    precision /= present.len() as f64;
    recall /= present.len() as f64;
    let accuracy = (0..n).filter(|&i| pseudo[i] == truth[i]).count() as f64 / n as f64;

    let mut aucs = Vec::new();
    let mut degenerate_classes = Vec::new();
    for c in 0..k {
        let positives = truth.iter().filter(|&&t| t == c).count();
        if positives == 0 || positives == n {
            degenerate_classes.push(c);
            continue;
        }
        let column: Vec<f64> = scores.column(c).to_vec();
        let is_pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        aucs.push(binary_auc(&column, &is_pos));
    }
    let macro_auc = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);

    Ok(PseudoLabelQuality {
        precision,
        recall,
        accuracy,
        macro_auc,
        degenerate_classes,
    })
}

/// Rank-sum AUC with midranks for ties. Both classes must be nonempty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| scores[x].total_cmp(&scores[y]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share their mean.
        let midrank = (start + 1 + end) as f64 / 2.0;
        rank_sum_pos += order[start..end].iter().filter(|&&i| positive[i]).count() as f64 * midrank;
        start = end;
    }
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = n as f64 - n_pos;
    (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

/// How classes are split into many/medium/few-shot groups.
#[derive(Debug, Clone, PartialEq)]
pub enum ShotGrouping {
    /// Many: count > `many_above`; few: count < `few_below`; medium: the rest.
    Counts { many_above: usize, few_below: usize },
    Explicit {
        many: Vec<usize>,
        medium: Vec<usize>,
        few: Vec<usize>,
    },
}

impl Default for ShotGrouping {
    fn default() -> Self {
        ShotGrouping::Counts {
            many_above: 100,
            few_below: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShotReport {
    pub many: Option<f64>,
    pub medium: Option<f64>,
    pub few: Option<f64>,
    pub many_classes: Vec<usize>,
    pub medium_classes: Vec<usize>,
    pub few_classes: Vec<usize>,
    /// Names of groups that received no class.
    pub empty_groups: Vec<&'static str>,
}

/// Mean of a per-class metric within each shot group.
pub fn shot_partition_report(values: &[f64], counts: &[usize], grouping: &ShotGrouping) -> Result<ShotReport> {
    if values.len() != counts.len() {
        return Err(Error::LengthMismatch(values.len(), counts.len()));
    }
    let (many, medium, few) = match grouping {
        ShotGrouping::Counts {
            many_above,
            few_below,
        } => {
            let pick = |f: &dyn Fn(usize) -> bool| (0..counts.len()).filter(|&j| f(counts[j])).collect::<Vec<_>>();
            (
                pick(&|c| c > *many_above),
                pick(&|c| c >= *few_below && c <= *many_above),
                pick(&|c| c < *few_below),
            )
        }
        ShotGrouping::Explicit { many, medium, few } => {
            if let Some(&j) = many.iter().chain(medium).chain(few).find(|&&j| j >= values.len()) {
                return Err(Error::LabelOutOfRange {
                    index: 0,
                    label: j,
                    num_classes: values.len(),
                });
            }
            (many.clone(), medium.clone(), few.clone())
        }
    };
    let mean = |g: &[usize]| (!g.is_empty()).then(|| g.iter().map(|&j| values[j]).sum::<f64>() / g.len() as f64);
    let mut empty_groups = Vec::new();
    for (name, g) in [("many", &many), ("medium", &medium), ("few", &few)] {
        if g.is_empty() {
            empty_groups.push(name);
        }
    }
    Ok(ShotReport {
        many: mean(&many),
        medium: mean(&medium),
        few: mean(&few),
        many_classes: many,
        medium_classes: medium,
        few_classes: few,
        empty_groups,
    })
}

/// Fraction of positions where the two label sequences agree.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}
