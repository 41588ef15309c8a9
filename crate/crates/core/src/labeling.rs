//! Prototypes, pseudo-labels and the agreement filter.

use ndarray::{Array2, ArrayView2, Axis};

use crate::datamodel::{class_counts, EmbeddingSet, ExtractionResult, PrototypeBank, SubsetStats, TransportPlan};
use crate::metrics;
use crate::{Error, Result};

/// Per-class mean of the feature rows. Classes without samples are flagged
/// undefined and keep a zero row.
pub fn build_prototypes(features: ArrayView2<'_, f64>, labels: &[usize], num_classes: usize) -> Result<PrototypeBank> {
    if features.nrows() != labels.len() {
        return Err(Error::LengthMismatch(features.nrows(), labels.len()));
    }
    let mut sums = Array2::<f64>::zeros((num_classes, features.ncols()));
    let mut support = vec![0usize; num_classes];
    for (index, (row, &label)) in features.rows().into_iter().zip(labels).enumerate() {
        if label >= num_classes {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                num_classes,
            });
        }
        let mut s = sums.row_mut(label);
        s += &row;
        support[label] += 1;
    }
    for (mut s, &count) in sums.rows_mut().into_iter().zip(&support) {
        if count > 0 {
            s /= count as f64;
        }
    }
    PrototypeBank::new(sums, support)
}

/// Prototypes of an embedding set under the given labels.
pub fn prototypes_of(e: &EmbeddingSet, labels: &[usize], num_classes: usize) -> Result<PrototypeBank> {
    build_prototypes(e.features(), labels, num_classes)
}

/// Row-wise argmax with ties going to the lowest column.
pub fn argmax_rows(m: ArrayView2<'_, f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Pseudo-label of each row: the column carrying the most mass.
///
/// Columns are plan columns; map them through the active class list when the
/// plan covers a subset of classes.
pub fn pseudo_label(t: &TransportPlan) -> Result<Vec<usize>> {
    if t.ncols() == 0 {
        return Err(Error::EmptyInput("transport plan has no columns"));
    }
    check_rows(t.plan.view())?;
    Ok(argmax_rows(t.plan.view()))
}

/// Rows of the plan normalized to sum to one.
pub fn soft_scores(t: &TransportPlan) -> Result<Array2<f64>> {
    check_rows(t.plan.view())?;
    let mut s = t.plan.clone();
    for mut row in s.rows_mut() {
        let total = row.sum();
        row /= total;
    }
    Ok(s)
}

fn check_rows(plan: ArrayView2<'_, f64>) -> Result<()> {
    match plan.sum_axis(Axis(1)).iter().position(|&s| !(s > 0.0)) {
        Some(i) => Err(Error::UndefinedRow(i)),
        None => Ok(()),
    }
}

/// Keep the samples whose observed label agrees with the pseudo-label.
///
/// Stats report the imbalance factor of the kept labels and, when `truth` is
/// supplied, their noise ratio.
pub fn filter_clean(
    observed: &[usize],
    pseudo: &[usize],
    ids: &[u64],
    num_classes: usize,
    truth: Option<&[usize]>,
    epoch: usize,
) -> Result<ExtractionResult> {
    if observed.len() != pseudo.len() {
        return Err(Error::LengthMismatch(observed.len(), pseudo.len()));
    }
    if ids.len() != observed.len() {
        return Err(Error::LengthMismatch(ids.len(), observed.len()));
    }
    if let Some(t) = truth {
        if t.len() != observed.len() {
            return Err(Error::LengthMismatch(t.len(), observed.len()));
        }
    }
    let kept_rows: Vec<usize> = (0..observed.len()).filter(|&i| observed[i] == pseudo[i]).collect();
    let kept_ids = kept_rows.iter().map(|&i| ids[i]).collect();
    let kept_labels: Vec<usize> = kept_rows.iter().map(|&i| observed[i]).collect();
    if let Some(&bad) = kept_labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::LabelOutOfRange {
            index: 0,
            label: bad,
            num_classes,
        });
    }
    let per_class_counts = class_counts(&kept_labels, num_classes);
    let imbalance_factor = metrics::imbalance_factor(&per_class_counts).ok().map(|f| f.value);
    let noise_ratio = truth.map(|t| {
        let kept_truth: Vec<usize> = kept_rows.iter().map(|&i| t[i]).collect();
        metrics::noise_ratio(&kept_labels, &kept_truth)
            .expect("lengths agree")
            .value
    });
    Ok(ExtractionResult {
        kept_rows,
        kept_ids,
        pseudo_labels: pseudo.to_vec(),
        kept_labels,
        epoch,
        stats: SubsetStats {
            imbalance_factor,
            noise_ratio,
            per_class_counts,
        },
    })
}

/// EMA refinement: `C_j <- α C_j + (1 - α) C'_j`.
///
/// Classes undefined in `current` keep their old prototype bit for bit.
/// Support counts are taken from `old`; the pipeline decides whether to
/// refresh them.
pub fn calibrate_prototypes(old: &PrototypeBank, current: &PrototypeBank, alpha: f64) -> Result<PrototypeBank> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if old.num_classes() != current.num_classes() || old.dim() != current.dim() {
        return Err(Error::ShapeMismatch(format!(
            "old bank is {}x{}, current is {}x{}",
            old.num_classes(),
            old.dim(),
            current.num_classes(),
            current.dim()
        )));
    }
    let mut out = old.prototypes().to_owned();
    let mut defined = old.defined_flags().to_vec();
    for j in 0..old.num_classes() {
        if !current.is_defined(j) {
            continue;
        }
        if old.is_defined(j) {
            let mut row = out.row_mut(j);
            row.zip_mut_with(&current.prototype(j), |o, &c| *o = alpha * *o + (1.0 - alpha) * c);
        } else {
            out.row_mut(j).assign(&current.prototype(j));
            defined[j] = true;
        }
    }
    PrototypeBank::with_flags(out, old.support().to_vec(), defined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn plan(m: Array2<f64>) -> TransportPlan {
        TransportPlan {
            row_marginal: vec![],
            col_marginal: vec![],
            regularization: 1.0,
            iterations_used: 0,
            marginal_violation: 0.0,
            converged: true,
            plan: m,
        }
    }

    #[test]
    fn prototype_means() {
        let p = build_prototypes(array![[1.0, 0.0], [3.0, 0.0]].view(), &[0, 0], 1).unwrap();
        assert_eq!(p.prototypes(), array![[2.0, 0.0]]);
        assert_eq!(p.support(), &[2]);

        let rows = array![[1.0, 2.0], [-1.0, 0.5], [0.0, 9.0]];
        let p = build_prototypes(rows.view(), &[0, 1, 2], 3).unwrap();
        assert_eq!(p.prototypes(), rows);
    }

    #[test]
    fn empty_class_is_flagged() {
        let p = build_prototypes(array![[1.0], [2.0]].view(), &[0, 2], 3).unwrap();
        assert!(!p.is_defined(1));
        assert_eq!(p.support(), &[1, 0, 1]);
    }

    #[test]
    fn pseudo_label_argmax_and_ties() {
        assert_eq!(pseudo_label(&plan(array![[0.7, 0.3]])).unwrap(), vec![0]);
        assert_eq!(pseudo_label(&plan(array![[0.5, 0.5]])).unwrap(), vec![0]);
        assert_eq!(pseudo_label(&plan(array![[0.1, 0.5, 0.5]])).unwrap(), vec![1]);
        assert!(matches!(
            pseudo_label(&plan(array![[0.7, 0.3], [0.0, 0.0]])),
            Err(Error::UndefinedRow(1))
        ));
    }

    #[test]
    fn soft_scores_normalize_rows() {
        let s = soft_scores(&plan(array![[0.02, 0.08], [0.1, 0.1]])).unwrap();
        assert!((s[[0, 0]] - 0.2).abs() < 1e-15);
        assert!((s[[0, 1]] - 0.8).abs() < 1e-15);
        assert_eq!(s.row(1).to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn filter_keeps_agreement() {
        let r = filter_clean(&[0, 1, 2], &[0, 2, 2], &[0, 1, 2], 3, None, 1).unwrap();
        assert_eq!(r.kept_ids, vec![0, 2]);
        assert_eq!(r.kept_labels, vec![0, 2]);
        assert_eq!(r.stats.per_class_counts, vec![1, 0, 1]);

        let r = filter_clean(&[0, 1], &[0, 1], &[7, 9], 2, Some(&[0, 0]), 1).unwrap();
        assert_eq!(r.kept_ids, vec![7, 9]);
        assert_eq!(r.stats.noise_ratio, Some(0.5));

        let r = filter_clean(&[0, 0], &[1, 1], &[0, 1], 2, Some(&[0, 0]), 1).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.stats.noise_ratio, Some(0.0));
        assert_eq!(r.stats.imbalance_factor, None);

        assert!(matches!(
            filter_clean(&[0], &[0, 1], &[0], 2, None, 1),
            Err(Error::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn ema_cases() {
        let old = PrototypeBank::new(array![[0.0, 0.0]], vec![1]).unwrap();
        let cur = PrototypeBank::new(array![[1.0, 1.0]], vec![1]).unwrap();
        let c = calibrate_prototypes(&old, &cur, 0.9).unwrap();
        assert!((c.prototype(0)[0] - 0.1).abs() < 1e-15);
        assert_eq!(calibrate_prototypes(&old, &cur, 1.0).unwrap().prototypes(), old.prototypes());
        assert_eq!(calibrate_prototypes(&old, &cur, 0.0).unwrap().prototypes(), cur.prototypes());
        assert!(matches!(
            calibrate_prototypes(&old, &cur, 1.5),
            Err(Error::AlphaOutOfRange(_))
        ));
    }

    #[test]
    fn absent_class_is_carried_forward() {
        let old = PrototypeBank::new(array![[0.3, 0.7], [1.0, -1.0]], vec![4, 2]).unwrap();
        let cur = PrototypeBank::new(array![[2.0, 2.0], [0.0, 0.0]], vec![3, 0]).unwrap();
        let c = calibrate_prototypes(&old, &cur, 0.5).unwrap();
        assert_eq!(c.prototype(1), old.prototype(1));
        assert!(c.is_defined(1));
        assert_eq!(c.support(), old.support());
    }
}
