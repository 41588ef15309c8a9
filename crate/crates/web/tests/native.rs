use otsieve_web::demo::{extraction_curves, plan_sample, profile_weights};

#[test]
fn weights_flatten_as_beta_shrinks() {
    let (counts, sharp) = profile_weights(10, 500, 100.0, 0.999).unwrap();
    assert_eq!(counts.len(), 10);
    let (_, flat) = profile_weights(10, 500, 100.0, 0.0).unwrap();
    assert!(flat.iter().all(|&w| (w - 0.1).abs() < 1e-15));
    assert!(sharp[9] > sharp[0]);
    assert!((sharp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn plan_rows_are_distributions() {
    let p = plan_sample(0.05, 0.9, 1).unwrap();
    assert_eq!(p.conditional.len(), p.rows * p.cols);
    assert_eq!(p.truth.len(), p.rows);
    assert!(p.truth.windows(2).all(|w| w[0] <= w[1]));
    for row in p.conditional.chunks(p.cols) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
    assert!(p.residual <= 1e-9);
}

#[test]
fn sharper_plans_at_small_gamma() {
    let peak = |gamma| {
        let p = plan_sample(gamma, 0.9, 2).unwrap();
        let total: f64 = p.conditional.chunks(p.cols).map(|r| r.iter().cloned().fold(0.0, f64::max)).sum();
        total / p.rows as f64
    };
    assert!(peak(0.01) > peak(1.0));
}

#[test]
fn curves_have_one_point_per_epoch() {
    let pts = extraction_curves(0, 0.98, 0.5, 3).unwrap();
    assert_eq!(pts.iter().map(|p| p.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert!(pts.iter().all(|p| p.subset_size > 0 && p.noise_ratio.is_some()));
}

#[test]
fn bad_inputs_are_errors() {
    assert!(profile_weights(10, 500, 100.0, 1.0).is_err());
    assert!(plan_sample(0.0, 0.9, 0).is_err());
    assert!(extraction_curves(0, 0.5, 1.5, 2).is_err());
}
