//! Per-epoch imbalance factor and noise ratio on a synthetic long-tailed set.
//!
//! `cargo run --release -p otsieve --example tradeoff -- [seed] [beta] [epochs]`

use otsieve::pipeline::{run_pipeline_with, PipelineConfig, WeightingConfig};
use otsieve::simkit::{sample_gaussian_mixture, SimSpec};

fn main() -> otsieve::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));
    let beta = args.next().map_or(0.98, |s| s.parse().expect("beta"));
    let epochs = args.next().map_or(20, |s| s.parse().expect("epochs"));

    let ds = sample_gaussian_mixture(&SimSpec {
        seed,
        ..SimSpec::default()
    })?;
    let cfg = PipelineConfig {
        epochs,
        weighting: WeightingConfig::Effective { beta },
        seed,
        ..PipelineConfig::default()
    };
    println!("epoch\tunconv\tsize\tIF\tNR\tpseudo_IF\tpseudo_NR\tprecision\ttest_acc");
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    run_pipeline_with(
        &ds.train,
        &ds.train_labels,
        Some((&ds.test, &ds.test_labels)),
        &cfg,
        |r| {
            println!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.epoch,
                r.unconverged_batches,
                r.subset_size,
                fmt(r.imbalance_factor),
                fmt(r.noise_ratio),
                fmt(r.pseudo_imbalance_factor),
                fmt(r.pseudo_noise_ratio),
                fmt(r.precision),
                fmt(r.test_accuracy)
            )
        },
    )?;
    Ok(())
}
