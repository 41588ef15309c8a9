use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use otsieve::datamodel::class_counts;
use otsieve::io::{read_embeddings, read_labels, read_matrix_csv, read_subset, write_embeddings, write_labels, write_matrix_csv, write_subset};
use otsieve::metrics::{imbalance_factor, noise_ratio, pseudo_label_quality};
use otsieve::ot::{exact_ot, sinkhorn, SinkhornConfig};
use otsieve::pipeline::{run_pipeline_with, EpochReport};
use otsieve::simkit::{sample_gaussian_mixture, NoiseModel, SimSpec};
use otsieve::{EmbeddingSet, LabelTable};

use crate::config::{Settings, Tunables};
use crate::error::{io_at, CliError, CliResult};
use crate::{EvaluateArgs, ExtractArgs, NoiseKind, SimulateArgs, SolveArgs};

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_at(path))
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(io_at(path))
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let noise = match args.noise {
        NoiseKind::Joint => NoiseModel::Joint { eta: args.eta },
        NoiseKind::Sym => NoiseModel::Symmetric { eta: args.eta },
        NoiseKind::Asym => NoiseModel::Asymmetric {
            eta: args.eta,
            target: args.target,
        },
    };
    let spec = SimSpec {
        num_classes: args.classes as usize,
        dim: args.dim as usize,
        head_count: args.head as usize,
        imbalance_factor: args.imbalance,
        cluster_separation: args.sep,
        within_class_std: args.std,
        noise,
        test_per_class: args.test_per_class as usize,
        seed: args.seed,
    };
    let ds = sample_gaussian_mixture(&spec)?;
    fs::create_dir_all(&args.out).map_err(io_at(&args.out))?;

    let write = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> otsieve::Result<()>| -> CliResult<()> {
        let path = args.out.join(name);
        let mut w = create(&path)?;
        f(&mut w)?;
        w.flush().map_err(io_at(&path))
    };
    write("train.otsb", &|w| write_embeddings(w, &ds.train))?;
    write("train_labels.csv", &|w| write_labels(w, ds.train.ids(), &ds.train_labels))?;
    write("test.otsb", &|w| write_embeddings(w, &ds.test))?;
    write("test_labels.csv", &|w| write_labels(w, ds.test.ids(), &ds.test_labels))?;

    let observed = ds.train_labels.observed_counts();
    let wrong = ds
        .train_labels
        .observed()
        .iter()
        .zip(ds.train_labels.truth().unwrap_or_default())
        .filter(|(o, t)| o != t)
        .count();
    println!(
        "wrote {} training and {} test samples to {}",
        ds.train.len(),
        ds.test.len(),
        args.out.display()
    );
    println!("true counts     {:?}", ds.train_counts);
    println!("observed counts {observed:?}");
    println!("noise ratio     {:.4}", wrong as f64 / ds.train.len() as f64);
    Ok(())
}

/// Embeddings re-keyed with the ids of their label file.
fn load_split(embeddings: &Path, labels: &Path, classes: Option<usize>) -> CliResult<(EmbeddingSet, LabelTable)> {
    let e = read_embeddings(open(embeddings)?)?;
    let (ids, table) = read_labels(open(labels)?, classes)?;
    if ids.len() != e.len() {
        return Err(CliError::Invalid(format!(
            "{} has {} rows but {} has {}",
            embeddings.display(),
            e.len(),
            labels.display(),
            ids.len()
        )));
    }
    let e = EmbeddingSet::new(ids, e.features().to_owned())?;
    Ok((e, table))
}

#[derive(Serialize)]
struct ReportLine<'a> {
    #[serde(flatten)]
    report: &'a EpochReport,
    config: &'a Settings,
}

pub fn extract(args: &ExtractArgs) -> CliResult<()> {
    let file = match &args.config {
        Some(path) => Tunables::from_file(path)?,
        None => Tunables::default(),
    };
    let settings = Settings::resolve(args.tunables.clone().over(file));
    let cfg = settings.pipeline()?;

    let (train, labels) = load_split(&args.train, &args.labels, args.classes)?;
    let k = labels.num_classes();
    let test = match (&args.test, &args.test_labels) {
        (Some(e), Some(l)) => Some(load_split(e, l, Some(k))?),
        _ => None,
    };

    fs::create_dir_all(&args.out).map_err(io_at(&args.out))?;
    let report_path = args.out.join("epochs.jsonl");
    let mut reports = create(&report_path)?;
    let mut write_error = None;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(settings.threads).build()?;
    let out = pool.install(|| {
        run_pipeline_with(&train, &labels, test.as_ref().map(|(e, l)| (e, l)), &cfg, |report| {
            if write_error.is_some() {
                return;
            }
            let line = ReportLine {
                report,
                config: &settings,
            };
            let res = serde_json::to_writer(&mut reports, &line)
                .map_err(CliError::from)
                .and_then(|()| writeln!(reports).map_err(io_at(&report_path)));
            if let Err(e) = res {
                write_error = Some(e);
            }
        })
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    reports.flush().map_err(io_at(&report_path))?;

    let subset_path = args.out.join("subset.csv");
    let mut w = create(&subset_path)?;
    let res = &out.final_result;
    write_subset(&mut w, train.ids(), &res.pseudo_labels, &res.kept_mask())?;
    w.flush().map_err(io_at(&subset_path))?;

    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    let last = out.reports.last().expect("at least one epoch");
    println!("kept {} of {} samples after {} epochs", res.len(), train.len(), out.reports.len());
    println!("per-class counts {:?}", last.per_class_counts);
    println!("imbalance factor {}", fmt(last.imbalance_factor));
    println!("noise ratio      {}", fmt(last.noise_ratio));
    if last.test_accuracy.is_some() {
        println!("test accuracy    {}", fmt(last.test_accuracy));
    }
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    samples: usize,
    subset_size: usize,
    per_class_counts: Vec<usize>,
    imbalance_factor: Option<f64>,
    noise_ratio: Option<f64>,
    /// Quality of the kept pseudo-labels; the AUC uses one-hot scores.
    precision: Option<f64>,
    recall: Option<f64>,
    accuracy: Option<f64>,
    macro_auc: Option<f64>,
    /// Over every sample, kept or not.
    pseudo_accuracy: f64,
    pseudo_imbalance_factor: Option<f64>,
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let rows = read_subset(open(&args.subset)?)?;
    let (ids, labels) = read_labels(open(&args.labels)?, args.classes)?;
    let truth = labels.truth().ok_or(otsieve::Error::MissingTruth)?;
    let k = labels.num_classes();
    let by_id: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut pseudo = Vec::with_capacity(rows.len());
    let mut pseudo_truth = Vec::with_capacity(rows.len());
    let mut kept = Vec::new();
    let mut kept_truth = Vec::new();
    for row in &rows {
        let &i = by_id
            .get(&row.id)
            .ok_or_else(|| CliError::Invalid(format!("subset id {} is not in the label file", row.id)))?;
        if row.pseudo_label >= k {
            return Err(otsieve::Error::LabelOutOfRange {
                index: i,
                label: row.pseudo_label,
                num_classes: k,
            }
            .into());
        }
        pseudo.push(row.pseudo_label);
        pseudo_truth.push(truth[i]);
        if row.kept {
            kept.push(row.pseudo_label);
            kept_truth.push(truth[i]);
        }
    }
    if pseudo.is_empty() {
        return Err(otsieve::Error::EmptyInput("subset file has no rows").into());
    }

    let counts = class_counts(&kept, k);
    let quality = if kept.is_empty() {
        None
    } else {
        let scores = one_hot(&kept, k);
        Some(pseudo_label_quality(&kept, scores.view(), &kept_truth)?)
    };
    let pseudo_hits = pseudo.iter().zip(&pseudo_truth).filter(|(p, t)| p == t).count();
    let eval = Evaluation {
        samples: pseudo.len(),
        subset_size: kept.len(),
        imbalance_factor: imbalance_factor(&counts).ok().map(|f| f.value),
        noise_ratio: (!kept.is_empty())
            .then(|| noise_ratio(&kept, &kept_truth).map(|r| r.value))
            .transpose()?,
        per_class_counts: counts,
        precision: quality.as_ref().map(|q| q.precision),
        recall: quality.as_ref().map(|q| q.recall),
        accuracy: quality.as_ref().map(|q| q.accuracy),
        macro_auc: quality.as_ref().and_then(|q| q.macro_auc),
        pseudo_accuracy: pseudo_hits as f64 / pseudo.len() as f64,
        pseudo_imbalance_factor: imbalance_factor(&class_counts(&pseudo, k)).ok().map(|f| f.value),
    };
    println!("{}", serde_json::to_string_pretty(&eval)?);
    Ok(())
}

fn one_hot(labels: &[usize], k: usize) -> Array2<f64> {
    let mut m = Array2::zeros((labels.len(), k));
    for (i, &l) in labels.iter().enumerate() {
        m[[i, l]] = 1.0;
    }
    m
}

fn read_marginal(path: &Path) -> CliResult<Vec<f64>> {
    let m = read_matrix_csv(open(path)?)?;
    if m.nrows() != 1 && m.ncols() != 1 {
        return Err(CliError::Invalid(format!(
            "{} must hold a single row or column, found {}x{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.iter().copied().collect())
}

pub fn solve(args: &SolveArgs) -> CliResult<()> {
    let cost = read_matrix_csv(open(&args.cost)?)?;
    let (n, k) = cost.dim();
    let a = match &args.a {
        Some(p) => read_marginal(p)?,
        None => vec![1.0 / n as f64; n],
    };
    let b = match &args.b {
        Some(p) => read_marginal(p)?,
        None => vec![1.0 / k as f64; k],
    };

    let plan = if args.exact {
        let s = exact_ot(cost.view(), &a, &b)?;
        eprintln!("exact transport cost {:e} after {} pivots", s.cost, s.pivots);
        s.plan
    } else {
        let cfg = SinkhornConfig {
            gamma: args.gamma,
            max_iterations: usize::try_from(args.sinkhorn_iters)
                .map_err(|_| CliError::Invalid("iteration budget out of range".into()))?,
            tolerance: args.sinkhorn_tol,
            stabilized: true,
        };
        let t = sinkhorn(cost.view(), &a, &b, &cfg)?;
        let objective = otsieve::ot::plan_objective(t.plan.view(), cost.view(), args.gamma)?;
        eprintln!(
            "transport cost {:e}, regularized {:e}, {} iterations, residual {:.2e}",
            objective.transport_cost, objective.regularized, t.iterations_used, t.marginal_violation
        );
        if let Some(w) = t.convergence_warning(cfg.tolerance) {
            eprintln!("warning: {w}");
        }
        t.plan
    };

    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            write_matrix_csv(&mut w, plan.view())?;
            w.flush().map_err(io_at(path))?;
        }
        None => write_matrix_csv(std::io::stdout().lock(), plan.view())?,
    }
    Ok(())
}
