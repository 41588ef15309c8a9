//! Extraction settings from flags, a TOML file and built-in defaults, in that
//! order of precedence. File keys are the flag names without the leading
//! dashes, e.g. `batch-size = 64`.

use std::path::Path;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use otsieve::cost::CostMetric;
use otsieve::ot::SinkhornConfig;
use otsieve::pipeline::{Labeler, PipelineConfig, WeightingConfig};

use crate::error::{io_at, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingKind {
    Effective,
    Icf,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelerKind {
    /// Argmax of the transport plan.
    Ot,
    /// Closest prototype.
    Nearest,
}

/// Every knob of the extraction loop, each optional so that sources can be
/// layered.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Tunables {
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingKind>,
    /// Effective-number smoothing, in [0, 1).
    #[arg(long, value_parser = unit_open)]
    pub beta: Option<f64>,
    /// Inverse-frequency exponent.
    #[arg(long, value_parser = positive)]
    pub icf_r: Option<f64>,
    /// EMA weight on the previous prototypes.
    #[arg(long, value_parser = unit_closed)]
    pub alpha: Option<f64>,
    /// Entropic regularization.
    #[arg(long, value_parser = positive)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum)]
    pub cost: Option<CostKind>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch_size: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: Option<u64>,
    /// Refresh class counts from the kept subset after each epoch.
    #[arg(long, value_enum)]
    pub update_counts: Option<Switch>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub sinkhorn_iters: Option<u64>,
    #[arg(long, value_parser = positive)]
    pub sinkhorn_tol: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum)]
    pub labeler: Option<LabelerKind>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Tunables {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        toml::from_str(&text).map_err(|source| CliError::Config {
            path: path.to_owned(),
            source,
        })
    }

    /// Fields set here win; the rest come from `lower`.
    pub fn over(self, lower: Tunables) -> Tunables {
        Tunables {
            weighting: self.weighting.or(lower.weighting),
            beta: self.beta.or(lower.beta),
            icf_r: self.icf_r.or(lower.icf_r),
            alpha: self.alpha.or(lower.alpha),
            gamma: self.gamma.or(lower.gamma),
            cost: self.cost.or(lower.cost),
            batch_size: self.batch_size.or(lower.batch_size),
            epochs: self.epochs.or(lower.epochs),
            update_counts: self.update_counts.or(lower.update_counts),
            sinkhorn_iters: self.sinkhorn_iters.or(lower.sinkhorn_iters),
            sinkhorn_tol: self.sinkhorn_tol.or(lower.sinkhorn_tol),
            threads: self.threads.or(lower.threads),
            labeler: self.labeler.or(lower.labeler),
            seed: self.seed.or(lower.seed),
        }
    }
}

/// Fully resolved settings, echoed into every report line.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Settings {
    pub weighting: WeightingKind,
    pub beta: f64,
    pub icf_r: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub cost: CostKind,
    pub batch_size: u64,
    pub epochs: u64,
    pub update_counts: Switch,
    pub sinkhorn_iters: u64,
    pub sinkhorn_tol: f64,
    pub threads: usize,
    pub labeler: LabelerKind,
    pub seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            weighting: WeightingKind::Effective,
            beta: 0.95,
            icf_r: 1.0,
            alpha: p.alpha,
            gamma: p.sinkhorn.gamma,
            cost: CostKind::Cosine,
            batch_size: p.batch_size as u64,
            epochs: p.epochs as u64,
            update_counts: Switch::On,
            sinkhorn_iters: p.sinkhorn.max_iterations as u64,
            sinkhorn_tol: p.sinkhorn.tolerance,
            threads: 0,
            labeler: LabelerKind::Ot,
            seed: p.seed,
        }
    }
}

impl Settings {
    pub fn resolve(t: Tunables) -> Settings {
        let d = Settings::default();
        Settings {
            weighting: t.weighting.unwrap_or(d.weighting),
            beta: t.beta.unwrap_or(d.beta),
            icf_r: t.icf_r.unwrap_or(d.icf_r),
            alpha: t.alpha.unwrap_or(d.alpha),
            gamma: t.gamma.unwrap_or(d.gamma),
            cost: t.cost.unwrap_or(d.cost),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            epochs: t.epochs.unwrap_or(d.epochs),
            update_counts: t.update_counts.unwrap_or(d.update_counts),
            sinkhorn_iters: t.sinkhorn_iters.unwrap_or(d.sinkhorn_iters),
            sinkhorn_tol: t.sinkhorn_tol.unwrap_or(d.sinkhorn_tol),
            threads: t.threads.unwrap_or(d.threads),
            labeler: t.labeler.unwrap_or(d.labeler),
            seed: t.seed.unwrap_or(d.seed),
        }
    }

    pub fn pipeline(&self) -> CliResult<PipelineConfig> {
        let weighting = match self.weighting {
            WeightingKind::Effective => WeightingConfig::Effective { beta: self.beta },
            WeightingKind::Icf => WeightingConfig::Icf { r: self.icf_r },
            WeightingKind::Uniform => WeightingConfig::Uniform,
        };
        if !(0.0..1.0).contains(&self.beta) {
            return Err(otsieve::Error::BetaOutOfRange(self.beta).into());
        }
        if !(self.icf_r > 0.0) {
            return Err(otsieve::Error::NonPositiveExponent(self.icf_r).into());
        }
        let cfg = PipelineConfig {
            epochs: usize::try_from(self.epochs).map_err(|_| CliError::Invalid("epochs out of range".into()))?,
            batch_size: usize::try_from(self.batch_size)
                .map_err(|_| CliError::Invalid("batch size out of range".into()))?,
            alpha: self.alpha,
            weighting,
            cost: match self.cost {
                CostKind::Cosine => CostMetric::Cosine,
                CostKind::Euclidean => CostMetric::Euclidean,
            },
            sinkhorn: SinkhornConfig {
                gamma: self.gamma,
                max_iterations: usize::try_from(self.sinkhorn_iters)
                    .map_err(|_| CliError::Invalid("iteration budget out of range".into()))?,
                tolerance: self.sinkhorn_tol,
                stabilized: true,
            },
            update_counts_from_subset: self.update_counts == Switch::On,
            labeler: match self.labeler {
                LabelerKind::Ot => Labeler::Transport,
                LabelerKind::Nearest => Labeler::NearestPrototype,
            },
            seed: self.seed,
            ..PipelineConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

pub fn unit_open(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err("must lie in [0, 1)".into())
    }
}

pub fn unit_closed(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err("must lie in [0, 1]".into())
    }
}

pub fn positive(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err("must be positive".into())
    }
}

pub fn nonnegative(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err("must be nonnegative".into())
    }
}

pub fn at_least_one(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v >= 1.0 {
        Ok(v)
    } else {
        Err("must be at least 1".into())
    }
}
