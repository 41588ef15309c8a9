//! Clean-subset extraction for noisy, long-tailed labeled embeddings.
//!
//! Samples are matched to reweighted class prototypes with entropic optimal
//! transport; a sample is kept when its observed label agrees with the
//! transport-derived pseudo-label. Prototypes are refined from the kept subset
//! with an exponential moving average, epoch after epoch.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`datamodel`] | embeddings, labels, prototypes, plans, results |
//! | [`weighting`] | prototype-side mass: effective number, inverse frequency, uniform |
//! | [`cost`] | cosine and Euclidean cost matrices |
//! | [`ot`] | log-domain Sinkhorn and an exact transportation simplex |
//! | [`labeling`] | prototypes, pseudo-labels, agreement filter, EMA calibration |
//! | [`classifier`] | linear softmax head and nearest-prototype prediction |
//! | [`pipeline`] | the epoch loop |
//! | [`simkit`] | synthetic long-tailed mixtures and label-noise injectors |
//! | [`metrics`] | imbalance factor, noise ratio, pseudo-label quality |
//! | [`io`] | on-disk formats used by the command-line tool |
//!
//! Class indices are 0-based throughout.

pub mod classifier;
pub mod cost;
pub mod datamodel;
mod error;
pub mod io;
pub mod labeling;
pub mod metrics;
pub mod ot;
pub mod pipeline;
pub mod simkit;
pub mod weighting;

pub use datamodel::{
    validate_dataset, ClassWeights, EmbeddingSet, ExtractionResult, LabelTable, PrototypeBank,
    SubsetStats, TransportPlan, WeightingScheme,
};
pub use error::{Error, Result};
