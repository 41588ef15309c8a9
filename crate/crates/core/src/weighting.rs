//! Prototype-side probability vectors.
//!
//! Each scheme assigns more mass to rarer classes (except `uniform`). Classes
//! whose prototype is undefined are dropped before normalization; pass the
//! support of the defined classes together with their class indices.

use crate::datamodel::{ClassWeights, WeightingScheme};
use crate::{Error, Result};

/// Scheme selector with its parameter, as exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    Uniform,
    EffectiveNumber(f64),
    InverseFrequency(f64),
}

impl Weighting {
    /// Weights over `classes`, with `support[k]` the count of `classes[k]`.
    pub fn compute(&self, classes: &[usize], support: &[usize]) -> Result<ClassWeights> {
        if classes.len() != support.len() {
            return Err(Error::LengthMismatch(classes.len(), support.len()));
        }
        let mut w = match *self {
            Weighting::Uniform => uniform_weights(classes.len()),
            Weighting::EffectiveNumber(beta) => effective_number_weights(support, beta)?,
            Weighting::InverseFrequency(r) => inverse_frequency_weights(support, r)?,
        };
        w.classes = classes.to_vec();
        Ok(w)
    }
}

/// Class-balanced weights from the effective number of samples:
/// `b_j ∝ (1 - β) / (1 - β^N_j)`.
///
/// `β = 0` gives uniform weights; as `β → 1` the weights approach inverse
/// frequency.
pub fn effective_number_weights(support: &[usize], beta: f64) -> Result<ClassWeights> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::BetaOutOfRange(beta));
    }
    check_support(support)?;
    let log_beta = (beta - 1.0).ln_1p();
    let raw: Vec<f64> = support
        .iter()
        .map(|&n| {
            // 1 - β^N without cancellation; β^N may underflow to 0, which is fine.
            let one_minus_pow = -(n as f64 * log_beta).exp_m1();
            (1.0 - beta) / one_minus_pow
        })
        .collect();
    Ok(normalized(raw, WeightingScheme::EffectiveNumber { beta }))
}

/// Inverse class frequency with smoothing exponent: `b_j ∝ N_j^{-r}`.
pub fn inverse_frequency_weights(support: &[usize], r: f64) -> Result<ClassWeights> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::NonPositiveExponent(r));
    }
    check_support(support)?;
    let raw = support.iter().map(|&n| (n as f64).powf(-r)).collect();
    Ok(normalized(raw, WeightingScheme::InverseFrequency { r }))
}

/// `1/K` for every class.
pub fn uniform_weights(num_classes: usize) -> ClassWeights {
    ClassWeights {
        classes: (0..num_classes).collect(),
        weights: vec![1.0 / num_classes as f64; num_classes],
        scheme: WeightingScheme::Uniform,
    }
}

fn check_support(support: &[usize]) -> Result<()> {
    if support.is_empty() {
        return Err(Error::EmptyInput("no classes to weight"));
    }
    match support.iter().position(|&n| n == 0) {
        Some(j) => Err(Error::EmptyClass(j)),
        None => Ok(()),
    }
}

fn normalized(raw: Vec<f64>, scheme: WeightingScheme) -> ClassWeights {
    let total: f64 = raw.iter().sum();
    ClassWeights {
        classes: (0..raw.len()).collect(),
        weights: raw.into_iter().map(|w| w / total).collect(),
        scheme,
    }
}
