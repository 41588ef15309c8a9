//! Browser bindings for a three-panel demo: class weights against `β`, a
//! transport plan against `γ`, and subset statistics across epochs.

pub mod demo;

use wasm_bindgen::prelude::*;

fn js_err(e: otsieve::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Class counts followed by their weights, `2 * classes` values.
#[wasm_bindgen(js_name = profileWeights)]
pub fn profile_weights(classes: usize, head: usize, imbalance: f64, beta: f64) -> Result<Vec<f64>, JsError> {
    let (counts, weights) = demo::profile_weights(classes, head, imbalance, beta).map_err(js_err)?;
    Ok(counts.into_iter().map(|c| c as f64).chain(weights).collect())
}

#[wasm_bindgen]
pub struct Plan {
    inner: demo::PlanSample,
}

#[wasm_bindgen]
impl Plan {
    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> usize {
        self.inner.rows
    }

    #[wasm_bindgen(getter)]
    pub fn cols(&self) -> usize {
        self.inner.cols
    }

    /// Row-normalized plan, row-major.
    #[wasm_bindgen(getter)]
    pub fn conditional(&self) -> Vec<f64> {
        self.inner.conditional.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<u32> {
        self.inner.truth.iter().map(|&c| c as u32).collect()
    }

    #[wasm_bindgen(getter)]
    pub fn pseudo(&self) -> Vec<u32> {
        self.inner.pseudo.iter().map(|&c| c as u32).collect()
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[wasm_bindgen(getter)]
    pub fn residual(&self) -> f64 {
        self.inner.residual
    }
}

#[wasm_bindgen(js_name = solvePlan)]
pub fn solve_plan(gamma: f64, beta: f64, seed: u64) -> Result<Plan, JsError> {
    let inner = demo::plan_sample(gamma, beta, seed).map_err(js_err)?;
    Ok(Plan { inner })
}

/// JSON array of per-epoch points.
#[wasm_bindgen(js_name = extractionCurves)]
pub fn extraction_curves(seed: u64, beta: f64, eta: f64, epochs: usize) -> Result<String, JsError> {
    let points = demo::extraction_curves(seed, beta, eta, epochs).map_err(js_err)?;
    serde_json::to_string(&points).map_err(|e| JsError::new(&e.to_string()))
}
