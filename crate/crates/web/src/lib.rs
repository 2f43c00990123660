//! wasm-bindgen exports for the static demo page in `www/`.
//!
//! Each export takes a simulator config as a JSON string and returns JSON;
//! errors surface as thrown JS errors.

pub mod demo;

use wasm_bindgen::prelude::*;

fn js(r: demo::DemoResult) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Per-class histograms of the scalar SRF and TGS signals.
#[wasm_bindgen(js_name = signalHistograms)]
pub fn signal_histograms(config: &str, bins: usize) -> Result<String, JsError> {
    js(demo::signal_histograms(config, bins))
}

/// Metrics and ROC points per attack mode.
#[wasm_bindgen(js_name = rocByMode)]
pub fn roc_by_mode(config: &str, supervised: bool) -> Result<String, JsError> {
    js(demo::roc_by_mode(config, supervised))
}

/// SRF AUC for each `k`, all-key and all-frame in the sparse-anchor world.
#[wasm_bindgen(js_name = topkExplorer)]
pub fn topk_explorer(config: &str, ks: Vec<usize>) -> Result<String, JsError> {
    js(demo::topk_explorer(config, &ks))
}
