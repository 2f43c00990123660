//! Demo operations on JSON strings, independent of the browser bindings.
//!
//! Every operation takes a (possibly partial) simulator config as a JSON
//! object and returns a JSON document.

use serde::Serialize;
use stmia_core::attacks::AttackMode;
use stmia_core::eval::metrics::MetricsReport;
use stmia_core::eval::sweep;
use stmia_core::pipeline::{self, AttackConfig};
use stmia_core::signals::{self, SignalConfig, SignalRecord};
use stmia_core::simulator::{self, SimConfig};
use stmia_core::store::Label;

/// Keeps a browser tab responsive.
pub const MAX_SAMPLES: usize = 2000;

pub type DemoResult = std::result::Result<String, String>;

fn config(json: &str) -> Result<SimConfig, String> {
    let text = if json.trim().is_empty() { "{}" } else { json };
    let cfg: SimConfig = serde_json::from_str(text).map_err(|e| format!("simulator config: {e}"))?;
    cfg.validate().map_err(|e| e.to_string())?;
    if cfg.n_members + cfg.n_nonmembers > MAX_SAMPLES {
        return Err(format!("at most {MAX_SAMPLES} samples in the demo"));
    }
    Ok(cfg)
}

fn records(cfg: &SimConfig) -> Result<Vec<SignalRecord>, String> {
    let bundle = simulator::generate(cfg).map_err(|e| e.to_string())?;
    signals::extract_bundle(&bundle, &SignalConfig::default()).map_err(|e| e.to_string())
}

fn to_json(v: &impl Serialize) -> DemoResult {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges over the pooled range.
    pub edges: Vec<f64>,
    pub members: Vec<usize>,
    pub nonmembers: Vec<usize>,
    pub member_mean: f64,
    pub nonmember_mean: f64,
}

pub fn histogram(values: &[(f64, bool)], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let lo = values.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let (mut members, mut nonmembers) = (vec![0; bins], vec![0; bins]);
    for &(v, m) in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        if m {
            members[i] += 1;
        } else {
            nonmembers[i] += 1;
        }
    }
    let mean_of = |class: bool| {
        let xs: Vec<f64> = values.iter().filter(|v| v.1 == class).map(|v| v.0).collect();
        stmia_core::stats::mean(&xs)
    };
    Histogram {
        edges,
        members,
        nonmembers,
        member_mean: mean_of(true),
        nonmember_mean: mean_of(false),
    }
}

#[derive(Debug, Serialize)]
struct SignalHistograms {
    srf: Histogram,
    tgs: Histogram,
}

/// Per-class histograms of the scalar SRF and TGS signals.
pub fn signal_histograms(sim_json: &str, bins: usize) -> DemoResult {
    let recs = records(&config(sim_json)?)?;
    let pick = |f: fn(&SignalRecord) -> f64| -> Vec<(f64, bool)> {
        recs.iter()
            .map(|r| (f(r), r.label() == Some(Label::Member)))
            .collect()
    };
    to_json(&SignalHistograms {
        srf: histogram(&pick(|r| r.feature.srf_scalar), bins),
        tgs: histogram(&pick(|r| r.feature.tgs_scalar), bins),
    })
}

/// Fused ROC curves per attack mode plus the query-only single-signal
/// tracks. Supervised training is optional since it dominates the runtime.
pub fn roc_by_mode(sim_json: &str, supervised: bool) -> DemoResult {
    let recs = records(&config(sim_json)?)?;
    let cfg = AttackConfig::default();
    let mut modes = vec![AttackMode::QueryOnly, AttackMode::Reference];
    if supervised {
        modes.push(AttackMode::Supervised);
    }
    let mut out: Vec<MetricsReport> = Vec::new();
    for mode in &modes {
        let run = sweep::run_mode(&recs, mode, &AttackConfig { single_signal_models: false, ..cfg.clone() })
            .map_err(|e| e.to_string())?;
        let mut keep = vec![mode.clone()];
        if *mode == AttackMode::QueryOnly {
            keep.extend([AttackMode::baseline("srf"), AttackMode::baseline("tgs")]);
        }
        let tracks: Vec<_> = run.scores.into_iter().filter(|s| keep.contains(&s.mode)).collect();
        out.extend(pipeline::evaluate(&tracks).map_err(|e| e.to_string())?);
    }
    to_json(&out)
}

/// SRF-track AUC of the query-only attack in the sparse-anchor world for
/// each `k`, all-key and all-frame.
pub fn topk_explorer(sim_json: &str, ks: &[usize]) -> DemoResult {
    let cfg = config(sim_json)?;
    let bundle = simulator::generate_sparse_anchor_world(&cfg).map_err(|e| e.to_string())?;
    let rows = sweep::sweep_topk(
        &bundle,
        ks,
        &[AttackMode::QueryOnly],
        &SignalConfig::default(),
        &AttackConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    to_json(&rows)
}
