//! Ablation sweeps: reference-set size, SRF anchor selection and number of
//! queries. Each returns rows ready for CSV output.


use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attacks::{self, AttackMode, FusionWeights};
use crate::error::{Error, Result};
use crate::eval::metrics;
use crate::pipeline::{self, AttackConfig, AttackRun};
use crate::signals::{self, KeyframeMode, SignalConfig, SignalFeature, SignalRecord};
use crate::stats;
use crate::store::AuditBundle;

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Resampling attempts per (size, seed) cell before giving up on a pool
/// that keeps producing zero-variance subsets.
const MAX_ATTEMPTS: u64 = 64;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefSizeRow {
    pub size: usize,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub runs: usize,
    /// Degenerate subsets that were redrawn.
    pub resampled: usize,
}

fn labeled_features(set: &[SignalFeature]) -> Result<()> {
    for s in set {
        if s.label.is_none() {
            return Err(Error::Missing("label on an evaluation sample".into()).in_record(&s.sample_id));
        }
    }
    Ok(())
}

/// AUC of the fused reference score on `eval_set` for reference subsets of
/// each size drawn from `pool`. Subset indices are kept in pool order, so
/// the full pool reproduces a direct calibration exactly.
pub fn sweep_reference_size(
    pool: &[SignalFeature],
    eval_set: &[SignalFeature],
    sizes: &[usize],
    seeds: &[u64],
    w: &FusionWeights,
) -> Result<Vec<RefSizeRow>> {
    if sizes.is_empty() || seeds.is_empty() {
        return Err(Error::Config("reference-size sweep needs sizes and seeds".into()));
    }
    labeled_features(eval_set)?;
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size < 2 {
            return Err(Error::Config(format!("reference size {size} is below 2")));
        }
        if size > pool.len() {
            return Err(Error::Config(format!(
                "reference size {size} exceeds the pool of {}",
                pool.len()
            )));
        }
        let mut aucs = Vec::with_capacity(seeds.len());
        let mut resampled = 0;
        for &seed in seeds {
            let mut attempt = 0;
            let stats = loop {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(attempt);
                let mut idx = index::sample(&mut rng, pool.len(), size).into_vec();
                idx.sort_unstable();
                match attacks::calibrate(idx.iter().map(|&i| &pool[i])) {
                    Ok(s) => break s,
                    Err(Error::DegenerateCalibration(_)) if attempt + 1 < MAX_ATTEMPTS => {
                        attempt += 1;
                        resampled += 1;
                    }
                    Err(e) => return Err(e),
                }
            };
            let scores = eval_set
                .iter()
                .map(|s| {
                    let a = attacks::reference_attack(s, &stats, w)?;
                    Ok((a.score, s.label.expect("checked above").is_member()))
                })
                .collect::<Result<Vec<_>>>()?;
            aucs.push(metrics::auc(&scores)?);
        }
        let (mean_auc, std_auc) = stats::mean_std(&aucs);
        rows.push(RefSizeRow {
            size,
            mean_auc,
            std_auc,
            runs: aucs.len(),
            resampled,
        });
    }
    Ok(rows)
}

/// Anchor selection for SRF.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SrfSetting {
    TopK(usize),
    AllKey,
    AllFrame,
}

impl SrfSetting {
    pub fn label(&self) -> String {
        match self {
            SrfSetting::TopK(k) => format!("k={k}"),
            SrfSetting::AllKey => "all-key".into(),
            SrfSetting::AllFrame => "all-frame".into(),
        }
    }

    pub fn apply(&self, base: &SignalConfig) -> SignalConfig {
        let mut cfg = base.clone();
        match *self {
            SrfSetting::TopK(k) => {
                cfg.k = k;
                cfg.keyframe_mode = KeyframeMode::Topk;
            }
            SrfSetting::AllKey => cfg.keyframe_mode = KeyframeMode::AllKey,
            SrfSetting::AllFrame => cfg.keyframe_mode = KeyframeMode::AllFrame,
        }
        cfg
    }
}

/// Runs one attack mode. Single-signal classifiers are always trained in
/// supervised mode since the sweeps report the single-signal tracks.
pub fn run_mode(records: &[SignalRecord], mode: &AttackMode, cfg: &AttackConfig) -> Result<AttackRun> {
    match mode {
        AttackMode::Supervised => pipeline::run_supervised(
            records,
            &AttackConfig {
                single_signal_models: true,
                ..cfg.clone()
            },
        ),
        AttackMode::Reference => pipeline::run_reference(records, None, cfg),
        AttackMode::QueryOnly => pipeline::run_query_only(records, &cfg.weights),
        AttackMode::Baseline(_) => Err(Error::Config(format!("{mode} is not a sweepable attack mode"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopKRow {
    pub config: String,
    pub mode: String,
    pub srf_auc: f64,
    pub fused_auc: f64,
}

/// SRF-track and fused AUC for `K ∈ ks`, all-key and all-frame, per mode.
pub fn sweep_topk(
    bundle: &AuditBundle,
    ks: &[usize],
    modes: &[AttackMode],
    base: &SignalConfig,
    cfg: &AttackConfig,
) -> Result<Vec<TopKRow>> {
    if ks.is_empty() {
        return Err(Error::Config("top-k sweep needs at least one k".into()));
    }
    let mut settings: Vec<SrfSetting> = ks.iter().map(|&k| SrfSetting::TopK(k)).collect();
    settings.extend([SrfSetting::AllKey, SrfSetting::AllFrame]);
    let mut rows = Vec::with_capacity(settings.len() * modes.len());
    for setting in settings {
        let records = signals::extract_bundle(bundle, &setting.apply(base))?;
        for mode in modes {
            let run = run_mode(&records, mode, cfg)?;
            rows.push(TopKRow {
                config: setting.label(),
                mode: mode.to_string(),
                srf_auc: pipeline::track_auc(&run.scores, &AttackMode::baseline("srf"))?,
                fused_auc: pipeline::track_auc(&run.scores, mode)?,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiQRow {
    pub q_used: usize,
    pub mode: String,
    pub tgs_auc: f64,
    pub fused_auc: f64,
}

/// TGS-track and fused AUC using the first `q` generations, per mode.
pub fn sweep_multi_q(
    bundle: &AuditBundle,
    qs: &[usize],
    modes: &[AttackMode],
    base: &SignalConfig,
    cfg: &AttackConfig,
) -> Result<Vec<MultiQRow>> {
    if qs.is_empty() {
        return Err(Error::Config("multi-q sweep needs at least one q".into()));
    }
    let available = bundle.manifest.n_queries as usize;
    let mut rows = Vec::with_capacity(qs.len() * modes.len());
    for &q in qs {
        if q < 2 || q > available {
            return Err(Error::Config(format!(
                "q = {q} outside 2..={available} (the bundle's generations per sample)"
            )));
        }
        let records = signals::extract_bundle(
            bundle,
            &SignalConfig {
                q_used: Some(q),
                ..base.clone()
            },
        )?;
        for mode in modes {
            let run = run_mode(&records, mode, cfg)?;
            rows.push(MultiQRow {
                q_used: q,
                mode: mode.to_string(),
                tgs_auc: pipeline::track_auc(&run.scores, &AttackMode::baseline("tgs"))?,
                fused_auc: pipeline::track_auc(&run.scores, mode)?,
            });
        }
    }
    Ok(rows)
}

/// Renders rows as CSV with a header line.
pub fn to_csv<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Schema(format!("CSV row: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Schema(format!("CSV flush: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Schema(format!("CSV encoding: {e}")))
}
