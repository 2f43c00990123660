//! Membership signals computed from frame embeddings.
//!
//! * Sparse reconstruction fidelity (SRF): for each generated frame, the mean
//!   of its `K` largest cosine similarities to the target keyframes; the
//!   scalar score averages over generated frames. Higher is more member-like.
//! * Temporal generative stability (TGS): per generation, the consistency
//!   vector `C_i = (cos(f_i, f_{i-1}) + cos(f_i, f_0)) / 2` for `i = 1..N-1`;
//!   across `Q` generations, the per-index population standard deviation
//!   gives the instability vector, whose mean is the scalar score. Lower is
//!   more member-like.
//!
//! The remaining functions are the ablation baselines: averaging over all
//! keyframes or all target frames, mean-then-std instability, temporal
//! segments, and static frame-wise / video-level similarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;
use crate::store::{AuditBundle, AuditRecord, EmbeddingMatrix, GenerationBatch, Label, TargetRecord};

pub const DEFAULT_TOP_K: usize = 3;

/// Which target frames act as anchors for SRF.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyframeMode {
    /// Top-K over keyframes.
    #[default]
    Topk,
    /// Average over all keyframes (K = M).
    AllKey,
    /// Average over every target frame.
    AllFrame,
}

/// How per-generation SRF vectors are combined when `Q > 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SrfAggregation {
    #[default]
    MeanOverGenerations,
    FirstGeneration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalConfig {
    pub k: usize,
    /// Number of generations consumed; `None` uses all of them.
    pub q_used: Option<usize>,
    pub srf_aggregation: SrfAggregation,
    pub keyframe_mode: KeyframeMode,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_TOP_K,
            q_used: None,
            srf_aggregation: SrfAggregation::default(),
            keyframe_mode: KeyframeMode::default(),
        }
    }
}

impl SignalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.q_used == Some(0) {
            return Err(Error::Config("q_used must be at least 1".into()));
        }
        Ok(())
    }

    fn queries_for(&self, batch: &GenerationBatch) -> Result<usize> {
        resolve_queries(self.q_used, batch)
    }
}

fn resolve_queries(q_used: Option<usize>, batch: &GenerationBatch) -> Result<usize> {
    let available = batch.queries();
    let q = q_used.unwrap_or(available);
    if q == 0 {
        return Err(Error::Config("q_used must be at least 1".into()));
    }
    if q > available {
        return Err(Error::Config(format!(
            "q_used = {q} exceeds the {available} generations available"
        )));
    }
    Ok(q)
}

/// Cosine similarity in `f64`, clamped to `[-1, 1]`.
pub fn cosine<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "cosine operands".into(),
            expected: a.len(),
            found: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.into(), y.into());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    if na <= crate::store::MIN_ROW_NORM || nb <= crate::store::MIN_ROW_NORM {
        return Err(Error::ZeroNorm("cosine operand".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// SRF of one generated frame: mean of the `min(k, M)` largest cosine
/// similarities against the anchor rows.
pub fn srf_frame(gen_frame: &[f32], keyframes: &EmbeddingMatrix, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut sims = keyframes
        .iter_rows()
        .map(|key| cosine(gen_frame, key))
        .collect::<Result<Vec<_>>>()?;
    let take = k.min(sims.len());
    // descending; total_cmp is safe because cosine never returns NaN
    sims.sort_by(|a, b| b.total_cmp(a));
    Ok(sims[..take].iter().sum::<f64>() / take as f64)
}

fn srf_anchors<'a>(
    target: &'a TargetRecord,
    cfg: &SignalConfig,
) -> Result<(&'a EmbeddingMatrix, usize)> {
    match cfg.keyframe_mode {
        KeyframeMode::Topk => Ok((&target.keyframes, cfg.k)),
        KeyframeMode::AllKey => Ok((&target.keyframes, target.keyframes.rows())),
        KeyframeMode::AllFrame => {
            let frames = target.all_frames.as_ref().ok_or_else(|| {
                Error::Missing("all_frames (required by keyframe_mode = all-frame)".into())
            })?;
            Ok((frames, frames.rows()))
        }
    }
}

/// Returns the SRF vector (length `N`) and its mean.
pub fn srf_signal(
    target: &TargetRecord,
    batch: &GenerationBatch,
    cfg: &SignalConfig,
) -> Result<(Vec<f64>, f64)> {
    cfg.validate()?;
    if target.dim() != batch.dim() {
        return Err(Error::DimensionMismatch {
            context: "generated frames vs keyframes".into(),
            expected: target.dim(),
            found: batch.dim(),
        });
    }
    let q = cfg.queries_for(batch)?;
    let (anchors, k) = srf_anchors(target, cfg)?;
    let used = match cfg.srf_aggregation {
        SrfAggregation::MeanOverGenerations => &batch.generations[..q],
        SrfAggregation::FirstGeneration => &batch.generations[..1],
    };
    let n = batch.frames();
    let mut vector = vec![0.0; n];
    for gen in used {
        for (i, slot) in vector.iter_mut().enumerate() {
            *slot += srf_frame(gen.row(i), anchors, k)?;
        }
    }
    for v in &mut vector {
        *v /= used.len() as f64;
    }
    let scalar = stats::mean(&vector);
    Ok((vector, scalar))
}

/// Consistency vector `[C_1, ..., C_{N-1}]` of one generated video.
pub fn consistency_vector(gen: &EmbeddingMatrix) -> Result<Vec<f64>> {
    if gen.rows() < 2 {
        return Err(Error::Insufficient(format!(
            "consistency needs at least 2 frames, got {}",
            gen.rows()
        )));
    }
    let first = gen.row(0);
    (1..gen.rows())
        .map(|i| {
            let cur = gen.row(i);
            Ok(0.5 * (cosine(cur, gen.row(i - 1))? + cosine(cur, first)?))
        })
        .collect()
}

fn consistency_vectors(batch: &GenerationBatch, q_used: usize) -> Result<Vec<Vec<f64>>> {
    if q_used < 2 {
        return Err(Error::Config(format!(
            "TGS needs at least 2 generations, q_used = {q_used}"
        )));
    }
    if q_used > batch.queries() {
        return Err(Error::Config(format!(
            "q_used = {q_used} exceeds the {} generations available",
            batch.queries()
        )));
    }
    batch.generations[..q_used]
        .iter()
        .map(consistency_vector)
        .collect()
}

/// Per-index population standard deviation across a set of equal-length
/// consistency vectors, and its mean.
pub fn instability_from_consistency(vectors: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let len = vectors
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Insufficient("no consistency vectors".into()))?;
    if let Some(bad) = vectors.iter().find(|v| v.len() != len) {
        return Err(Error::DimensionMismatch {
            context: "consistency vector length".into(),
            expected: len,
            found: bad.len(),
        });
    }
    let mut column = vec![0.0; vectors.len()];
    let instability: Vec<f64> = (0..len)
        .map(|j| {
            for (c, v) in column.iter_mut().zip(vectors) {
                *c = v[j];
            }
            stats::population_std(&column)
        })
        .collect();
    let scalar = stats::mean(&instability);
    Ok((instability, scalar))
}

/// Instability vector (length `N-1`) over the first `q_used` generations and
/// its mean `S_TGS`.
pub fn tgs_signal(batch: &GenerationBatch, q_used: usize) -> Result<(Vec<f64>, f64)> {
    instability_from_consistency(&consistency_vectors(batch, q_used)?)
}

/// Ablation: standard deviation over generations of each generation's mean
/// consistency. Discards the per-index structure that `tgs_signal` keeps.
pub fn tgs_mean_then_std(batch: &GenerationBatch, q_used: usize) -> Result<f64> {
    let means: Vec<f64> = consistency_vectors(batch, q_used)?
        .iter()
        .map(|v| stats::mean(v))
        .collect();
    Ok(stats::population_std(&means))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segments {
    pub early: f64,
    pub middle: f64,
    pub late: f64,
}

/// Means of three contiguous, balanced thirds of the instability vector.
/// Earlier segments absorb the remainder.
pub fn tgs_segments(instability: &[f64]) -> Result<Segments> {
    let n = instability.len();
    if n < 3 {
        return Err(Error::Insufficient(format!(
            "segment split needs at least 3 values, got {n}"
        )));
    }
    let (base, rem) = (n / 3, n % 3);
    let size = |i: usize| base + usize::from(i < rem);
    let (a, b) = (size(0), size(0) + size(1));
    Ok(Segments {
        early: stats::mean(&instability[..a]),
        middle: stats::mean(&instability[a..b]),
        late: stats::mean(&instability[b..]),
    })
}

/// Static baseline: mean cosine over every (generated frame, target frame)
/// pair, averaged over generations.
pub fn framewise_baseline(target: &TargetRecord, batch: &GenerationBatch) -> Result<f64> {
    let frames = target
        .all_frames
        .as_ref()
        .ok_or_else(|| Error::Missing("all_frames (required by the frame-wise baseline)".into()))?;
    let mut per_gen = Vec::with_capacity(batch.queries());
    for gen in &batch.generations {
        let mut total = 0.0;
        for g in gen.iter_rows() {
            for t in frames.iter_rows() {
                total += cosine(g, t)?;
            }
        }
        per_gen.push(total / (gen.rows() * frames.rows()) as f64);
    }
    Ok(stats::mean(&per_gen))
}

/// Video-level vector of a generation batch: mean of the unit-normalized
/// frames over the first `q_used` generations.
pub fn generated_video_embedding(batch: &GenerationBatch, q_used: Option<usize>) -> Result<Vec<f64>> {
    let q = resolve_queries(q_used, batch)?;
    let mut acc = vec![0.0; batch.dim()];
    let mut count = 0usize;
    for gen in &batch.generations[..q] {
        for row in gen.iter_rows() {
            let norm = row.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += f64::from(v) / norm;
            }
            count += 1;
        }
    }
    for a in &mut acc {
        *a /= count as f64;
    }
    Ok(acc)
}

/// Static baseline: cosine between the target's and the generation's
/// video-level vectors.
pub fn videolevel_baseline(target: &TargetRecord, generated_video: &[f64]) -> Result<f64> {
    let v = target.video_embedding.as_ref().ok_or_else(|| {
        Error::Missing("video_embedding (required by the video-level baseline)".into())
    })?;
    let target_vec: Vec<f64> = v.row(0).iter().map(|&x| f64::from(x)).collect();
    cosine(&target_vec, generated_video)
}

/// Per-sample signals consumed by the attacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalFeature {
    pub sample_id: String,
    pub label: Option<Label>,
    pub srf_vector: Vec<f64>,
    pub srf_scalar: f64,
    pub instability_vector: Vec<f64>,
    pub tgs_scalar: f64,
}

impl SignalFeature {
    pub fn is_finite(&self) -> bool {
        self.srf_scalar.is_finite()
            && self.tgs_scalar.is_finite()
            && self.srf_vector.iter().all(|v| v.is_finite())
            && self.instability_vector.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub framewise: Option<f64>,
    pub videolevel: Option<f64>,
    pub mean_then_std: f64,
}

/// One line of the signal dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    #[serde(flatten)]
    pub feature: SignalFeature,
    pub baselines: Baselines,
    pub segments: Option<Segments>,
}

impl SignalRecord {
    pub fn sample_id(&self) -> &str {
        &self.feature.sample_id
    }

    pub fn label(&self) -> Option<Label> {
        self.feature.label
    }
}

/// Computes the full signal record of one sample.
pub fn extract(record: &AuditRecord, cfg: &SignalConfig) -> Result<SignalRecord> {
    let run = || -> Result<SignalRecord> {
        let (target, batch) = (&record.target, &record.batch);
        let (srf_vector, srf_scalar) = srf_signal(target, batch, cfg)?;
        let q = cfg.queries_for(batch)?;
        let (instability_vector, tgs_scalar) = tgs_signal(batch, q)?;
        let framewise = match &target.all_frames {
            Some(_) => Some(framewise_baseline(target, batch)?),
            None => None,
        };
        let videolevel = match &target.video_embedding {
            Some(_) => Some(videolevel_baseline(
                target,
                &generated_video_embedding(batch, Some(q))?,
            )?),
            None => None,
        };
        let mean_then_std = tgs_mean_then_std(batch, q)?;
        let segments = tgs_segments(&instability_vector).ok();
        Ok(SignalRecord {
            feature: SignalFeature {
                sample_id: target.sample_id.clone(),
                label: target.label,
                srf_vector,
                srf_scalar,
                instability_vector,
                tgs_scalar,
            },
            baselines: Baselines {
                framewise,
                videolevel,
                mean_then_std,
            },
            segments,
        })
    };
    run().map_err(|e| e.in_record(record.sample_id()))
}

/// Signals for every record, ordered by `sample_id`.
pub fn extract_bundle(bundle: &AuditBundle, cfg: &SignalConfig) -> Result<Vec<SignalRecord>> {
    cfg.validate()?;
    let mut out = bundle
        .records
        .iter()
        .map(|r| extract(r, cfg))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.sample_id().cmp(b.sample_id()));
    Ok(out)
}
