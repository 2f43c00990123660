//! Synthetic memorization world with ground-truth labels.
//!
//! Each sample draws a concept direction and `M` keyframes scattered around
//! it. A generation follows a path through the keyframes (keyframe `j` sits
//! at frame `round(j (N-1) / (M-1))`, other frames interpolate linearly) and
//! every frame is perturbed by isotropic noise of a given norm. Members use
//! `anchor_noise_member` on `anchor_frames_member` keyframe slots and the
//! non-member noise elsewhere. Across queries the perturbation mixes a
//! per-sample fixed part with fresh noise in proportion to the temporal
//! jitter, so low jitter means near-identical generations.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{
    AuditBundle, AuditRecord, EmbeddingMatrix, GenerationBatch, Label, Manifest, TargetRecord,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_members: usize,
    pub n_nonmembers: usize,
    pub dim: usize,
    /// Keyframes per target (M).
    pub n_keyframes: usize,
    /// Frames per generation (N).
    pub n_frames: usize,
    /// Generations per sample (Q).
    pub n_queries: usize,
    pub anchor_frames_member: usize,
    pub anchor_noise_member: f64,
    pub anchor_noise_nonmember: f64,
    pub temporal_jitter_member: f64,
    pub temporal_jitter_nonmember: f64,
    /// Shifts member concepts along one global direction; 0 keeps both
    /// classes on the same keyframe distribution.
    pub distribution_shift: f64,
    /// Weight of the shared concept in each keyframe; larger values make
    /// keyframes of one sample more alike.
    pub concept_weight: f64,
    /// Correlation `rho` of adjacent keyframe offsets; offsets `i` and `j`
    /// correlate as `rho^((i-j)^2)`, so nearby keyframes look alike and
    /// distant ones drift apart.
    pub keyframe_correlation: f64,
    /// Log-normal spread of the per-sample jitter multiplier.
    pub jitter_spread: f64,
    /// Fresh per-query noise on every frame of both classes.
    pub query_noise: f64,
    /// Log-normal spread of a per-sample multiplier on the anchor noise
    /// scales (both classes).
    pub noise_spread: f64,
    /// Target frames between consecutive keyframes in `all_frames`.
    pub target_frames_per_gap: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_members: 200,
            n_nonmembers: 200,
            dim: 32,
            n_keyframes: 5,
            n_frames: 8,
            n_queries: 5,
            anchor_frames_member: 3,
            anchor_noise_member: 0.05,
            anchor_noise_nonmember: 0.5,
            temporal_jitter_member: 0.02,
            temporal_jitter_nonmember: 0.2,
            distribution_shift: 0.0,
            concept_weight: 0.0,
            keyframe_correlation: 0.99,
            jitter_spread: 0.5,
            query_noise: 0.1,
            noise_spread: 0.07,
            target_frames_per_gap: 3,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Same config with every member-side parameter set to the non-member one.
    pub fn null_world(&self) -> Self {
        Self {
            anchor_noise_member: self.anchor_noise_nonmember,
            temporal_jitter_member: self.temporal_jitter_nonmember,
            distribution_shift: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_members", self.n_members),
            ("n_nonmembers", self.n_nonmembers),
            ("dim", self.dim),
            ("n_keyframes", self.n_keyframes),
            ("n_frames", self.n_frames),
            ("target_frames_per_gap", self.target_frames_per_gap),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.n_queries < 2 {
            return Err(Error::Config("n_queries must be at least 2".into()));
        }
        let slots = self.key_slots().len();
        if self.anchor_frames_member > slots {
            return Err(Error::Config(format!(
                "anchor_frames_member {} exceeds the {slots} keyframe slots",
                self.anchor_frames_member
            )));
        }
        let scales = [
            ("anchor_noise_member", self.anchor_noise_member),
            ("anchor_noise_nonmember", self.anchor_noise_nonmember),
            ("temporal_jitter_member", self.temporal_jitter_member),
            ("temporal_jitter_nonmember", self.temporal_jitter_nonmember),
            ("concept_weight", self.concept_weight),
            ("jitter_spread", self.jitter_spread),
            ("query_noise", self.query_noise),
            ("noise_spread", self.noise_spread),
            ("distribution_shift", self.distribution_shift),
        ];
        for (name, v) in scales {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        if !(0.0..1.0).contains(&self.keyframe_correlation) {
            return Err(Error::Config("keyframe_correlation must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// `(generated frame, keyframe)` pairs; when `M > N` only the first
    /// keyframe landing on a frame is kept.
    fn key_slots(&self) -> Vec<(usize, usize)> {
        let (m, n) = (self.n_keyframes, self.n_frames);
        let mut slots: Vec<(usize, usize)> = (0..m)
            .map(|j| {
                if m == 1 {
                    (0, 0)
                } else {
                    ((j as f64 * (n - 1) as f64 / (m - 1) as f64).round() as usize, j)
                }
            })
            .collect();
        slots.dedup_by_key(|s| s.0);
        slots
    }
}

type Vector = Vec<f64>;

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vector {
    let s = 1.0 / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            s * z
        })
        .collect::<Vec<f64>>()
}

fn normalize(mut v: Vector) -> Vector {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vector {
    a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect()
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vector {
    x.iter().zip(y).map(|(u, v)| a * u + v).collect()
}

fn unit_random(rng: &mut ChaCha8Rng, dim: usize) -> Vector {
    loop {
        let v = gaussian(rng, dim);
        if v.iter().any(|x| *x != 0.0) {
            return normalize(v);
        }
    }
}

/// Sub-generator for one sample; independent of how many samples exist.
fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const NONMEMBER_STREAM_BASE: u64 = 1 << 32;
const ANCHOR_STREAM_BASE: u64 = 2 << 32;
const SHIFT_STREAM: u64 = u64::MAX;

fn member_id(i: usize) -> String {
    format!("mem-{i:05}")
}

fn nonmember_id(i: usize) -> String {
    format!("non-{i:05}")
}

/// Lower Cholesky factor of `K_ij = rho^((i-j)^2)`, with a tiny ridge so
/// the factorisation stays defined as `rho` approaches 1.
fn offset_mixing(m: usize, rho: f64) -> Vec<Vec<f64>> {
    let k = |i: usize, j: usize| {
        let d = i.abs_diff(j) as f64;
        rho.powf(d * d) + if i == j { 1e-9 } else { 0.0 }
    };
    let mut l = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i][p] * l[j][p]).sum();
            l[i][j] = if i == j {
                (k(i, i) - s).max(0.0).sqrt()
            } else {
                (k(i, j) - s) / l[j][j]
            };
        }
    }
    l
}

/// Path positions: keyframe copies at their slots, linear blends between.
fn base_path(n_frames: usize, keyframes: &[Vector], slots: &[(usize, usize)]) -> Vec<Vector> {
    (0..n_frames)
        .map(|t| {
            if slots.len() == 1 {
                return keyframes[slots[0].1].clone();
            }
            let seg = slots
                .windows(2)
                .position(|w| t <= w[1].0)
                .unwrap_or(slots.len() - 2);
            let ((a, ka), (b, kb)) = (slots[seg], slots[seg + 1]);
            let w = (t as f64 - a as f64) / (b - a) as f64;
            normalize(lerp(&keyframes[ka], &keyframes[kb], w))
        })
        .collect()
}

fn to_matrix(rows: &[Vector], what: &str) -> Result<EmbeddingMatrix> {
    EmbeddingMatrix::from_f64_rows(rows).map_err(|e| Error::InvalidMatrix(format!("simulated {what}: {e}")))
}

fn sample(cfg: &SimConfig, member: bool, index: usize, shift: Option<&[f64]>) -> Result<AuditRecord> {
    let (id, stream) = if member {
        (member_id(index), index as u64)
    } else {
        (nonmember_id(index), NONMEMBER_STREAM_BASE + index as u64)
    };
    let mut rng = sample_rng(cfg.seed, stream);
    let (d, m, n, q) = (cfg.dim, cfg.n_keyframes, cfg.n_frames, cfg.n_queries);

    let mut concept = unit_random(&mut rng, d);
    if let (true, Some(dir)) = (member, shift) {
        concept = normalize(axpy(cfg.distribution_shift, dir, &concept));
    }
    let mixing = offset_mixing(m, cfg.keyframe_correlation);
    let draws: Vec<Vector> = (0..m).map(|_| gaussian(&mut rng, d)).collect();
    let keyframes: Vec<Vector> = (0..m)
        .map(|j| {
            let mut offset = vec![0.0; d];
            for (l, g) in draws.iter().enumerate().take(j + 1) {
                offset.iter_mut().zip(g).for_each(|(o, x)| *o += mixing[j][l] * x);
            }
            let v = axpy(cfg.concept_weight, &concept, &offset);
            if v.iter().all(|x| *x == 0.0) {
                concept.clone()
            } else {
                normalize(v)
            }
        })
        .collect();

    let jitter_base = if member {
        cfg.temporal_jitter_member
    } else {
        cfg.temporal_jitter_nonmember
    };
    let z: f64 = StandardNormal.sample(&mut rng);
    let jitter = (jitter_base * (cfg.jitter_spread * z).exp()).min(1.0);
    let keep = (1.0 - jitter * jitter).sqrt();
    let z: f64 = StandardNormal.sample(&mut rng);
    let scale = (cfg.noise_spread * z).exp();

    // unit directions, so a noise scale is exactly the perturbation norm
    let fixed: Vec<Vector> = (0..n).map(|_| unit_random(&mut rng, d)).collect();
    let fresh: Vec<Vec<Vector>> = (0..q)
        .map(|_| (0..n).map(|_| unit_random(&mut rng, d)).collect())
        .collect();

    let slots = cfg.key_slots();
    let mut noise = vec![cfg.anchor_noise_nonmember * scale; n];
    if member {
        for t in anchor_slots(cfg, index) {
            noise[t] = cfg.anchor_noise_member * scale;
        }
    }

    let path = base_path(n, &keyframes, &slots);
    let generations = (0..q)
        .map(|qi| {
            let frames: Vec<Vector> = (0..n)
                .map(|t| {
                    let fresh_scale = noise[t] * jitter + cfg.query_noise;
                    let v = axpy(noise[t] * keep, &fixed[t], &axpy(fresh_scale, &fresh[qi][t], &path[t]));
                    if v.iter().all(|x| *x == 0.0) {
                        path[t].clone()
                    } else {
                        normalize(v)
                    }
                })
                .collect();
            to_matrix(&frames, &format!("generation {qi}"))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut all_frames = Vec::new();
    for w in keyframes.windows(2) {
        for s in 0..cfg.target_frames_per_gap {
            let t = s as f64 / cfg.target_frames_per_gap as f64;
            all_frames.push(normalize(lerp(&w[0], &w[1], t)));
        }
    }
    all_frames.push(keyframes[m - 1].clone());
    let mut mean = vec![0.0; d];
    for f in &all_frames {
        mean.iter_mut().zip(f).for_each(|(a, b)| *a += b);
    }
    let video = if mean.iter().all(|x| *x == 0.0) {
        keyframes[0].clone()
    } else {
        normalize(mean)
    };

    Ok(AuditRecord {
        target: TargetRecord {
            sample_id: id.clone(),
            keyframes: to_matrix(&keyframes, "keyframes")?,
            all_frames: Some(to_matrix(&all_frames, "all_frames")?),
            video_embedding: Some(to_matrix(&[video], "video_embedding")?),
            label: Some(Label::from(member)),
        },
        batch: GenerationBatch::new(id, generations)?,
    })
}

/// Labeled bundle: members first, then non-members. Bit-identical for equal
/// configs.
pub fn generate(cfg: &SimConfig) -> Result<AuditBundle> {
    cfg.validate()?;
    let shift = (cfg.distribution_shift > 0.0).then(|| unit_random(&mut sample_rng(cfg.seed, SHIFT_STREAM), cfg.dim));
    let mut records = Vec::with_capacity(cfg.n_members + cfg.n_nonmembers);
    for i in 0..cfg.n_members {
        records.push(sample(cfg, true, i, shift.as_deref())?);
    }
    for i in 0..cfg.n_nonmembers {
        records.push(sample(cfg, false, i, shift.as_deref())?);
    }
    let mut metadata = std::collections::BTreeMap::new();
    metadata.insert("simulator".to_string(), serde_json::to_value(cfg)?);
    let bundle = AuditBundle {
        manifest: Manifest {
            dataset: "simulated".into(),
            encoder: "synthetic".into(),
            dim: cfg.dim as u32,
            n_frames: cfg.n_frames as u32,
            n_queries: cfg.n_queries as u32,
            metadata,
        },
        records,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// [`generate`] with exactly one anchored frame per member.
pub fn generate_sparse_anchor_world(cfg: &SimConfig) -> Result<AuditBundle> {
    generate(&SimConfig {
        anchor_frames_member: 1,
        ..cfg.clone()
    })
}

/// Generated-frame indices of member `index`'s anchored keyframe slots,
/// drawn from their own stream so they depend only on the seed and index.
fn anchor_slots(cfg: &SimConfig, index: usize) -> Vec<usize> {
    let slots = cfg.key_slots();
    let mut rng = sample_rng(cfg.seed, ANCHOR_STREAM_BASE + index as u64);
    let mut out: Vec<usize> = index::sample(&mut rng, slots.len(), cfg.anchor_frames_member)
        .into_iter()
        .map(|k| slots[k].0)
        .collect();
    out.sort_unstable();
    out
}

/// Generated-frame indices where member `index` is anchored.
pub fn anchored_frames(cfg: &SimConfig, index: usize) -> Result<Vec<usize>> {
    cfg.validate()?;
    Ok(anchor_slots(cfg, index))
}
