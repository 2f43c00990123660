//! Random instances and brute-force reference implementations shared by the
//! oracle, property and acceptance suites.
//!
//! The oracles deliberately avoid the library's helpers: vectors are
//! normalised first and compared by plain dot products, top-K is picked by
//! repeated maximum extraction, and variance uses the two-pass formula.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use stmia_core::eval::metrics;
use stmia_core::mlp::{Mlp, WeightInit};
use stmia_core::signals::{self, SignalConfig};
use stmia_core::store::{
    AuditBundle, AuditRecord, EmbeddingMatrix, GenerationBatch, Label, Manifest, TargetRecord,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(rng: &mut impl Rng, rows: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..rows)
        .map(|_| loop {
            let row: Vec<f32> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect();
            if row.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>() > 1e-6 {
                break row;
            }
        })
        .collect()
}

pub fn matrix(rows: &[Vec<f32>]) -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(rows).unwrap()
}

/// Raw instance kept as plain rows so the oracles never touch library types.
#[derive(Clone, Debug)]
pub struct Instance {
    pub keyframes: Vec<Vec<f32>>,
    pub all_frames: Vec<Vec<f32>>,
    pub video: Vec<f32>,
    pub generations: Vec<Vec<Vec<f32>>>,
    pub k: usize,
}

/// M, N <= 8, Q <= 4 (at least 2 so TGS is defined), dim <= 16.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let m = rng.random_range(1..=8);
    let n = rng.random_range(2..=8);
    let q = rng.random_range(2..=4);
    let dim = rng.random_range(1..=16);
    let frames = rng.random_range(1..=8);
    Instance {
        keyframes: gaussian_rows(rng, m, dim),
        all_frames: gaussian_rows(rng, frames, dim),
        video: gaussian_rows(rng, 1, dim).remove(0),
        generations: (0..q).map(|_| gaussian_rows(rng, n, dim)).collect(),
        k: rng.random_range(1..=10),
    }
}

impl Instance {
    pub fn record(&self, id: &str, label: Option<Label>) -> AuditRecord {
        AuditRecord {
            target: TargetRecord {
                sample_id: id.into(),
                keyframes: matrix(&self.keyframes),
                all_frames: Some(matrix(&self.all_frames)),
                video_embedding: Some(matrix(std::slice::from_ref(&self.video))),
                label,
            },
            batch: GenerationBatch::new(id, self.generations.iter().map(|g| matrix(g)).collect()).unwrap(),
        }
    }
}

fn unit(v: &[f32]) -> Vec<f64> {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    v.iter().map(|&x| f64::from(x) / norm).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cos(a: &[f32], b: &[f32]) -> f64 {
    dot(&unit(a), &unit(b))
}

pub fn oracle_srf(inst: &Instance) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for gen in &inst.generations {
        for frame in gen {
            let mut sims: Vec<f64> = inst.keyframes.iter().map(|key| cos(frame, key)).collect();
            let take = inst.k.min(sims.len());
            let mut picked = 0.0;
            for _ in 0..take {
                let (at, best) = sims
                    .iter()
                    .copied()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
                picked += best;
                sims.remove(at);
            }
            total += picked / take as f64;
            count += 1;
        }
    }
    total / count as f64
}

pub fn oracle_tgs(inst: &Instance) -> f64 {
    let q = inst.generations.len();
    let n = inst.generations[0].len();
    let consistency: Vec<Vec<f64>> = inst
        .generations
        .iter()
        .map(|g| (1..n).map(|i| 0.5 * (cos(&g[i], &g[i - 1]) + cos(&g[i], &g[0]))).collect())
        .collect();
    let mut sum_std = 0.0;
    for i in 0..n - 1 {
        let mean = consistency.iter().map(|c| c[i]).sum::<f64>() / q as f64;
        let var = consistency.iter().map(|c| (c[i] - mean).powi(2)).sum::<f64>() / q as f64;
        sum_std += var.sqrt();
    }
    sum_std / (n - 1) as f64
}

pub fn oracle_framewise(inst: &Instance) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for gen in &inst.generations {
        for g in gen {
            for t in &inst.all_frames {
                total += cos(g, t);
                count += 1;
            }
        }
    }
    total / count as f64
}

/// Largest absolute deviation between the library and the oracles over
/// `count` random instances.
pub fn signal_oracle_max_error(seed: u64, count: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let inst = random_instance(&mut rng);
        let rec = inst.record(&format!("s{i}"), None);
        let cfg = SignalConfig { k: inst.k, ..Default::default() };
        let (_, srf) = signals::srf_signal(&rec.target, &rec.batch, &cfg).unwrap();
        let (_, tgs) = signals::tgs_signal(&rec.batch, rec.batch.queries()).unwrap();
        let fw = signals::framewise_baseline(&rec.target, &rec.batch).unwrap();
        for (got, want, what) in [
            (srf, oracle_srf(&inst), "srf"),
            (tgs, oracle_tgs(&inst), "tgs"),
            (fw, oracle_framewise(&inst), "framewise"),
        ] {
            let err = (got - want).abs();
            assert!(err.is_finite(), "{what} non-finite on instance {i}");
            worst = worst.max(err);
        }
    }
    worst
}

/// Scores drawn from a small grid so ties are common; both classes present.
pub fn random_scores(rng: &mut impl Rng) -> Vec<(f64, bool)> {
    let n = rng.random_range(2..=60);
    let levels = rng.random_range(1..=12);
    let mut v: Vec<(f64, bool)> = (0..n)
        .map(|_| (f64::from(rng.random_range(0..levels)) * 0.25 - 1.0, rng.random_bool(0.5)))
        .collect();
    v[0].1 = true;
    v[1].1 = false;
    v
}

/// Pairwise Mann-Whitney: wins count 2, ties 1, over `2 * n_m * n_n`.
pub fn oracle_auc(scores: &[(f64, bool)]) -> f64 {
    let mut doubled: u64 = 0;
    let mut pairs: u64 = 0;
    for &(a, ma) in scores {
        if !ma {
            continue;
        }
        for &(b, mb) in scores {
            if mb {
                continue;
            }
            pairs += 1;
            doubled += if a > b { 2 } else if a == b { 1 } else { 0 };
        }
    }
    doubled as f64 / (2 * pairs) as f64
}

/// Tries every threshold `t` in the score set plus `+inf` with the rule
/// `score >= t`, keeping the best TPR whose FPR stays within `target`.
pub fn oracle_tpr_at_fpr(scores: &[(f64, bool)], target: f64) -> f64 {
    let n_m = scores.iter().filter(|s| s.1).count() as f64;
    let n_n = scores.len() as f64 - n_m;
    let mut best: f64 = 0.0;
    for t in scores.iter().map(|s| s.0).chain([f64::INFINITY]) {
        let tp = scores.iter().filter(|s| s.1 && s.0 >= t).count() as f64;
        let fp = scores.iter().filter(|s| !s.1 && s.0 >= t).count() as f64;
        if fp / n_n <= target {
            best = best.max(tp / n_m);
        }
    }
    best
}

#[derive(Debug, Default)]
pub struct MetricCheck {
    pub auc_mismatches: usize,
    pub max_trapezoid_gap: f64,
    pub tpr_mismatches: usize,
}

pub fn metric_oracle_check(seed: u64, count: usize) -> MetricCheck {
    let mut rng = rng(seed);
    let mut out = MetricCheck::default();
    for _ in 0..count {
        let scores = random_scores(&mut rng);
        let auc = metrics::auc(&scores).unwrap();
        if auc != oracle_auc(&scores) {
            out.auc_mismatches += 1;
        }
        let area = metrics::trapezoid_area(&metrics::roc_curve(&scores).unwrap());
        out.max_trapezoid_gap = out.max_trapezoid_gap.max((area - auc).abs());
        let target = rng.random_range(0.0..0.5);
        for fpr in [0.0, 0.01, 0.1, target, 1.0] {
            if metrics::tpr_at_fpr(&scores, fpr).unwrap() != oracle_tpr_at_fpr(&scores, fpr) {
                out.tpr_mismatches += 1;
            }
        }
    }
    out
}

/// Relative gradient error `|a - n| / max(|a|, |n|, floor)`. The floor keeps
/// parameters whose true gradient is ~0 (dead ReLU units) from dividing
/// finite-difference round-off by zero.
pub const GRAD_REL_FLOOR: f64 = 1e-6;

pub struct GradDraw {
    pub params: usize,
    pub max_rel_error: f64,
}

/// One random network and batch, every parameter checked by central
/// differences with step `h`.
pub fn gradient_draw(seed: u64, h: f64) -> GradDraw {
    let mut rng = rng(seed);
    let input = rng.random_range(1..=6);
    let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(1..=8)).collect();
    let mut net = Mlp::new(input, &hidden, 0.2, WeightInit::GlorotUniform, seed).unwrap();
    // biases start at zero; perturb everything so no parameter sits at init
    for i in 0..net.num_params() {
        let v = net.param(i) + rng.random_range(-0.3..0.3);
        net.set_param(i, v);
    }
    let batch: Vec<(Vec<f64>, f64)> = (0..rng.random_range(1..=8))
        .map(|_| {
            let x = (0..input).map(|_| rng.sample(StandardNormal)).collect();
            (x, if rng.random_bool(0.5) { 1.0 } else { 0.0 })
        })
        .collect();
    let (_, grads) = net.loss_and_grad(&batch).unwrap();
    let analytic = grads.flat();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let original = net.param(i);
        net.set_param(i, original + h);
        let up = net.loss_and_grad(&batch).unwrap().0;
        net.set_param(i, original - h);
        let down = net.loss_and_grad(&batch).unwrap().0;
        net.set_param(i, original);
        let numeric = (up - down) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_REL_FLOOR);
        worst = worst.max(rel);
    }
    GradDraw {
        params: analytic.len(),
        max_rel_error: worst,
    }
}

/// A random valid bundle: 1-4 records, shared N/Q/dim, optional baseline
/// inputs, random labels and a small metadata map.
pub fn random_bundle(rng: &mut impl Rng) -> AuditBundle {
    let dim = rng.random_range(1..=12);
    let n = rng.random_range(1..=6);
    let q = rng.random_range(1..=4);
    let records = (0..rng.random_range(1..=4))
        .map(|i| {
            let id = format!("id-{i}-{}", rng.random_range(0..1000u32));
            let m = rng.random_range(1..=5);
            let label = match rng.random_range(0..3) {
                0 => None,
                1 => Some(Label::Member),
                _ => Some(Label::NonMember),
            };
            let frames = rng.random_range(1..=6);
            let all_frames = rng.random_bool(0.5).then(|| matrix(&gaussian_rows(rng, frames, dim)));
            let video_embedding = rng.random_bool(0.5).then(|| matrix(&gaussian_rows(rng, 1, dim)));
            AuditRecord {
                target: TargetRecord {
                    sample_id: id.clone(),
                    keyframes: matrix(&gaussian_rows(rng, m, dim)),
                    all_frames,
                    video_embedding,
                    label,
                },
                batch: GenerationBatch::new(id, (0..q).map(|_| matrix(&gaussian_rows(rng, n, dim))).collect())
                    .unwrap(),
            }
        })
        .collect();
    let mut metadata = BTreeMap::new();
    if rng.random_bool(0.5) {
        metadata.insert("note".to_string(), serde_json::json!("random"));
        metadata.insert("x".to_string(), serde_json::json!(rng.random::<f64>()));
    }
    AuditBundle {
        manifest: Manifest {
            dataset: "random".into(),
            encoder: "gaussian".into(),
            dim: dim as u32,
            n_frames: n as u32,
            n_queries: q as u32,
            metadata,
        },
        records,
    }
}

/// Bit-level equality of every embedding value plus structural equality.
pub fn bundles_bit_equal(a: &AuditBundle, b: &AuditBundle) -> bool {
    fn bits(m: &EmbeddingMatrix) -> Vec<u32> {
        m.values().iter().map(|v| v.to_bits()).collect()
    }
    fn opt_bits(m: &Option<EmbeddingMatrix>) -> Option<Vec<u32>> {
        m.as_ref().map(bits)
    }
    a == b
        && a.records.iter().zip(&b.records).all(|(x, y)| {
            bits(&x.target.keyframes) == bits(&y.target.keyframes)
                && opt_bits(&x.target.all_frames) == opt_bits(&y.target.all_frames)
                && opt_bits(&x.target.video_embedding) == opt_bits(&y.target.video_embedding)
                && x.batch.generations.iter().map(bits).eq(y.batch.generations.iter().map(bits))
        })
}
