//! End-to-end runners for each threat model over a set of signal records,
//! producing the fused track plus single-signal and baseline tracks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    self, AttackMode, AttackScore, FeatureVector, FusionWeights, ReferenceStats, SupervisedModel,
};
use crate::error::{Error, Result};
use crate::eval::metrics::{self, MetricsReport, ThresholdRule};
use crate::mlp::{stratified_holdout, TrainConfig};
use crate::signals::SignalRecord;
use crate::store::{AuditBundle, Label};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub weights: FusionWeights,
    pub train: TrainConfig,
    /// Fraction of each class used for training (supervised) or of the
    /// non-members used for calibration (reference without a reference set).
    pub split_ratio: f64,
    pub split_seed: u64,
    /// Train separate SRF-only and TGS-only classifiers in supervised mode.
    pub single_signal_models: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            weights: FusionWeights::default(),
            train: TrainConfig::default(),
            split_ratio: 0.8,
            split_seed: 0,
            single_signal_models: true,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.train.validate()?;
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config("split_ratio must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Scores plus whatever artifact the mode produced.
#[derive(Clone, Debug)]
pub struct AttackRun {
    pub scores: Vec<AttackScore>,
    pub model: Option<SupervisedModel>,
    pub stats: Option<ReferenceStats>,
}

fn require_label(rec: &SignalRecord) -> Result<Label> {
    rec.label()
        .ok_or_else(|| Error::Missing("membership label".into()).in_record(rec.sample_id()))
}

/// Seeded per-class shuffle then slice. Returns `(train, test)` in input
/// order.
pub fn stratified_split<'a>(
    records: &'a [SignalRecord],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<&'a SignalRecord>, Vec<&'a SignalRecord>)> {
    let labels = records
        .iter()
        .map(|r| require_label(r).map(Label::is_member))
        .collect::<Result<Vec<_>>>()?;
    let members = labels.iter().filter(|m| **m).count();
    match (members, labels.len() - members) {
        (0, _) => return Err(Error::SingleClass("non-members")),
        (_, 0) => return Err(Error::SingleClass("members")),
        (m, n) if m < 2 || n < 2 => {
            return Err(Error::Insufficient(
                "a stratified split needs at least 2 samples of each class".into(),
            ))
        }
        _ => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, test) = stratified_holdout(&labels, 1.0 - ratio, &mut rng);
    Ok((
        train.into_iter().map(|i| &records[i]).collect(),
        test.into_iter().map(|i| &records[i]).collect(),
    ))
}

/// Raw baseline tracks except `srf`/`tgs`, which each mode supplies itself.
fn extra_baselines(eval: &[&SignalRecord]) -> Result<Vec<AttackScore>> {
    let mut by_track: Vec<(AttackMode, Vec<AttackScore>)> = Vec::new();
    for rec in eval {
        for s in attacks::single_signal_scores(rec)? {
            if matches!(&s.mode, AttackMode::Baseline(n) if n == "srf" || n == "tgs") {
                continue;
            }
            match by_track.iter_mut().find(|(m, _)| *m == s.mode) {
                Some((_, v)) => v.push(s),
                None => by_track.push((s.mode.clone(), vec![s])),
            }
        }
    }
    Ok(by_track.into_iter().flat_map(|(_, v)| v).collect())
}

fn baseline_track(
    eval: &[&SignalRecord],
    name: &str,
    f: impl Fn(&SignalRecord) -> f64,
) -> Vec<AttackScore> {
    eval.iter()
        .map(|r| AttackScore {
            sample_id: r.sample_id().to_string(),
            mode: AttackMode::baseline(name),
            score: f(r),
            label: r.label(),
        })
        .collect()
}

pub fn run_query_only(records: &[SignalRecord], w: &FusionWeights) -> Result<AttackRun> {
    let eval: Vec<&SignalRecord> = records.iter().collect();
    let mut scores = eval
        .iter()
        .map(|r| attacks::query_only_attack(&r.feature, w))
        .collect::<Result<Vec<_>>>()?;
    scores.extend(baseline_track(&eval, "srf", |r| attacks::intrinsic_components(&r.feature).0));
    scores.extend(baseline_track(&eval, "tgs", |r| attacks::intrinsic_components(&r.feature).1));
    scores.extend(extra_baselines(&eval)?);
    Ok(AttackRun {
        scores,
        model: None,
        stats: None,
    })
}

/// Scores `eval` against fixed calibration statistics.
pub fn score_reference(
    eval: &[&SignalRecord],
    stats: &ReferenceStats,
    w: &FusionWeights,
) -> Result<Vec<AttackScore>> {
    let mut scores = eval
        .iter()
        .map(|r| attacks::reference_attack(&r.feature, stats, w))
        .collect::<Result<Vec<_>>>()?;
    scores.extend(baseline_track(eval, "srf", |r| attacks::reference_components(&r.feature, stats).0));
    scores.extend(baseline_track(eval, "tgs", |r| attacks::reference_components(&r.feature, stats).1));
    scores.extend(extra_baselines(eval)?);
    Ok(scores)
}

/// Calibrates on `reference` when given and scores every record. Otherwise
/// calibrates on a seeded `split_ratio` share of the labeled non-members and
/// scores the members plus the remaining non-members.
pub fn run_reference(
    records: &[SignalRecord],
    reference: Option<&[SignalRecord]>,
    cfg: &AttackConfig,
) -> Result<AttackRun> {
    cfg.validate()?;
    let (calib, eval): (Vec<&SignalRecord>, Vec<&SignalRecord>) = match reference {
        Some(r) => (r.iter().collect(), records.iter().collect()),
        None => {
            let mut non = Vec::new();
            let mut eval = Vec::new();
            for rec in records {
                let label = rec.label().ok_or_else(|| {
                    Error::Missing(
                        "reference set: pass a reference file or fully labeled signals".into(),
                    )
                    .in_record(rec.sample_id())
                })?;
                if label.is_member() {
                    eval.push(rec);
                } else {
                    non.push(rec);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.split_seed);
            non.shuffle(&mut rng);
            let take = ((non.len() as f64 * cfg.split_ratio).round() as usize).min(non.len());
            let held = non.split_off(take);
            eval.extend(held);
            eval.sort_by(|a, b| a.sample_id().cmp(b.sample_id()));
            (non, eval)
        }
    };
    let stats = attacks::calibrate(calib.iter().map(|r| &r.feature))?;
    Ok(AttackRun {
        scores: score_reference(&eval, &stats, &cfg.weights)?,
        model: None,
        stats: Some(stats),
    })
}

fn features(recs: &[&SignalRecord], f: impl Fn(&SignalRecord) -> Vec<f64>) -> Vec<FeatureVector> {
    recs.iter()
        .map(|r| FeatureVector {
            sample_id: r.sample_id().to_string(),
            x: f(r),
            label: r.label(),
        })
        .collect()
}

/// Seeded stratified split, trains on the training side and scores the
/// held-out side.
pub fn run_supervised(records: &[SignalRecord], cfg: &AttackConfig) -> Result<AttackRun> {
    cfg.validate()?;
    let (train, test) = stratified_split(records, cfg.split_ratio, cfg.split_seed)?;
    let full = |recs: &[&SignalRecord]| {
        recs.iter()
            .map(|r| attacks::build_feature(&r.feature))
            .collect::<Result<Vec<_>>>()
    };
    let (model, mut scores) = attacks::supervised_attack(&full(&train)?, &full(&test)?, &cfg.train)?;
    if cfg.single_signal_models {
        type Pick = fn(&SignalRecord) -> Vec<f64>;
        let tracks: [(&str, Pick); 2] = [
            ("srf", |r| r.feature.srf_vector.clone()),
            ("tgs", |r| r.feature.instability_vector.clone()),
        ];
        for (name, pick) in tracks {
            let m = SupervisedModel::train(&features(&train, pick), &cfg.train)?;
            scores.extend(m.score(&features(&test, pick), AttackMode::baseline(name))?);
        }
    }
    scores.extend(extra_baselines(&test)?);
    Ok(AttackRun {
        scores,
        model: Some(model),
        stats: None,
    })
}

/// Classifier over the target's own video-level embedding only. It sees no
/// generations, so it measures how separable the two datasets are rather
/// than what the generator memorized.
pub fn run_blind_classifier(bundle: &AuditBundle, cfg: &AttackConfig) -> Result<AttackRun> {
    cfg.validate()?;
    let mut feats = Vec::with_capacity(bundle.records.len());
    let mut labels = Vec::with_capacity(bundle.records.len());
    for rec in &bundle.records {
        let id = rec.sample_id();
        let v = rec.target.video_embedding.as_ref().ok_or_else(|| {
            Error::Missing("video_embedding (needed by the blind classifier)".into()).in_record(id)
        })?;
        let label = rec
            .label()
            .ok_or_else(|| Error::Missing("membership label".into()).in_record(id))?;
        feats.push(FeatureVector {
            sample_id: id.to_string(),
            x: v.row(0).iter().map(|&x| x as f64).collect(),
            label: Some(label),
        });
        labels.push(label.is_member());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.split_seed);
    let (train, test) = stratified_holdout(&labels, 1.0 - cfg.split_ratio, &mut rng);
    let pick = |idx: &[usize]| idx.iter().map(|&i| feats[i].clone()).collect::<Vec<_>>();
    let model = SupervisedModel::train(&pick(&train), &cfg.train)?;
    let scores = model.score(&pick(&test), AttackMode::baseline("blind"))?;
    Ok(AttackRun {
        scores,
        model: Some(model),
        stats: None,
    })
}

/// Balanced-accuracy threshold for a track.
pub fn threshold_rule(mode: &AttackMode) -> ThresholdRule {
    match mode {
        AttackMode::Supervised => ThresholdRule::Fixed(0.5),
        AttackMode::Reference => ThresholdRule::Fixed(0.0),
        AttackMode::QueryOnly | AttackMode::Baseline(_) => ThresholdRule::PoolMedian,
    }
}

fn labeled(scores: &[&AttackScore]) -> Result<Vec<(f64, bool)>> {
    scores
        .iter()
        .map(|s| {
            let label = s.label.ok_or_else(|| {
                Error::Missing(format!("label on a {} score", s.mode)).in_record(&s.sample_id)
            })?;
            Ok((s.score, label.is_member()))
        })
        .collect()
}

/// Scores of one track, in input order.
pub fn track<'a>(scores: &'a [AttackScore], mode: &AttackMode) -> Vec<&'a AttackScore> {
    scores.iter().filter(|s| &s.mode == mode).collect()
}

pub fn track_auc(scores: &[AttackScore], mode: &AttackMode) -> Result<f64> {
    let t = track(scores, mode);
    if t.is_empty() {
        return Err(Error::Missing(format!("score track {mode}")));
    }
    metrics::auc(&labeled(&t)?)
}

/// One report per track, in order of first appearance. A sample scored twice
/// in the same track is an error: baselines from different attack runs share
/// track names but not score scales, so they must be evaluated separately.
pub fn evaluate(scores: &[AttackScore]) -> Result<Vec<MetricsReport>> {
    let mut seen = std::collections::HashSet::new();
    let mut modes: Vec<&AttackMode> = Vec::new();
    for s in scores {
        if !seen.insert((&s.mode, s.sample_id.as_str())) {
            return Err(Error::Schema(format!(
                "sample {} appears twice in track {}; evaluate each attack run separately",
                s.sample_id, s.mode
            )));
        }
        if !modes.contains(&&s.mode) {
            modes.push(&s.mode);
        }
    }
    modes
        .into_iter()
        .map(|mode| {
            let pairs = labeled(&track(scores, mode))?;
            MetricsReport::compute(mode.to_string(), &pairs, threshold_rule(mode))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{Baselines, SignalFeature};

    fn rec(id: &str, member: Option<bool>, srf: f64, tgs: f64) -> SignalRecord {
        SignalRecord {
            feature: SignalFeature {
                sample_id: id.into(),
                label: member.map(Label::from),
                srf_vector: vec![srf, srf + 0.01],
                srf_scalar: srf + 0.005,
                instability_vector: vec![tgs],
                tgs_scalar: tgs,
            },
            baselines: Baselines {
                framewise: Some(srf * 0.9),
                videolevel: None,
                mean_then_std: tgs * 0.5,
            },
            segments: None,
        }
    }

    fn world(n: usize) -> Vec<SignalRecord> {
        (0..2 * n)
            .map(|i| {
                let m = i < n;
                let j = (i % n) as f64 / n as f64;
                if m {
                    rec(&format!("m{i:03}"), Some(true), 0.8 + 0.1 * j, 0.02 + 0.01 * j)
                } else {
                    rec(&format!("n{i:03}"), Some(false), 0.5 + 0.1 * j, 0.2 + 0.05 * j)
                }
            })
            .collect()
    }

    #[test]
    fn split_is_stratified_and_seeded() {
        let w = world(50);
        let (train, test) = stratified_split(&w, 0.8, 3).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        assert_eq!(test.iter().filter(|r| r.label() == Some(Label::Member)).count(), 10);
        let again = stratified_split(&w, 0.8, 3).unwrap().1;
        assert_eq!(test, again);
    }

    #[test]
    fn query_only_scores_every_sample() {
        let mut w = world(10);
        w[0].feature.label = None;
        let run = run_query_only(&w, &FusionWeights::default()).unwrap();
        assert_eq!(track(&run.scores, &AttackMode::QueryOnly).len(), 20);
        assert!(track(&run.scores, &AttackMode::baseline("videolevel")).is_empty());
        assert_eq!(track(&run.scores, &AttackMode::baseline("framewise")).len(), 20);
    }

    #[test]
    fn reference_split_and_stats_reuse_agree() {
        let w = world(40);
        let cfg = AttackConfig::default();
        let run = run_reference(&w, None, &cfg).unwrap();
        let fused = track(&run.scores, &AttackMode::Reference);
        assert_eq!(fused.len(), 40 + 8);
        let ids: Vec<&str> = fused.iter().map(|s| s.sample_id.as_str()).collect();
        let eval: Vec<&SignalRecord> = w.iter().filter(|r| ids.contains(&r.sample_id())).collect();
        let again = score_reference(&eval, run.stats.as_ref().unwrap(), &cfg.weights).unwrap();
        assert_eq!(run.scores, again);
        assert_eq!(track_auc(&run.scores, &AttackMode::Reference).unwrap(), 1.0);
    }

    #[test]
    fn reference_without_labels_or_reference_fails() {
        let mut w = world(5);
        w[7].feature.label = None;
        let err = run_reference(&w, None, &AttackConfig::default()).unwrap_err();
        assert!(err.to_string().contains("n007"), "{err}");
    }

    #[test]
    fn supervised_single_class_fails() {
        let w: Vec<SignalRecord> = world(10).into_iter().take(10).collect();
        assert!(matches!(
            run_supervised(&w, &AttackConfig::default()),
            Err(Error::SingleClass(_))
        ));
    }

    #[test]
    fn evaluate_groups_tracks_with_their_rules() {
        let run = run_query_only(&world(10), &FusionWeights::default()).unwrap();
        let reports = evaluate(&run.scores).unwrap();
        assert_eq!(reports[0].mode, "query_only");
        assert!(reports[0].threshold_rule.contains("label-free"));
        assert_eq!(reports[0].auc, track_auc(&run.scores, &AttackMode::QueryOnly).unwrap());
        assert_eq!(reports.len(), 5);
        let mut unlabeled = run.scores.clone();
        unlabeled[3].label = None;
        assert!(evaluate(&unlabeled).is_err());
        let mut doubled = run.scores.clone();
        doubled.push(run.scores[0].clone());
        assert!(matches!(evaluate(&doubled), Err(Error::Schema(_))));
    }
}
