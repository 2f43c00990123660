//! Threshold-free and threshold-based attack metrics.
//!
//! Scores are `(score, is_member)` pairs; higher scores mean "more
//! member-like". AUC uses the Mann-Whitney formulation with half credit for
//! ties, which coincides with the trapezoidal area under [`roc_curve`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const DEFAULT_TARGET_FPR: f64 = 0.01;

fn class_counts(scores: &[(f64, bool)]) -> Result<(usize, usize)> {
    if let Some((s, _)) = scores.iter().find(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let members = scores.iter().filter(|(_, m)| *m).count();
    let nonmembers = scores.len() - members;
    match (members, nonmembers) {
        (0, _) => Err(Error::SingleClass("non-members")),
        (_, 0) => Err(Error::SingleClass("members")),
        counts => Ok(counts),
    }
}

/// Ascending by score.
fn sorted(scores: &[(f64, bool)]) -> Vec<(f64, bool)> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// Mann-Whitney AUC, tie-aware, computed from midranks in integer
/// arithmetic (ranks doubled) so the result is exact.
pub fn auc(scores: &[(f64, bool)]) -> Result<f64> {
    let (n_m, n_n) = class_counts(scores)?;
    let v = sorted(scores);
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1].0 == v[i].0 {
            j += 1;
        }
        // 1-based ranks i+1..=j+1, doubled midrank = (i+1)+(j+1)
        let doubled_mid = (i + j + 2) as u128;
        let members_in_group = v[i..=j].iter().filter(|(_, m)| *m).count() as u128;
        doubled_rank_sum += doubled_mid * members_in_group;
        i = j + 1;
    }
    let n_m128 = n_m as u128;
    let doubled_u = doubled_rank_sum - n_m128 * (n_m128 + 1);
    Ok(doubled_u as f64 / (2 * n_m128 * n_n as u128) as f64)
}

/// Cumulative (false positives, true positives) after admitting each
/// distinct score from the top, starting at (0, 0).
fn roc_counts(scores: &[(f64, bool)]) -> Vec<(usize, usize)> {
    let mut v = sorted(scores);
    v.reverse();
    let mut out = vec![(0, 0)];
    let (mut fp, mut tp) = (0, 0);
    let mut i = 0;
    while i < v.len() {
        let s = v[i].0;
        while i < v.len() && v[i].0 == s {
            if v[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((fp, tp));
    }
    out
}

/// ROC points `(fpr, tpr)` from (0, 0) to (1, 1). Tied scores form one
/// point; interior points on a purely vertical or horizontal run are
/// dropped since they add no area and no operating point of interest.
pub fn roc_curve(scores: &[(f64, bool)]) -> Result<Vec<(f64, f64)>> {
    let (n_m, n_n) = class_counts(scores)?;
    let counts = roc_counts(scores);
    let mut kept: Vec<(usize, usize)> = Vec::with_capacity(counts.len());
    for &p in &counts {
        while kept.len() >= 2 {
            let (a, b) = (kept[kept.len() - 2], kept[kept.len() - 1]);
            let vertical = a.0 == b.0 && b.0 == p.0;
            let horizontal = a.1 == b.1 && b.1 == p.1;
            if vertical || horizontal {
                kept.pop();
            } else {
                break;
            }
        }
        kept.push(p);
    }
    Ok(kept
        .into_iter()
        .map(|(fp, tp)| (fp as f64 / n_n as f64, tp as f64 / n_m as f64))
        .collect())
}

/// Trapezoidal area under a polyline of ROC points.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5)
        .sum()
}

/// Largest TPR over thresholds whose empirical FPR does not exceed
/// `target_fpr`. No interpolation between operating points.
pub fn tpr_at_fpr(scores: &[(f64, bool)], target_fpr: f64) -> Result<f64> {
    let (n_m, n_n) = class_counts(scores)?;
    let best = roc_counts(scores)
        .into_iter()
        .filter(|&(fp, _)| fp as f64 / n_n as f64 <= target_fpr)
        .map(|(_, tp)| tp)
        .max()
        .unwrap_or(0);
    Ok(best as f64 / n_m as f64)
}

/// `(TPR + TNR) / 2` where `score > threshold` predicts "member".
pub fn balanced_accuracy(scores: &[(f64, bool)], threshold: f64) -> Result<f64> {
    let (n_m, n_n) = class_counts(scores)?;
    let tp = scores.iter().filter(|&&(s, m)| m && s > threshold).count();
    let tn = scores.iter().filter(|&&(s, m)| !m && s <= threshold).count();
    Ok(0.5 * (tp as f64 / n_m as f64 + tn as f64 / n_n as f64))
}

/// How the balanced-accuracy threshold is chosen for a score track.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum ThresholdRule {
    Fixed(f64),
    /// Median of the evaluated score pool; uses no labels.
    PoolMedian,
}

impl ThresholdRule {
    pub fn resolve(self, scores: &[(f64, bool)]) -> f64 {
        match self {
            ThresholdRule::Fixed(t) => t,
            ThresholdRule::PoolMedian => {
                let pool: Vec<f64> = scores.iter().map(|(s, _)| *s).collect();
                stats::median(&pool)
            }
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ThresholdRule::Fixed(_) => "fixed",
            ThresholdRule::PoolMedian => "pool-median (label-free heuristic)",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: String,
    pub auc: f64,
    pub tpr_at_1pct_fpr: f64,
    pub target_fpr: f64,
    pub balanced_accuracy: f64,
    pub threshold: f64,
    pub threshold_rule: String,
    pub n_members: usize,
    pub n_nonmembers: usize,
    pub roc: Vec<[f64; 2]>,
}

impl MetricsReport {
    pub fn compute(mode: impl Into<String>, scores: &[(f64, bool)], rule: ThresholdRule) -> Result<Self> {
        let (n_members, n_nonmembers) = class_counts(scores)?;
        let threshold = rule.resolve(scores);
        Ok(Self {
            mode: mode.into(),
            auc: auc(scores)?,
            tpr_at_1pct_fpr: tpr_at_fpr(scores, DEFAULT_TARGET_FPR)?,
            target_fpr: DEFAULT_TARGET_FPR,
            balanced_accuracy: balanced_accuracy(scores, threshold)?,
            threshold,
            threshold_rule: rule.describe().to_string(),
            n_members,
            n_nonmembers,
            roc: roc_curve(scores)?.into_iter().map(|(x, y)| [x, y]).collect(),
        })
    }
}
