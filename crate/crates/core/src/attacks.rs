//! The three threat models: a supervised classifier over the full signal
//! vectors, reference-calibrated Z-score fusion, and query-only fusion.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mlp::{self, Checkpoint, Mlp, TrainConfig};
use crate::signals::{SignalFeature, SignalRecord};
use crate::stats;
use crate::store::Label;

/// Calibration rejects standard deviations at or below this.
pub const MIN_SIGMA: f64 = 1e-12;

/// Score track tag. Serialized as `supervised`, `reference`, `query_only`
/// or `baseline:<name>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackMode {
    Supervised,
    Reference,
    QueryOnly,
    Baseline(String),
}

impl AttackMode {
    pub fn baseline(name: &str) -> Self {
        AttackMode::Baseline(name.to_string())
    }

    pub fn is_baseline(&self) -> bool {
        matches!(self, AttackMode::Baseline(_))
    }
}

impl fmt::Display for AttackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackMode::Supervised => f.write_str("supervised"),
            AttackMode::Reference => f.write_str("reference"),
            AttackMode::QueryOnly => f.write_str("query_only"),
            AttackMode::Baseline(name) => write!(f, "baseline:{name}"),
        }
    }
}

impl FromStr for AttackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(AttackMode::Supervised),
            "reference" => Ok(AttackMode::Reference),
            "query_only" | "query-only" => Ok(AttackMode::QueryOnly),
            _ => match s.strip_prefix("baseline:") {
                Some(name) if !name.is_empty() => Ok(AttackMode::baseline(name)),
                _ => Err(Error::Schema(format!("unknown attack mode {s:?}"))),
            },
        }
    }
}

impl Serialize for AttackMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AttackMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One line of a score dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackScore {
    pub sample_id: String,
    pub mode: AttackMode,
    pub score: f64,
    pub label: Option<Label>,
}

fn scored(sig: &SignalFeature, mode: AttackMode, score: f64) -> Result<AttackScore> {
    if !score.is_finite() {
        return Err(Error::NonFinite(format!("{mode} score")).in_record(&sig.sample_id));
    }
    Ok(AttackScore {
        sample_id: sig.sample_id.clone(),
        mode,
        score,
        label: sig.label,
    })
}

fn check_complete(sig: &SignalFeature) -> Result<()> {
    if sig.srf_vector.is_empty() || sig.instability_vector.len() + 1 != sig.srf_vector.len() {
        return Err(Error::DimensionMismatch {
            context: "instability vector length (frames - 1)".into(),
            expected: sig.srf_vector.len().saturating_sub(1),
            found: sig.instability_vector.len(),
        }
        .in_record(&sig.sample_id));
    }
    if !sig.is_finite() {
        return Err(Error::NonFinite("signal feature".into()).in_record(&sig.sample_id));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub sample_id: String,
    pub x: Vec<f64>,
    pub label: Option<Label>,
}

/// `srf_vector ‖ instability_vector`, length `2N - 1`.
pub fn build_feature(sig: &SignalFeature) -> Result<FeatureVector> {
    check_complete(sig)?;
    let mut x = Vec::with_capacity(sig.srf_vector.len() + sig.instability_vector.len());
    x.extend_from_slice(&sig.srf_vector);
    x.extend_from_slice(&sig.instability_vector);
    Ok(FeatureVector {
        sample_id: sig.sample_id.clone(),
        x,
        label: sig.label,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionWeights {
    pub w_srf: f64,
    pub w_tgs: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            w_srf: 0.5,
            w_tgs: 0.5,
        }
    }
}

impl FusionWeights {
    pub fn new(w_srf: f64, w_tgs: f64) -> Result<Self> {
        let w = Self { w_srf, w_tgs };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.w_srf.is_finite() || !self.w_tgs.is_finite() {
            return Err(Error::Config("fusion weights must be finite".into()));
        }
        if self.w_srf == 0.0 && self.w_tgs == 0.0 {
            return Err(Error::Config("fusion weights must not both be zero".into()));
        }
        Ok(())
    }

    fn fuse(&self, srf: f64, tgs: f64) -> f64 {
        self.w_srf * srf + self.w_tgs * tgs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub mu_srf: f64,
    pub sigma_srf: f64,
    pub mu_tgs: f64,
    pub sigma_tgs: f64,
    pub n_ref: usize,
}

impl ReferenceStats {
    /// Checks the invariants of a stats file read from disk.
    pub fn validate(&self) -> Result<()> {
        if self.n_ref < 2 {
            return Err(Error::Insufficient(format!(
                "reference stats built from {} samples, need at least 2",
                self.n_ref
            )));
        }
        for (name, v) in [("mu_srf", self.mu_srf), ("mu_tgs", self.mu_tgs)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("reference {name}")));
            }
        }
        for (name, v) in [("sigma_srf", self.sigma_srf), ("sigma_tgs", self.sigma_tgs)] {
            if !(v > MIN_SIGMA && v.is_finite()) {
                return Err(Error::DegenerateCalibration(format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

/// Population mean and std of the reference set's scalar signals.
pub fn calibrate<'a>(reference: impl IntoIterator<Item = &'a SignalFeature>) -> Result<ReferenceStats> {
    let mut srf = Vec::new();
    let mut tgs = Vec::new();
    for sig in reference {
        if !sig.srf_scalar.is_finite() || !sig.tgs_scalar.is_finite() {
            return Err(Error::NonFinite("reference scalar signal".into()).in_record(&sig.sample_id));
        }
        srf.push(sig.srf_scalar);
        tgs.push(sig.tgs_scalar);
    }
    if srf.len() < 2 {
        return Err(Error::Insufficient(format!(
            "calibration needs at least 2 reference samples, got {}",
            srf.len()
        )));
    }
    let (mu_srf, sigma_srf) = stats::mean_std(&srf);
    let (mu_tgs, sigma_tgs) = stats::mean_std(&tgs);
    let out = ReferenceStats {
        mu_srf,
        sigma_srf,
        mu_tgs,
        sigma_tgs,
        n_ref: srf.len(),
    };
    out.validate()?;
    Ok(out)
}

/// `(A_SRF, A_TGS)`, both oriented so that larger means more member-like.
pub fn reference_components(sig: &SignalFeature, stats: &ReferenceStats) -> (f64, f64) {
    (
        (sig.srf_scalar - stats.mu_srf) / stats.sigma_srf,
        -(sig.tgs_scalar - stats.mu_tgs) / stats.sigma_tgs,
    )
}

pub fn reference_attack(sig: &SignalFeature, stats: &ReferenceStats, w: &FusionWeights) -> Result<AttackScore> {
    stats.validate()?;
    w.validate()?;
    let (a_srf, a_tgs) = reference_components(sig, stats);
    scored(sig, AttackMode::Reference, w.fuse(a_srf, a_tgs))
}

/// `(S_SRF, 1 - S_TGS)`. Reads nothing but the sample itself.
pub fn intrinsic_components(sig: &SignalFeature) -> (f64, f64) {
    (sig.srf_scalar, 1.0 - sig.tgs_scalar)
}

pub fn query_only_attack(sig: &SignalFeature, w: &FusionWeights) -> Result<AttackScore> {
    w.validate()?;
    let (s_srf, s_tgs) = intrinsic_components(sig);
    scored(sig, AttackMode::QueryOnly, w.fuse(s_srf, s_tgs))
}

/// Directionally aligned single-signal tracks. Optional baselines that were
/// not computed are simply absent.
pub fn single_signal_scores(rec: &SignalRecord) -> Result<Vec<AttackScore>> {
    let sig = &rec.feature;
    let (s_srf, s_tgs) = intrinsic_components(sig);
    let mut tracks = vec![("srf", s_srf), ("tgs", s_tgs)];
    tracks.extend(rec.baselines.framewise.map(|v| ("framewise", v)));
    tracks.extend(rec.baselines.videolevel.map(|v| ("videolevel", v)));
    tracks.push(("tgs_mean_then_std", 1.0 - rec.baselines.mean_then_std));
    if let Some(seg) = rec.segments {
        tracks.push(("tgs_early", 1.0 - seg.early));
        tracks.push(("tgs_middle", 1.0 - seg.middle));
        tracks.push(("tgs_late", 1.0 - seg.late));
    }
    tracks
        .into_iter()
        .map(|(name, v)| scored(sig, AttackMode::baseline(name), v))
        .collect()
}

/// Per-feature affine map fitted on the shadow set. Constant features keep
/// scale 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(xs: &[Vec<f64>]) -> Result<Self> {
        let dim = xs
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Insufficient("no training features".into()))?;
        let mut mean = Vec::with_capacity(dim);
        let mut scale = Vec::with_capacity(dim);
        for j in 0..dim {
            let col: Vec<f64> = xs.iter().map(|x| x[j]).collect();
            let (m, s) = stats::mean_std(&col);
            mean.push(m);
            scale.push(if s > MIN_SIGMA { s } else { 1.0 });
        }
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                context: "feature vector".into(),
                expected: self.mean.len(),
                found: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

/// Trained attack classifier together with its input standardisation.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedModel {
    pub standardizer: Standardizer,
    pub mlp: Mlp,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    standardizer: Standardizer,
    model: Checkpoint,
}

impl SupervisedModel {
    pub fn train(shadow: &[FeatureVector], cfg: &TrainConfig) -> Result<Self> {
        let mut xs = Vec::with_capacity(shadow.len());
        let mut ys = Vec::with_capacity(shadow.len());
        for f in shadow {
            let label = f.label.ok_or_else(|| {
                Error::Missing("label on a shadow sample".into()).in_record(&f.sample_id)
            })?;
            xs.push(f.x.clone());
            ys.push(label.is_member());
        }
        if let Some(bad) = shadow.iter().find(|f| f.x.len() != shadow[0].x.len()) {
            return Err(Error::DimensionMismatch {
                context: "shadow feature length".into(),
                expected: shadow[0].x.len(),
                found: bad.x.len(),
            }
            .in_record(&bad.sample_id));
        }
        let standardizer = Standardizer::fit(&xs)?;
        let xs = xs
            .iter()
            .map(|x| standardizer.apply(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            standardizer,
            mlp: mlp::train(&xs, &ys, cfg)?,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.mlp.predict(&self.standardizer.apply(x)?)
    }

    pub fn score(&self, targets: &[FeatureVector], mode: AttackMode) -> Result<Vec<AttackScore>> {
        targets
            .iter()
            .map(|t| {
                let p = self.predict(&t.x).map_err(|e| e.in_record(&t.sample_id))?;
                Ok(AttackScore {
                    sample_id: t.sample_id.clone(),
                    mode: mode.clone(),
                    score: p,
                    label: t.label,
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            standardizer: self.standardizer.clone(),
            model: self.mlp.to_checkpoint(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let mlp = Mlp::from_checkpoint(f.model)?;
        if f.standardizer.mean.len() != mlp.input_dim() || f.standardizer.scale.len() != mlp.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "standardizer vs model input".into(),
                expected: mlp.input_dim(),
                found: f.standardizer.mean.len(),
            });
        }
        Ok(Self {
            standardizer: f.standardizer,
            mlp,
        })
    }
}

/// Trains on `shadow` and returns membership probabilities for `targets`.
pub fn supervised_attack(
    shadow: &[FeatureVector],
    targets: &[FeatureVector],
    cfg: &TrainConfig,
) -> Result<(SupervisedModel, Vec<AttackScore>)> {
    let model = SupervisedModel::train(shadow, cfg)?;
    let scores = model.score(targets, AttackMode::Supervised)?;
    Ok((model, scores))
}
