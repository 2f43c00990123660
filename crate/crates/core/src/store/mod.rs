//! Embedding data model and interchange formats.
//!
//! Every embedding that reaches the signal layer passes through an
//! [`AuditBundle`]: the binary VLEB container ([`vleb`]) or its JSON mirror
//! ([`json`]). Values are stored as `f32` and widened to `f64` at use-site.

pub mod json;
pub mod vleb;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows with a Euclidean norm at or below this are rejected.
pub const MIN_ROW_NORM: f64 = 1e-12;

/// Dense row-major matrix of per-frame embeddings.
#[derive(Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::InvalidMatrix(format!(
                "shape {rows}x{dim} must be at least 1x1"
            )));
        }
        if values.len() != rows * dim {
            return Err(Error::InvalidMatrix(format!(
                "{} values for shape {rows}x{dim}",
                values.len()
            )));
        }
        let m = Self { rows, dim, values };
        m.validate()?;
        Ok(m)
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: format!("row {i}"),
                    expected: dim,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, values)
    }

    /// Convenience constructor from `f64` rows; values are narrowed to `f32`.
    pub fn from_f64_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let narrowed: Vec<Vec<f32>> = rows
            .iter()
            .map(|r| r.as_ref().iter().map(|&v| v as f32).collect())
            .collect();
        Self::from_rows(&narrowed)
    }

    fn validate(&self) -> Result<()> {
        for (i, row) in self.iter_rows().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("row {i}")));
            }
            let norm = row
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt();
            if norm <= MIN_ROW_NORM {
                return Err(Error::ZeroNorm(format!("row {i}")));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    /// Keeps the first `rows` rows.
    pub fn truncated(&self, rows: usize) -> Result<Self> {
        if rows == 0 || rows > self.rows {
            return Err(Error::InvalidMatrix(format!(
                "cannot truncate {} rows to {rows}",
                self.rows
            )));
        }
        Ok(Self {
            rows,
            dim: self.dim,
            values: self.values[..rows * self.dim].to_vec(),
        })
    }
}

impl fmt::Debug for EmbeddingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmbeddingMatrix")
            .field("rows", &self.rows)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

/// Ground-truth membership of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonMember,
    Member,
}

impl Label {
    pub fn is_member(self) -> bool {
        self == Label::Member
    }

    pub fn from_i8(v: i8) -> Result<Option<Label>> {
        match v {
            -1 => Ok(None),
            0 => Ok(Some(Label::NonMember)),
            1 => Ok(Some(Label::Member)),
            other => Err(Error::Schema(format!("label {other} not in {{-1, 0, 1}}"))),
        }
    }

    pub fn to_i8(label: Option<Label>) -> i8 {
        match label {
            None => -1,
            Some(Label::NonMember) => 0,
            Some(Label::Member) => 1,
        }
    }
}

impl From<bool> for Label {
    fn from(member: bool) -> Self {
        if member {
            Label::Member
        } else {
            Label::NonMember
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(self.is_member()))
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match i64::deserialize(d)? {
            0 => Ok(Label::NonMember),
            1 => Ok(Label::Member),
            other => Err(serde::de::Error::custom(format!(
                "label must be 0 or 1, got {other}"
            ))),
        }
    }
}

/// A target video: keyframe anchors plus optional baseline inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetRecord {
    pub sample_id: String,
    pub keyframes: EmbeddingMatrix,
    pub all_frames: Option<EmbeddingMatrix>,
    pub video_embedding: Option<EmbeddingMatrix>,
    pub label: Option<Label>,
}

impl TargetRecord {
    pub fn dim(&self) -> usize {
        self.keyframes.dim()
    }

    fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if let Some(frames) = &self.all_frames {
            if frames.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: "all_frames".into(),
                    expected: dim,
                    found: frames.dim(),
                });
            }
        }
        if let Some(v) = &self.video_embedding {
            if v.rows() != 1 {
                return Err(Error::InvalidMatrix(format!(
                    "video_embedding must have 1 row, has {}",
                    v.rows()
                )));
            }
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: "video_embedding".into(),
                    expected: dim,
                    found: v.dim(),
                });
            }
        }
        Ok(())
    }
}

/// The `Q` generated videos obtained from one prompt.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationBatch {
    pub sample_id: String,
    pub generations: Vec<EmbeddingMatrix>,
}

impl GenerationBatch {
    pub fn new(sample_id: impl Into<String>, generations: Vec<EmbeddingMatrix>) -> Result<Self> {
        let batch = Self {
            sample_id: sample_id.into(),
            generations,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn queries(&self) -> usize {
        self.generations.len()
    }

    pub fn frames(&self) -> usize {
        self.generations[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.generations[0].dim()
    }

    fn validate(&self) -> Result<()> {
        let first = self
            .generations
            .first()
            .ok_or_else(|| Error::Schema("generation batch has no generations".into()))?;
        for (q, g) in self.generations.iter().enumerate() {
            if g.rows() != first.rows() {
                return Err(Error::DimensionMismatch {
                    context: format!("frame count of generation {q}"),
                    expected: first.rows(),
                    found: g.rows(),
                });
            }
            if g.dim() != first.dim() {
                return Err(Error::DimensionMismatch {
                    context: format!("embedding dim of generation {q}"),
                    expected: first.dim(),
                    found: g.dim(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset: String,
    pub encoder: String,
    pub dim: u32,
    pub n_frames: u32,
    pub n_queries: u32,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditRecord {
    pub target: TargetRecord,
    pub batch: GenerationBatch,
}

impl AuditRecord {
    pub fn sample_id(&self) -> &str {
        &self.target.sample_id
    }

    pub fn label(&self) -> Option<Label> {
        self.target.label
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditBundle {
    pub manifest: Manifest,
    pub records: Vec<AuditRecord>,
}

/// How loading reacts to generated videos of differing length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncateFrames {
    /// Non-uniform `N` is an error.
    #[default]
    Error,
    /// Truncate every generation to the bundle-wide minimum `N`.
    Min,
}

impl AuditBundle {
    pub fn validate(&self) -> Result<()> {
        let dim = self.manifest.dim as usize;
        let n = self.manifest.n_frames as usize;
        let q = self.manifest.n_queries as usize;
        if dim == 0 || n == 0 || q == 0 {
            return Err(Error::Schema(
                "manifest dim, n_frames and n_queries must be positive".into(),
            ));
        }
        let mut seen = HashSet::new();
        for rec in &self.records {
            let id = rec.sample_id();
            if rec.batch.sample_id != id {
                return Err(Error::Schema(format!(
                    "generation batch {} is paired with target {id}",
                    rec.batch.sample_id
                )));
            }
            if !seen.insert(id) {
                return Err(Error::Schema(format!("duplicate sample_id {id}")));
            }
            self.validate_record(rec, dim, n, q)
                .map_err(|e| e.in_record(id))?;
        }
        Ok(())
    }

    fn validate_record(&self, rec: &AuditRecord, dim: usize, n: usize, q: usize) -> Result<()> {
        rec.target.validate()?;
        rec.batch.validate()?;
        if rec.target.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: "keyframes dim vs manifest".into(),
                expected: dim,
                found: rec.target.dim(),
            });
        }
        if rec.batch.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: "generation dim vs keyframes".into(),
                expected: dim,
                found: rec.batch.dim(),
            });
        }
        if rec.batch.frames() != n {
            return Err(Error::DimensionMismatch {
                context: "generated frame count N".into(),
                expected: n,
                found: rec.batch.frames(),
            });
        }
        if rec.batch.queries() != q {
            return Err(Error::DimensionMismatch {
                context: "generation count Q".into(),
                expected: q,
                found: rec.batch.queries(),
            });
        }
        Ok(())
    }

    /// Reconciles per-record frame counts with the manifest according to
    /// `policy`, then validates.
    pub(crate) fn normalize_frames(mut self, policy: TruncateFrames) -> Result<Self> {
        if policy == TruncateFrames::Min {
            if let Some(min_n) = self.records.iter().map(|r| r.batch.frames()).min() {
                for rec in &mut self.records {
                    for g in &mut rec.batch.generations {
                        if g.rows() > min_n {
                            *g = g.truncated(min_n)?;
                        }
                    }
                }
                self.manifest.n_frames = min_n as u32;
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn members(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.label() == Some(Label::Member))
            .count()
    }

    pub fn nonmembers(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.label() == Some(Label::NonMember))
            .count()
    }
}
