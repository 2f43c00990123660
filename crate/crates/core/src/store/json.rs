//! JSON mirror of the VLEB container, for fixtures and hand inspection.
//!
//! ```json
//! {
//!   "manifest": {"dataset": "...", "encoder": "...", "dim": 2, "n_frames": 2, "n_queries": 2},
//!   "records": [{
//!     "sample_id": "a", "label": 1,
//!     "keyframes": [[1, 0], [0, 1]],
//!     "all_frames": [[1, 0]],          // optional
//!     "video_embedding": [1, 0],       // optional
//!     "generations": [[[1, 0], [0, 1]], [[1, 0], [1, 1]]]
//!   }]
//! }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AuditBundle, AuditRecord, EmbeddingMatrix, GenerationBatch, Label, Manifest, TargetRecord,
    TruncateFrames,
};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBundle {
    manifest: Manifest,
    records: Vec<RawRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    sample_id: String,
    #[serde(default = "unknown_label")]
    label: i8,
    keyframes: Vec<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    all_frames: Option<Vec<Vec<f32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    video_embedding: Option<Vec<f32>>,
    generations: Vec<Vec<Vec<f32>>>,
}

fn unknown_label() -> i8 {
    -1
}

pub fn read_bundle_json(source: impl AsRef<Path>) -> Result<AuditBundle> {
    read_bundle_json_with(source, TruncateFrames::Error)
}

pub fn read_bundle_json_with(
    source: impl AsRef<Path>,
    policy: TruncateFrames,
) -> Result<AuditBundle> {
    let text = fs::read_to_string(source)?;
    from_json_str(&text, policy)
}

pub fn from_json_str(text: &str, policy: TruncateFrames) -> Result<AuditBundle> {
    let raw: RawBundle =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let records = raw
        .records
        .into_iter()
        .map(|r| {
            let id = r.sample_id.clone();
            convert_record(r).map_err(|e| e.in_record(&id))
        })
        .collect::<Result<Vec<_>>>()?;
    AuditBundle {
        manifest: raw.manifest,
        records,
    }
    .normalize_frames(policy)
}

fn matrix(rows: &[Vec<f32>], what: &str) -> Result<EmbeddingMatrix> {
    if rows.is_empty() {
        return Err(Error::Schema(format!("{what} has no rows")));
    }
    EmbeddingMatrix::from_rows(rows).map_err(|e| match e {
        Error::NonFinite(s) => Error::NonFinite(format!("{what} {s}")),
        Error::ZeroNorm(s) => Error::ZeroNorm(format!("{what} {s}")),
        other => other,
    })
}

fn convert_record(r: RawRecord) -> Result<AuditRecord> {
    let keyframes = matrix(&r.keyframes, "keyframes")?;
    let all_frames = r
        .all_frames
        .as_deref()
        .map(|rows| matrix(rows, "all_frames"))
        .transpose()?;
    let video_embedding = r
        .video_embedding
        .map(|v| matrix(&[v], "video_embedding"))
        .transpose()?;
    let generations = r
        .generations
        .iter()
        .enumerate()
        .map(|(q, g)| matrix(g, &format!("generation {q}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(AuditRecord {
        target: TargetRecord {
            sample_id: r.sample_id.clone(),
            keyframes,
            all_frames,
            video_embedding,
            label: Label::from_i8(r.label)?,
        },
        batch: GenerationBatch {
            sample_id: r.sample_id,
            generations,
        },
    })
}

fn rows_of(m: &EmbeddingMatrix) -> Vec<Vec<f32>> {
    m.iter_rows().map(<[f32]>::to_vec).collect()
}

pub fn to_json_string(bundle: &AuditBundle) -> Result<String> {
    bundle.validate()?;
    let raw = RawBundle {
        manifest: bundle.manifest.clone(),
        records: bundle
            .records
            .iter()
            .map(|rec| RawRecord {
                sample_id: rec.target.sample_id.clone(),
                label: Label::to_i8(rec.target.label),
                keyframes: rows_of(&rec.target.keyframes),
                all_frames: rec.target.all_frames.as_ref().map(rows_of),
                video_embedding: rec.target.video_embedding.as_ref().map(|v| v.row(0).to_vec()),
                generations: rec.batch.generations.iter().map(rows_of).collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&raw)?)
}

pub fn write_bundle_json(bundle: &AuditBundle, destination: impl AsRef<Path>) -> Result<()> {
    fs::write(destination, to_json_string(bundle)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = r#"{
      "manifest": {"dataset": "fixture", "encoder": "toy", "dim": 2, "n_frames": 2, "n_queries": 2},
      "records": [{
        "sample_id": "clip-1", "label": 1,
        "keyframes": [[1, 0], [0, 1]],
        "generations": [[[1, 0], [0, 1]], [[1, 0], [1, 1]]]
      }]
    }"#;

    #[test]
    fn parses_hand_written_fixture() {
        let b = from_json_str(FIXTURE, TruncateFrames::Error).unwrap();
        let rec = &b.records[0];
        assert_eq!(rec.target.keyframes.rows(), 2);
        assert_eq!(rec.batch.frames(), 2);
        assert_eq!(rec.batch.queries(), 2);
        assert_eq!(rec.label(), Some(Label::Member));
    }

    #[test]
    fn missing_generations_is_schema_error() {
        let text = FIXTURE.replace(
            r#",
        "generations": [[[1, 0], [0, 1]], [[1, 0], [1, 1]]]"#,
            "",
        );
        let err = from_json_str(&text, TruncateFrames::Error).unwrap_err();
        assert!(
            matches!(err, Error::Schema(ref m) if m.contains("generations")),
            "{err}"
        );
    }

    #[test]
    fn json_round_trip() {
        let b = from_json_str(FIXTURE, TruncateFrames::Error).unwrap();
        let again = from_json_str(&to_json_string(&b).unwrap(), TruncateFrames::Error).unwrap();
        assert_eq!(b, again);
    }
}
