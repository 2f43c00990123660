//! VLEB binary container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "VLEB" | version u16 = 1 | flags u16 = 0 | manifest_len u32 | manifest (UTF-8 JSON)
//! record_count u32
//! per record:
//!   id_len u16 | sample_id (UTF-8) | label i8 (-1/0/1)
//!   M u32 | N u32 | Q u32 | dim u32 | presence u8 (bit0 all_frames, bit1 video_embedding)
//!   keyframes M*dim f32
//!   [all_frames: rows u32 | rows*dim f32]
//!   [video_embedding: dim f32]
//!   Q x (N*dim f32)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{
    AuditBundle, AuditRecord, EmbeddingMatrix, GenerationBatch, Label, Manifest, TargetRecord,
    TruncateFrames,
};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VLEB";
pub const VERSION: u16 = 1;

const HAS_ALL_FRAMES: u8 = 0b01;
const HAS_VIDEO_EMBEDDING: u8 = 0b10;

pub fn write_bundle(bundle: &AuditBundle, destination: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(bundle)?;
    let mut file = fs::File::create(destination)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    Ok(())
}

pub fn read_bundle(source: impl AsRef<Path>) -> Result<AuditBundle> {
    read_bundle_with(source, TruncateFrames::Error)
}

pub fn read_bundle_with(source: impl AsRef<Path>, policy: TruncateFrames) -> Result<AuditBundle> {
    let bytes = fs::read(source)?;
    decode_with(&bytes, policy)
}

/// Serializes a validated bundle to VLEB bytes.
pub fn encode(bundle: &AuditBundle) -> Result<Vec<u8>> {
    bundle.validate()?;
    let manifest = serde_json::to_vec(&bundle.manifest)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    put_u32(&mut out, len_u32(manifest.len(), "manifest")?);
    out.extend_from_slice(&manifest);
    put_u32(&mut out, len_u32(bundle.records.len(), "record count")?);
    for rec in &bundle.records {
        encode_record(&mut out, rec).map_err(|e| e.in_record(rec.sample_id()))?;
    }
    Ok(out)
}

fn encode_record(out: &mut Vec<u8>, rec: &AuditRecord) -> Result<()> {
    let t = &rec.target;
    let id = t.sample_id.as_bytes();
    let id_len = u16::try_from(id.len())
        .map_err(|_| Error::Schema(format!("sample_id longer than {} bytes", u16::MAX)))?;
    out.extend_from_slice(&id_len.to_le_bytes());
    out.extend_from_slice(id);
    out.push(Label::to_i8(t.label) as u8);
    put_u32(out, len_u32(t.keyframes.rows(), "M")?);
    put_u32(out, len_u32(rec.batch.frames(), "N")?);
    put_u32(out, len_u32(rec.batch.queries(), "Q")?);
    put_u32(out, len_u32(t.dim(), "dim")?);
    let mut presence = 0u8;
    if t.all_frames.is_some() {
        presence |= HAS_ALL_FRAMES;
    }
    if t.video_embedding.is_some() {
        presence |= HAS_VIDEO_EMBEDDING;
    }
    out.push(presence);
    put_f32s(out, t.keyframes.values());
    if let Some(frames) = &t.all_frames {
        put_u32(out, len_u32(frames.rows(), "all_frames rows")?);
        put_f32s(out, frames.values());
    }
    if let Some(v) = &t.video_embedding {
        put_f32s(out, v.values());
    }
    for g in &rec.batch.generations {
        put_f32s(out, g.values());
    }
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<AuditBundle> {
    decode_with(bytes, TruncateFrames::Error)
}

pub fn decode_with(bytes: &[u8], policy: TruncateFrames) -> Result<AuditBundle> {
    let mut r = Cursor { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let flags = r.u16("flags")?;
    if flags != 0 {
        return Err(Error::UnsupportedFlags(flags));
    }
    let manifest_len = r.u32("manifest length")? as usize;
    let manifest: Manifest = serde_json::from_slice(r.take(manifest_len, "manifest")?)?;
    let count = r.u32("record count")? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        records.push(decode_record(&mut r, i)?);
    }
    if r.remaining() > 0 {
        return Err(Error::TrailingBytes(r.remaining()));
    }
    AuditBundle { manifest, records }.normalize_frames(policy)
}

fn decode_record(r: &mut Cursor<'_>, index: usize) -> Result<AuditRecord> {
    let id_len = r.u16("sample_id length")? as usize;
    let sample_id = std::str::from_utf8(r.take(id_len, "sample_id")?)
        .map_err(|_| Error::Schema(format!("record {index}: sample_id is not UTF-8")))?
        .to_string();
    let wrap = |e: Error| e.in_record(&sample_id);
    let label = Label::from_i8(r.take(1, "label")?[0] as i8).map_err(wrap)?;
    let m = r.u32("M")? as usize;
    let n = r.u32("N")? as usize;
    let q = r.u32("Q")? as usize;
    let dim = r.u32("dim")? as usize;
    let presence = r.take(1, "presence bitmask")?[0];
    if presence & !(HAS_ALL_FRAMES | HAS_VIDEO_EMBEDDING) != 0 {
        return Err(wrap(Error::Schema(format!(
            "unknown presence bits {presence:#04x}"
        ))));
    }
    let keyframes = r.matrix(m, dim, "keyframes").map_err(wrap)?;
    let all_frames = if presence & HAS_ALL_FRAMES != 0 {
        let rows = r.u32("all_frames rows")? as usize;
        Some(r.matrix(rows, dim, "all_frames").map_err(wrap)?)
    } else {
        None
    };
    let video_embedding = if presence & HAS_VIDEO_EMBEDDING != 0 {
        Some(r.matrix(1, dim, "video_embedding").map_err(wrap)?)
    } else {
        None
    };
    let generations = (0..q)
        .map(|g| r.matrix(n, dim, &format!("generation {g}")))
        .collect::<Result<Vec<_>>>()
        .map_err(wrap)?;
    Ok(AuditRecord {
        target: TargetRecord {
            sample_id: sample_id.clone(),
            keyframes,
            all_frames,
            video_embedding,
            label,
        },
        batch: GenerationBatch {
            sample_id,
            generations,
        },
    })
}

fn len_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Schema(format!("{what} exceeds u32")))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Truncated(what.to_string()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn matrix(&mut self, rows: usize, dim: usize, what: &str) -> Result<EmbeddingMatrix> {
        let len = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Schema(format!("{what}: size overflow")))?;
        let raw = self.take(len, what)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        EmbeddingMatrix::new(rows, dim, values).map_err(|e| match e {
            Error::NonFinite(s) => Error::NonFinite(format!("{what} {s}")),
            Error::ZeroNorm(s) => Error::ZeroNorm(format!("{what} {s}")),
            other => other,
        })
    }
}
