//! File helpers: bundles by extension, JSON-lines dumps, and `--out`.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use stmia_core::store::{json, vleb, AuditBundle, TruncateFrames};

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// `.json` selects the JSON mirror; anything else is VLEB.
pub fn read_bundle(path: &Path, policy: TruncateFrames) -> Result<AuditBundle> {
    let bundle = if is_json(path) {
        json::read_bundle_json_with(path, policy)
    } else {
        vleb::read_bundle_with(path, policy)
    };
    bundle.with_context(|| format!("reading bundle {}", path.display()))
}

pub fn write_bundle(bundle: &AuditBundle, path: &Path) -> Result<()> {
    let done = if is_json(path) {
        json::write_bundle_json(bundle, path)
    } else {
        vleb::write_bundle(bundle, path)
    };
    done.with_context(|| format!("writing bundle {}", path.display()))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `--out` when given, stdout otherwise.
pub fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_jsonl<T: Serialize>(items: &[T], out: Option<&Path>) -> Result<()> {
    let mut w = sink(out)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(text: &str, out: Option<&Path>) -> Result<()> {
    let mut w = sink(out)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// `dir/report.json` + `suffix` → `dir/report.<suffix>`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}
