//! Line-delimited manifest files.
//!
//! Header: `{class_count} {feature_dim} {provenance}` (provenance is the rest
//! of the line, may contain spaces). One example per line after that:
//! `{id} {class_id} {f0,f1,...}` with features as comma-separated decimals in
//! shortest round-trip form, so write -> read -> write is byte-identical.
//! Class names are not stored; readers assign placeholder names.

use std::fmt::Write as _;
use std::path::Path;

use super::{CorpusError, CorpusManifest, Example, UNLABELED};
use crate::scalar::Scalar;

pub fn manifest_to_string<S: Scalar>(manifest: &CorpusManifest<S>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {}",
        manifest.class_count(),
        manifest.feature_dim(),
        manifest.provenance()
    );
    for ex in manifest.examples() {
        let _ = write!(out, "{} {} ", ex.id, ex.class_id);
        for (i, v) in ex.features.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn manifest_from_str<S: Scalar>(text: &str) -> Result<CorpusManifest<S>, CorpusError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(CorpusError::Parse {
        line: 1,
        reason: "empty manifest".into(),
    })?;
    let mut parts = header.splitn(3, ' ');
    let parse_header = |field: Option<&str>, what: &str| -> Result<usize, CorpusError> {
        field
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CorpusError::Parse {
                line: 1,
                reason: format!("bad header field: {what}"),
            })
    };
    let class_count = parse_header(parts.next(), "class_count")?;
    let feature_dim = parse_header(parts.next(), "feature_dim")?;
    let provenance = parts.next().unwrap_or("").to_string();

    let mut examples = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, ' ');
        let id: u64 = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CorpusError::Parse {
                line: lineno,
                reason: "bad id".into(),
            })?;
        let class_id: i32 = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CorpusError::Parse {
                line: lineno,
                reason: "bad class_id".into(),
            })?;
        if class_id < UNLABELED {
            return Err(CorpusError::Parse {
                line: lineno,
                reason: format!("class_id {class_id} below unlabeled sentinel"),
            });
        }
        let feature_text = fields.next().ok_or_else(|| CorpusError::Parse {
            line: lineno,
            reason: "missing features".into(),
        })?;
        let mut features = Vec::with_capacity(feature_dim);
        for tok in feature_text.split(',') {
            let v: S = tok.parse().map_err(|_| CorpusError::Parse {
                line: lineno,
                reason: format!("bad feature value {tok:?}"),
            })?;
            features.push(v);
        }
        examples.push(Example {
            id,
            class_id,
            features,
        });
    }
    let class_names = (0..class_count).map(|c| format!("class_{c}")).collect();
    CorpusManifest::new(examples, class_names, provenance, feature_dim)
}

pub fn write_manifest<S: Scalar>(
    path: impl AsRef<Path>,
    manifest: &CorpusManifest<S>,
) -> Result<(), CorpusError> {
    std::fs::write(path, manifest_to_string(manifest))?;
    Ok(())
}

pub fn read_manifest<S: Scalar>(path: impl AsRef<Path>) -> Result<CorpusManifest<S>, CorpusError> {
    manifest_from_str(&std::fs::read_to_string(path)?)
}
