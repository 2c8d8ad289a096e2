//! Parameter checkpoint files: a text header naming the segment shapes, then
//! the values as little-endian 64-bit floats in segment order.
//!
//! ```text
//! params v1
//! segments {n}
//! {name} {out_dim} {in_dim}
//! ...
//! data
//! <8 * total bytes>
//! ```

use std::path::Path;

use super::{Layout, LearnerError, ParamVector, SegmentSpec};
use crate::scalar::Scalar;

const MAGIC: &str = "params v1";

pub fn checkpoint_bytes<S: Scalar>(params: &ParamVector<S>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(format!("segments {}\n", params.layout().segments().len()).as_bytes());
    for s in params.layout().segments() {
        out.extend_from_slice(format!("{} {} {}\n", s.name, s.out_dim, s.in_dim).as_bytes());
    }
    out.extend_from_slice(b"data\n");
    for v in params.values() {
        out.extend_from_slice(&v.to_f64().unwrap_or(f64::NAN).to_le_bytes());
    }
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<ParamVector<f64>, LearnerError> {
    let mut cursor = 0usize;
    let mut next_line = || -> Result<&str, LearnerError> {
        let rest = &bytes[cursor..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| LearnerError::Parse("truncated header".into()))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| LearnerError::Parse("non-utf8 header".into()))?;
        cursor += end + 1;
        Ok(line)
    };

    if next_line()? != MAGIC {
        return Err(LearnerError::Parse("bad magic line".into()));
    }
    let seg_line = next_line()?;
    let count: usize = seg_line
        .strip_prefix("segments ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| LearnerError::Parse("bad segments line".into()))?;
    let mut segments = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next_line()?;
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() != 3 {
            return Err(LearnerError::Parse(format!("bad segment line {line:?}")));
        }
        let out_dim: usize = parts[1]
            .parse()
            .map_err(|_| LearnerError::Parse("bad out_dim".into()))?;
        let in_dim: usize = parts[2]
            .parse()
            .map_err(|_| LearnerError::Parse("bad in_dim".into()))?;
        segments.push(SegmentSpec::new(parts[0], out_dim, in_dim));
    }
    if next_line()? != "data" {
        return Err(LearnerError::Parse("missing data marker".into()));
    }
    let layout = Layout::new(segments)?;
    let expected = layout.total_len() * 8;
    let payload = &bytes[cursor..];
    if payload.len() != expected {
        return Err(LearnerError::Parse(format!(
            "expected {expected} data bytes, found {}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ParamVector::from_values(layout, values)
}

pub fn save_checkpoint<S: Scalar>(
    path: impl AsRef<Path>,
    params: &ParamVector<S>,
) -> Result<(), LearnerError> {
    std::fs::write(path, checkpoint_bytes(params))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamVector<f64>, LearnerError> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}
