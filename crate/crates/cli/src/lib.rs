//! Shared helpers for the command-line binaries.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use fedpredi_core::Manifest;

/// Load every `*.manifest` file in a directory, sorted by file name; the
/// sort order is the client order.
pub fn load_manifest_dir(dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, Manifest)>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "manifest"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no *.manifest files in {}", dir.display());
    }
    paths
        .into_iter()
        .map(|p| {
            let manifest = fedpredi_core::corpus::read_manifest(&p)
                .with_context(|| format!("reading {}", p.display()))?;
            Ok((p, manifest))
        })
        .collect()
}

/// Parse an `on`/`off` switch.
pub fn parse_on_off(value: &str) -> Result<bool, String> {
    match value {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected `on` or `off`, got {other:?}")),
    }
}
