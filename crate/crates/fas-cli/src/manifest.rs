//! JSON dataset manifest: label vocabulary plus per-sample feature paths and
//! split tags. Paths are relative to the manifest's directory. Validation
//! collects every failure instead of stopping at the first.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fas_core::features::StreamKind;
use fas_core::model::SampleData;
use fas_core::synth::SplitTag;

use crate::error::{io_err, CliError, Result};
use crate::feature_file::{read_feature_file, read_feature_header};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSample {
    pub id: String,
    pub aco: String,
    pub sem: String,
    pub label: usize,
    pub split: SplitTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub labels: Vec<String>,
    pub samples: Vec<ManifestSample>,
}

impl Manifest {
    pub fn count(&self, label: usize, split: SplitTag) -> usize {
        self.samples.iter().filter(|s| s.label == label && s.split == split).count()
    }
}

pub fn save_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| CliError::Data(format!("serializing manifest: {e}")))?;
    std::fs::write(path, json + "\n").map_err(|e| io_err(path, e))
}

/// Parse and fully validate a manifest. Returns the manifest together with
/// its base directory (paths inside are relative to it).
pub fn load_manifest(path: &Path) -> Result<(Manifest, PathBuf)> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();

    let mut failures: Vec<String> = Vec::new();
    if manifest.labels.is_empty() {
        failures.push("label vocabulary is empty".to_string());
    }
    let mut seen_ids = BTreeSet::new();
    let mut dims: [Option<(u32, String)>; 2] = [None, None];
    for s in &manifest.samples {
        if !seen_ids.insert(&s.id) {
            failures.push(format!("duplicate sample id '{}'", s.id));
        }
        if s.label >= manifest.labels.len() {
            failures.push(format!(
                "sample '{}': label index {} out of range (vocabulary has {} entries)",
                s.id,
                s.label,
                manifest.labels.len()
            ));
        }
        for (rel, want) in [(&s.aco, StreamKind::Acoustic), (&s.sem, StreamKind::Semantic)] {
            let fpath = base.join(rel);
            match read_feature_header(&fpath) {
                Err(e) => failures.push(format!("sample '{}': {e}", s.id)),
                Ok(h) => {
                    if h.kind != want {
                        failures.push(format!(
                            "sample '{}': {} is tagged {} but referenced as the {} stream",
                            s.id,
                            rel,
                            h.kind.name(),
                            want.name()
                        ));
                    }
                    let slot = &mut dims[want.tag() as usize];
                    match slot {
                        None => *slot = Some((h.dim, s.id.clone())),
                        Some((d, first)) if *d != h.dim => failures.push(format!(
                            "sample '{}': {} stream dim {} differs from dim {} of sample '{}'",
                            s.id,
                            want.name(),
                            h.dim,
                            d,
                            first
                        )),
                        Some(_) => {}
                    }
                }
            }
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Data(format!(
            "{}: {} validation failure(s):\n  {}",
            path.display(),
            failures.len(),
            failures.join("\n  ")
        )));
    }
    Ok((manifest, base))
}

/// Load the feature payloads of one split into training samples, in manifest
/// order, upcast to f64.
pub fn load_split(manifest: &Manifest, base: &Path, split: SplitTag) -> Result<Vec<SampleData>> {
    let mut out = Vec::new();
    for s in manifest.samples.iter().filter(|s| s.split == split) {
        let aco = read_feature_file(&base.join(&s.aco))?;
        let sem = read_feature_file(&base.join(&s.sem))?;
        out.push(SampleData { aco: aco.to_matrix(), sem: sem.to_matrix(), label: s.label });
    }
    Ok(out)
}
