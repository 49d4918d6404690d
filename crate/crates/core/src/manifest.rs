//! Run manifests: label set, gold files per split, and per-model prediction files.
//!
//! Relative paths resolve against the manifest's own directory.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::{
    softmax_rows, validate_pool, GoldLabels, LabelSet, ModelPool, ValidationReport, RENORMALIZE_BAND,
};
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionKind {
    #[default]
    Probabilities,
    Logits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_tag: Option<String>,
    #[serde(default)]
    pub kind: PredictionKind,
    /// Split name → prediction CSV.
    pub predictions: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub label_set: Vec<String>,
    /// Split name → gold `id,label` CSV.
    pub splits: BTreeMap<String, PathBuf>,
    pub models: Vec<ModelEntry>,
}

impl RunManifest {
    pub fn check(&self) -> Result<()> {
        LabelSet::new(&self.label_set)?;
        if self.models.is_empty() {
            return Err(Error::config("manifest lists no models"));
        }
        let mut names = HashSet::new();
        for m in &self.models {
            if !names.insert(m.name.as_str()) {
                return Err(Error::config(format!("duplicate model name '{}'", m.name)));
            }
            for split in self.splits.keys() {
                if !m.predictions.contains_key(split) {
                    return Err(Error::config(format!(
                        "model '{}' has no predictions for split '{split}'",
                        m.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

/// A checked manifest together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: RunManifest,
    pub base_dir: PathBuf,
    labels: LabelSet,
}

impl LoadedManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_text(path)?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: invalid manifest: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        LoadedManifest::new(manifest, base_dir)
    }

    pub fn new(manifest: RunManifest, base_dir: PathBuf) -> Result<Self> {
        manifest.check()?;
        let labels = LabelSet::new(&manifest.label_set)?;
        Ok(LoadedManifest {
            manifest,
            base_dir,
            labels,
        })
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    fn require_split(&self, split: &str) -> Result<()> {
        let known = self.manifest.splits.contains_key(split)
            || self.manifest.models.iter().all(|m| m.predictions.contains_key(split));
        if known {
            Ok(())
        } else {
            Err(Error::config(format!(
                "unknown split '{split}' (known: {})",
                self.manifest.splits.keys().cloned().collect::<Vec<_>>().join(", ")
            )))
        }
    }

    pub fn gold(&self, split: &str) -> Result<GoldLabels> {
        let path = self.manifest.splits.get(split).ok_or_else(|| {
            Error::config(format!("manifest declares no gold labels for split '{split}'"))
        })?;
        io::read_labels(&self.resolve(path), &self.labels)
    }

    /// Loads every model's predictions for `split`. Logits go through softmax;
    /// probability rows within the renormalization band are rescaled to sum to 1.
    pub fn pool(&self, split: &str) -> Result<ModelPool> {
        self.require_split(split)?;
        let mut models = Vec::with_capacity(self.manifest.models.len());
        let mut tags = BTreeMap::new();
        for entry in &self.manifest.models {
            let path = entry.predictions.get(split).ok_or_else(|| {
                Error::config(format!("model '{}' has no predictions for split '{split}'", entry.name))
            })?;
            let raw = io::read_predictions(&self.resolve(path), &self.labels, &entry.name, split)?;
            let matrix = match entry.kind {
                PredictionKind::Logits => softmax_rows(&raw)?,
                PredictionKind::Probabilities => raw.renormalized(RENORMALIZE_BAND),
            };
            models.push(matrix);
            if let Some(tag) = &entry.set_tag {
                tags.insert(entry.name.clone(), tag.clone());
            }
        }
        ModelPool::new(models, tags)
    }

    pub fn validate_split(&self, split: &str) -> Result<ValidationReport> {
        let gold = self.gold(split)?;
        let pool = self.pool(split)?;
        Ok(validate_pool(&pool, &gold))
    }
}
