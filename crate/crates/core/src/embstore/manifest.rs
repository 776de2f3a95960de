use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{
    hold_out, load_ids, load_labels_csv, load_npy, make_split, AttributeLabels, EmbeddingSet,
    ItemId, SplitSpec,
};

/// Fraction of train held out for model selection when a manifest has no
/// official validation split.
pub const DEFAULT_VAL_HOLDOUT: f64 = 0.1;

/// Declarative binding of one dataset/encoder pair to its files.
///
/// Relative paths are resolved against the directory holding the manifest
/// file (or the working directory for manifests built in memory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub embeddings_path: PathBuf,
    pub ids_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<ManifestSplit>,
    /// Embeddings of horizontally flipped images, row-aligned with `ids_path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmented_embeddings_path: Option<PathBuf>,
    /// Opaque per-item asset URL; `{id}` is replaced by the item id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_url_template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tag: Option<String>,
    /// Seed for derived splits (random split, validation hold-out).
    #[serde(default)]
    pub split_seed: u64,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifestSplit {
    Explicit {
        train: IdSource,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        val: Option<IdSource>,
        test: IdSource,
    },
    Random {
        fractions: (f64, f64, f64),
    },
}

/// Either an inline list of ids or a path to an ids file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IdSource {
    Inline(Vec<ItemId>),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitPart::Train => "train",
            SplitPart::Val => "val",
            SplitPart::Test => "test",
        })
    }
}

impl FromStr for SplitPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitPart::Train),
            "val" => Ok(SplitPart::Val),
            "test" => Ok(SplitPart::Test),
            other => Err(Error::Parse(format!("unknown split {other:?}"))),
        }
    }
}

impl DatasetManifest {
    /// Minimal embedding-only manifest.
    pub fn new(name: impl Into<String>, embeddings_path: PathBuf, ids_path: PathBuf) -> Self {
        Self {
            name: name.into(),
            embeddings_path,
            ids_path,
            labels_path: None,
            attribute_name: None,
            split: None,
            augmented_embeddings_path: None,
            asset_url_template: None,
            source_tag: None,
            split_seed: 0,
            base_dir: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("manifest {}: {e}", path.display())))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf);
        Ok(manifest)
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = Some(dir.into());
        self
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// Copy with every path made absolute-or-resolved, so the manifest can
    /// be stored and reloaded independently of its original location.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.embeddings_path = self.resolve(&self.embeddings_path);
        out.ids_path = self.resolve(&self.ids_path);
        out.labels_path = self.labels_path.as_deref().map(|p| self.resolve(p));
        out.augmented_embeddings_path = self
            .augmented_embeddings_path
            .as_deref()
            .map(|p| self.resolve(p));
        if let Some(ManifestSplit::Explicit { train, val, test }) = &mut out.split {
            for src in [Some(train), val.as_mut(), Some(test)].into_iter().flatten() {
                if let IdSource::File(p) = src {
                    *p = self.resolve(p);
                }
            }
        }
        out.base_dir = None;
        out
    }

    pub fn asset_url(&self, id: &str) -> Option<String> {
        self.asset_url_template
            .as_ref()
            .map(|t| t.replace("{id}", id))
    }

    fn read_ids(&self, src: &IdSource) -> Result<Vec<ItemId>> {
        match src {
            IdSource::Inline(ids) => Ok(ids.clone()),
            IdSource::File(p) => load_ids(&self.resolve(p)),
        }
    }
}

/// Loads the embedding matrix and ids of a manifest, without labels.
pub fn load_embedding_set(manifest: &DatasetManifest) -> Result<EmbeddingSet> {
    let ids = load_ids(&manifest.resolve(&manifest.ids_path))?;
    let matrix = load_npy(&manifest.resolve(&manifest.embeddings_path))?;
    let tag = manifest.source_tag.clone().unwrap_or_default();
    EmbeddingSet::new(ids, matrix, tag)
}

/// Embeddings, labels and split that have been cross-checked against each other.
#[derive(Debug, Clone)]
pub struct ValidatedDataset {
    pub name: String,
    pub embeddings: EmbeddingSet,
    pub labels: AttributeLabels,
    pub split: SplitSpec,
    /// Flip-augmented embeddings, row-aligned with `embeddings`.
    pub augmented: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub name: String,
    pub attribute_name: String,
    pub source_tag: String,
    pub n_items: usize,
    pub dim: usize,
    pub n_labels: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub augmented: bool,
}

impl ValidatedDataset {
    /// Assembles a dataset from in-memory parts, applying the same checks as
    /// [`validate_dataset`].
    pub fn from_parts(
        name: impl Into<String>,
        embeddings: EmbeddingSet,
        labels: AttributeLabels,
        split: SplitSpec,
    ) -> Result<Self> {
        check_consistency(&embeddings, &labels, &split)?;
        Ok(Self {
            name: name.into(),
            embeddings,
            labels,
            split,
            augmented: None,
        })
    }

    pub fn ids(&self, part: SplitPart) -> &[ItemId] {
        match part {
            SplitPart::Train => &self.split.train,
            SplitPart::Val => &self.split.val,
            SplitPart::Test => &self.split.test,
        }
    }

    pub fn attribute_name(&self) -> &str {
        self.labels.attribute_name()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    /// Design matrix and label vector for arbitrary ids.
    pub fn xy_for(&self, ids: &[ItemId]) -> Result<(Matrix, Vec<f64>)> {
        let rows = self.embeddings.indices_of(ids)?;
        let y = self.labels.values_for(ids)?;
        Ok((self.embeddings.matrix().select_rows(&rows), y))
    }

    pub fn xy(&self, part: SplitPart) -> Result<(Matrix, Vec<f64>)> {
        self.xy_for(self.ids(part))
    }

    /// Train rows for `ids`, followed by their flip-augmented rows when the
    /// dataset has them.
    pub fn train_xy_augmented(&self, ids: &[ItemId]) -> Result<(Matrix, Vec<f64>)> {
        let (x, y) = self.xy_for(ids)?;
        match &self.augmented {
            None => Ok((x, y)),
            Some(aug) => {
                let rows = self.embeddings.indices_of(ids)?;
                let x = x.vstack(&aug.select_rows(&rows))?;
                let mut y2 = y.clone();
                y2.extend_from_slice(&y);
                Ok((x, y2))
            }
        }
    }

    /// Same labels and split over a different embedding source (e.g. a
    /// randomly initialised encoder).
    pub fn with_embeddings(&self, embeddings: EmbeddingSet) -> Result<Self> {
        Self::from_parts(
            self.name.clone(),
            embeddings,
            self.labels.clone(),
            self.split.clone(),
        )
    }

    pub fn summary(&self) -> ValidationSummary {
        ValidationSummary {
            name: self.name.clone(),
            attribute_name: self.labels.attribute_name().to_string(),
            source_tag: self.embeddings.source_tag().to_string(),
            n_items: self.embeddings.len(),
            dim: self.embeddings.dim(),
            n_labels: self.labels.len(),
            n_train: self.split.train.len(),
            n_val: self.split.val.len(),
            n_test: self.split.test.len(),
            augmented: self.augmented.is_some(),
        }
    }
}

fn check_consistency(
    embeddings: &EmbeddingSet,
    labels: &AttributeLabels,
    split: &SplitSpec,
) -> Result<()> {
    let mut no_row = BTreeSet::new();
    let mut no_label = BTreeSet::new();
    for id in split.all_ids() {
        if embeddings.index_of(id.as_str()).is_none() {
            no_row.insert(id.to_string());
        }
        if labels.get(id.as_str()).is_none() {
            no_label.insert(id.to_string());
        }
    }
    if !no_row.is_empty() {
        return Err(Error::consistency(
            "split ids missing from the ids file",
            no_row.into_iter().collect(),
        ));
    }
    if !no_label.is_empty() {
        return Err(Error::consistency(
            "split ids without a label",
            no_label.into_iter().collect(),
        ));
    }
    Ok(())
}

pub fn validate_dataset(manifest: &DatasetManifest) -> Result<ValidatedDataset> {
    let embeddings = load_embedding_set(manifest)?;
    let labels_path = manifest.labels_path.as_deref().ok_or_else(|| {
        Error::Format(format!("manifest {:?} declares no labels_path", manifest.name))
    })?;
    let labels = load_labels_csv(&manifest.resolve(labels_path))?
        .with_attribute_name(manifest.attribute_name.clone().unwrap_or_default());

    let split = match &manifest.split {
        None => {
            return Err(Error::Format(format!(
                "manifest {:?} declares no split",
                manifest.name
            )))
        }
        Some(ManifestSplit::Explicit { train, val, test }) => {
            let train = manifest.read_ids(train)?;
            let test = manifest.read_ids(test)?;
            let val = val.as_ref().map(|v| manifest.read_ids(v)).transpose()?;
            let provisional =
                SplitSpec::new(train.clone(), val.clone().unwrap_or_default(), test.clone())?;
            check_consistency(&embeddings, &labels, &provisional)?;
            match val {
                Some(_) => provisional,
                None => {
                    let (train, val) = hold_out(&train, DEFAULT_VAL_HOLDOUT, manifest.split_seed)?;
                    SplitSpec::new(train, val, test)?
                }
            }
        }
        Some(ManifestSplit::Random { fractions }) => {
            let labeled: Vec<ItemId> = embeddings
                .ids()
                .iter()
                .filter(|id| labels.get(id.as_str()).is_some())
                .cloned()
                .collect();
            make_split(&labeled, *fractions, manifest.split_seed)?
        }
    };
    check_consistency(&embeddings, &labels, &split)?;

    let augmented = match &manifest.augmented_embeddings_path {
        None => None,
        Some(p) => {
            let aug = load_npy(&manifest.resolve(p))?;
            if aug.rows() != embeddings.len() || aug.cols() != embeddings.dim() {
                return Err(Error::Shape(format!(
                    "augmented embeddings are {}x{}, expected {}x{}",
                    aug.rows(),
                    aug.cols(),
                    embeddings.len(),
                    embeddings.dim()
                )));
            }
            if aug.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidValue(
                    "augmented embeddings contain non-finite values".into(),
                ));
            }
            Some(aug)
        }
    };

    Ok(ValidatedDataset {
        name: manifest.name.clone(),
        embeddings,
        labels,
        split,
        augmented,
    })
}
