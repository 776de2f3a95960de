//! Loading, validation and persistence of embeddings, labels, splits,
//! dataset manifests and rank-axis records.

mod axis;
mod labels;
mod manifest;
mod npy;
mod split;

use std::borrow::Borrow;
use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use axis::{axis_timestamp, load_axis, parse_axis, save_axis, AxisMethod, AxisRecord, UNIT_NORM_TOLERANCE};
pub use labels::{load_labels_csv, parse_labels_csv, AttributeLabels};
pub use manifest::{
    load_embedding_set, validate_dataset, DatasetManifest, IdSource, ManifestSplit, SplitPart,
    ValidatedDataset, ValidationSummary,
};
pub use npy::{load_npy, parse_npy, write_npy};
pub use split::{hold_out, make_split, SplitSpec};

/// Identifier of one item (image) within a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ItemId(String);

impl ItemId {
    pub fn new(value: impl Into<String>) -> Result<Self> {
        let value = value.into();
        if value.is_empty() {
            return Err(Error::Format("item id must be non-empty".into()));
        }
        if let Some(c) = value.chars().find(|c| matches!(c, '\n' | '\r' | ',' | '\0')) {
            return Err(Error::Format(format!(
                "item id {value:?} contains forbidden character {c:?}"
            )));
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::str::FromStr for ItemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(s)
    }
}

impl TryFrom<String> for ItemId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        ItemId::new(value)
    }
}

impl From<ItemId> for String {
    fn from(id: ItemId) -> Self {
        id.0
    }
}

impl AsRef<str> for ItemId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for ItemId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Immutable `N×d` embedding matrix whose rows are addressed by item id.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    ids: Vec<ItemId>,
    matrix: Matrix,
    source_tag: String,
    index: HashMap<ItemId, usize>,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<ItemId>, matrix: Matrix, source_tag: impl Into<String>) -> Result<Self> {
        if ids.len() != matrix.rows() {
            return Err(Error::Shape(format!(
                "{} ids for {} embedding rows",
                ids.len(),
                matrix.rows()
            )));
        }
        if matrix.cols() < 2 {
            return Err(Error::Shape(format!(
                "embedding dimension must be at least 2, got {}",
                matrix.cols()
            )));
        }
        if let Some(i) = matrix.iter_rows().position(|r| r.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidValue(format!(
                "embedding row {i} ({}) contains a non-finite value",
                ids[i]
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.to_string()));
            }
        }
        Ok(Self {
            ids,
            matrix,
            source_tag: source_tag.into(),
            index,
        })
    }

    /// Builds a set from string ids and row slices; convenient in tests and
    /// for synthetic data.
    pub fn from_rows<S: AsRef<str>, R: AsRef<[f64]>>(ids: &[S], rows: &[R]) -> Result<Self> {
        let ids = ids
            .iter()
            .map(|s| ItemId::new(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids, Matrix::from_rows(rows)?, "")
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row_of(&self, id: &str) -> Option<&[f64]> {
        self.index_of(id).map(|i| self.matrix.row(i))
    }

    /// Row indices for `ids`; unknown ids are collected into one error.
    pub fn indices_of<S: Borrow<str>>(&self, ids: &[S]) -> Result<Vec<usize>> {
        let mut missing = Vec::new();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            match self.index_of(id.borrow()) {
                Some(i) => out.push(i),
                None => missing.push(id.borrow().to_string()),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(Error::consistency("ids have no embedding row", missing))
        }
    }
}

/// Reads an ids file: UTF-8, one id per line, LF or CRLF, trailing newline optional.
pub fn load_ids(path: &Path) -> Result<Vec<ItemId>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ids(&text)
}

pub fn parse_ids(text: &str) -> Result<Vec<ItemId>> {
    let text = text.strip_suffix('\n').unwrap_or(text);
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split('\n')
        .enumerate()
        .map(|(line, raw)| {
            ItemId::new(raw.strip_suffix('\r').unwrap_or(raw))
                .map_err(|e| Error::Format(format!("ids line {}: {e}", line + 1)))
        })
        .collect()
}
