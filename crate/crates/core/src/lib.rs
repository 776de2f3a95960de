//! Discovery and evaluation of linear rank axes in precomputed embedding
//! spaces.
//!
//! A rank axis is a unit vector whose dot products with embeddings order
//! items by an attribute (age, crowd size, head pose, ...). This crate
//! loads embeddings and labels ([`embstore`]), fits axes from labels, extreme
//! exemplars or text-prompt embeddings ([`axisfit`]), measures how well an
//! axis ranks a labelled split ([`metrics`]), answers ordered and percentile
//! queries ([`rankquery`]) and runs the comparison protocols ([`experiments`]).

pub mod axisfit;
pub mod embstore;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod rankquery;
pub mod synthetic;

use std::io::Write;
use std::path::Path;

pub use error::{Error, Result};

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
