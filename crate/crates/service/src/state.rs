//! Collections, axes, the append-only journal and the ranked-view cache.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rankaxis_core::embstore::{
    load_embedding_set, save_axis, validate_dataset, AxisRecord, DatasetManifest, EmbeddingSet, ValidatedDataset,
};
use rankaxis_core::rankquery::{rank_items, Order, RankedView};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

pub const JOURNAL_FILE: &str = "journal.jsonl";

/// A registered embedding collection at one version.
#[derive(Debug)]
pub struct Collection {
    pub collection_id: String,
    pub manifest: DatasetManifest,
    pub version: u64,
    pub embeddings: EmbeddingSet,
    /// Labels and split, when the manifest declares them and they validate.
    pub dataset: Option<ValidatedDataset>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CollectionSummary {
    pub collection_id: String,
    pub name: String,
    pub n_items: usize,
    pub dim: usize,
    pub version: u64,
    pub labeled: bool,
}

impl Collection {
    fn load(collection_id: String, manifest: DatasetManifest, version: u64) -> ApiResult<Self> {
        let embeddings = load_embedding_set(&manifest)?;
        let dataset = if manifest.labels_path.is_some() && manifest.split.is_some() {
            Some(validate_dataset(&manifest)?)
        } else {
            None
        };
        Ok(Self {
            collection_id,
            manifest,
            version,
            embeddings,
            dataset,
        })
    }

    pub fn summary(&self) -> CollectionSummary {
        CollectionSummary {
            collection_id: self.collection_id.clone(),
            name: self.manifest.name.clone(),
            n_items: self.embeddings.len(),
            dim: self.embeddings.dim(),
            version: self.version,
            labeled: self.dataset.is_some(),
        }
    }
}

/// An axis together with the collection version it was created against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisEntry {
    pub collection_id: String,
    pub collection_version: u64,
    pub axis: AxisRecord,
}

/// One consistent view of the registry. Cheap to clone.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    pub collections: BTreeMap<String, Arc<Collection>>,
    pub axes: BTreeMap<String, Arc<AxisEntry>>,
    pub next_collection: u64,
    pub next_axis: u64,
}

impl Snapshot {
    pub fn collection(&self, id: &str) -> ApiResult<&Arc<Collection>> {
        self.collections
            .get(id)
            .ok_or_else(|| ApiError::not_found("collection", id))
    }

    pub fn axis(&self, id: &str) -> ApiResult<&Arc<AxisEntry>> {
        self.axes.get(id).ok_or_else(|| ApiError::not_found("axis", id))
    }

    /// The axis `axis_id`, checked to be usable on `collection`.
    pub fn axis_for(&self, collection: &Collection, axis_id: &str) -> ApiResult<Arc<AxisEntry>> {
        let entry = self.axis(axis_id)?;
        if entry.collection_id == collection.collection_id
            && entry.collection_version != collection.version
        {
            return Err(ApiError::StaleAxis {
                axis_id: axis_id.to_string(),
                collection_id: collection.collection_id.clone(),
                axis_version: entry.collection_version,
                current: collection.version,
            });
        }
        if entry.axis.dim != collection.embeddings.dim() {
            return Err(rankaxis_core::Error::Dim {
                expected: collection.embeddings.dim(),
                found: entry.axis.dim,
            }
            .into());
        }
        Ok(entry.clone())
    }
}

/// Journal records; replaying them in order rebuilds the registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    RegisterCollection {
        collection_id: String,
        manifest: DatasetManifest,
    },
    UpdateCollection {
        collection_id: String,
        manifest: DatasetManifest,
    },
    CreateAxis(AxisEntry),
    DeleteAxis {
        axis_id: String,
    },
}

/// Prepared state change: the event to journal and the resulting snapshot.
pub struct Mutation {
    pub event: Event,
    pub next: Snapshot,
}

impl Snapshot {
    /// Validates `event` against this snapshot and computes the next one.
    /// Loading embedding files happens here, so it may be slow.
    pub fn prepare(&self, event: Event) -> ApiResult<Mutation> {
        let mut next = self.clone();
        match &event {
            Event::RegisterCollection {
                collection_id,
                manifest,
            } => {
                if next.collections.contains_key(collection_id) {
                    return Err(ApiError::BadRequest(format!(
                        "collection {collection_id} already exists"
                    )));
                }
                let c = Collection::load(collection_id.clone(), manifest.clone(), 1)?;
                next.collections.insert(collection_id.clone(), Arc::new(c));
                next.next_collection = next.next_collection.max(id_number(collection_id, 'c') + 1);
            }
            Event::UpdateCollection {
                collection_id,
                manifest,
            } => {
                let old = self.collection(collection_id)?;
                let c = Collection::load(collection_id.clone(), manifest.clone(), old.version + 1)?;
                next.collections.insert(collection_id.clone(), Arc::new(c));
            }
            Event::CreateAxis(entry) => {
                let c = self.collection(&entry.collection_id)?;
                entry.axis.validate()?;
                if entry.axis.dim != c.embeddings.dim() {
                    return Err(rankaxis_core::Error::Dim {
                        expected: c.embeddings.dim(),
                        found: entry.axis.dim,
                    }
                    .into());
                }
                if next.axes.contains_key(&entry.axis.axis_id) {
                    return Err(ApiError::BadRequest(format!(
                        "axis {} already exists",
                        entry.axis.axis_id
                    )));
                }
                next.axes
                    .insert(entry.axis.axis_id.clone(), Arc::new(entry.clone()));
                next.next_axis = next.next_axis.max(id_number(&entry.axis.axis_id, 'a') + 1);
            }
            Event::DeleteAxis { axis_id } => {
                if next.axes.remove(axis_id).is_none() {
                    return Err(ApiError::not_found("axis", axis_id.clone()));
                }
            }
        }
        Ok(Mutation { event, next })
    }

    pub fn new_collection_id(&self) -> String {
        format!("c{}", self.next_collection.max(1))
    }

    pub fn new_axis_id(&self) -> String {
        format!("a{}", self.next_axis.max(1))
    }
}

/// Numeric suffix of generated ids like `c3` / `a12`; 0 for anything else.
fn id_number(id: &str, prefix: char) -> u64 {
    id.strip_prefix(prefix)
        .and_then(|n| n.parse().ok())
        .unwrap_or(0)
}

/// Append-only JSON-lines log of mutations.
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Opens (creating if needed) the journal in `state_dir` and replays it.
    pub fn open(state_dir: &Path) -> ApiResult<(Self, Snapshot)> {
        std::fs::create_dir_all(state_dir)
            .map_err(|e| ApiError::Journal(format!("{}: {e}", state_dir.display())))?;
        let path = state_dir.join(JOURNAL_FILE);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(ApiError::Journal(format!("{}: {e}", path.display()))),
        };
        let (snapshot, valid_len) = replay(&text)?;
        if valid_len < text.len() {
            log::warn!(
                "dropping {} bytes of an incomplete final journal record",
                text.len() - valid_len
            );
            let f = OpenOptions::new()
                .write(true)
                .open(&path)
                .map_err(|e| ApiError::Journal(e.to_string()))?;
            f.set_len(valid_len as u64)
                .map_err(|e| ApiError::Journal(e.to_string()))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| ApiError::Journal(format!("{}: {e}", path.display())))?;
        Ok((Self { path, file }, snapshot))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &Event) -> ApiResult<()> {
        let mut line = serde_json::to_string(event).map_err(|e| ApiError::Journal(e.to_string()))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| ApiError::Journal(format!("{}: {e}", self.path.display())))
    }
}

/// Rebuilds a snapshot from journal text. Returns the snapshot and the
/// length of the prefix made of complete records; an unterminated last
/// line (an interrupted append) is ignored.
pub fn replay(text: &str) -> ApiResult<(Snapshot, usize)> {
    let mut snapshot = Snapshot::default();
    let mut consumed = 0;
    for (lineno, line) in text.split_inclusive('\n').enumerate() {
        if !line.ends_with('\n') {
            break;
        }
        consumed += line.len();
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(line)
            .map_err(|e| ApiError::Journal(format!("line {}: {e}", lineno + 1)))?;
        snapshot = snapshot
            .prepare(event)
            .map_err(|e| ApiError::Journal(format!("replaying line {}: {e}", lineno + 1)))?
            .next;
    }
    Ok((snapshot, consumed))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ViewKey {
    collection_id: String,
    version: u64,
    axis_id: String,
    order: Order,
}

/// Shared server state.
pub struct AppState {
    state_dir: PathBuf,
    snapshot: RwLock<Arc<Snapshot>>,
    writer: tokio::sync::Mutex<Journal>,
    views: Mutex<HashMap<ViewKey, Arc<RankedView>>>,
}

impl AppState {
    pub fn open(state_dir: &Path) -> ApiResult<Arc<Self>> {
        let (journal, snapshot) = Journal::open(state_dir)?;
        log::info!(
            "state restored from {}: {} collections, {} axes",
            journal.path().display(),
            snapshot.collections.len(),
            snapshot.axes.len()
        );
        Ok(Arc::new(Self {
            state_dir: state_dir.to_path_buf(),
            snapshot: RwLock::new(Arc::new(snapshot)),
            writer: tokio::sync::Mutex::new(journal),
            views: Mutex::new(HashMap::new()),
        }))
    }

    /// The current snapshot; a request should take it once and use it throughout.
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().clone()
    }

    /// Serialized write path: builds the event from the current snapshot,
    /// validates it, journals it and publishes the new snapshot.
    pub async fn mutate<F, T>(&self, build: F) -> ApiResult<T>
    where
        F: FnOnce(&Snapshot) -> ApiResult<(Event, T)> + Send + 'static,
        T: Send + 'static,
    {
        let mut journal = self.writer.lock().await;
        let current = self.snapshot();
        let (mutation, out) = tokio::task::spawn_blocking(move || {
            let (event, out) = build(&current)?;
            Ok::<_, ApiError>((current.prepare(event)?, out))
        })
        .await
        .map_err(|e| ApiError::Journal(format!("worker task failed: {e}")))??;
        journal.append(&mutation.event)?;
        *self.snapshot.write() = Arc::new(mutation.next);
        self.evict(&mutation.event);
        self.mirror_axis_file(&mutation.event);
        Ok(out)
    }

    /// Keeps `state_dir/axes/<id>.json` in step with the registry. The
    /// journal stays authoritative, so failures here are only logged.
    fn mirror_axis_file(&self, event: &Event) {
        let dir = self.state_dir.join("axes");
        let result = match event {
            Event::CreateAxis(entry) => std::fs::create_dir_all(&dir)
                .map_err(|e| e.to_string())
                .and_then(|_| {
                    save_axis(&entry.axis, &dir.join(format!("{}.json", entry.axis.axis_id)))
                        .map_err(|e| e.to_string())
                }),
            Event::DeleteAxis { axis_id } => {
                match std::fs::remove_file(dir.join(format!("{axis_id}.json"))) {
                    Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.to_string()),
                    _ => Ok(()),
                }
            }
            _ => Ok(()),
        };
        if let Err(e) = result {
            log::warn!("axis file mirror: {e}");
        }
    }

    fn evict(&self, event: &Event) {
        let mut views = self.views.lock();
        match event {
            Event::UpdateCollection { collection_id, .. } => {
                views.retain(|k, _| &k.collection_id != collection_id)
            }
            Event::DeleteAxis { axis_id } => views.retain(|k, _| &k.axis_id != axis_id),
            Event::RegisterCollection { .. } | Event::CreateAxis(_) => {}
        }
    }

    /// Sorted view of `collection` along `axis`, computed once per
    /// (collection version, axis, order).
    pub async fn ranked_view(
        &self,
        collection: Arc<Collection>,
        axis: Arc<AxisEntry>,
        order: Order,
    ) -> ApiResult<Arc<RankedView>> {
        let key = ViewKey {
            collection_id: collection.collection_id.clone(),
            version: collection.version,
            axis_id: axis.axis.axis_id.clone(),
            order,
        };
        if let Some(v) = self.views.lock().get(&key) {
            return Ok(v.clone());
        }
        let view = tokio::task::spawn_blocking(move || {
            rank_items(&collection.embeddings, &axis.axis, order)
        })
        .await
        .map_err(|e| ApiError::Journal(format!("worker task failed: {e}")))??;
        let view = Arc::new(view);
        self.views.lock().insert(key, view.clone());
        Ok(view)
    }
}
