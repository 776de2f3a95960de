use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::get;
use axum::{Json, Router};
use rankaxis_core::axisfit::{
    axis_from_weights, extreme_pair_axis, fit_ridge_closed_form, hyperparameter_search, ExtremeSpec,
    HyperSearchSpec, RidgeConfig, Trainer,
};
use rankaxis_core::embstore::{AxisMethod, AxisRecord, DatasetManifest, SplitPart};
use rankaxis_core::experiments::search_data;
use rankaxis_core::metrics::spearman_rho;
use rankaxis_core::rankquery::{page, percentile_item, nearest_rank_index, Order};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};
use crate::state::{AppState, AxisEntry, Collection, CollectionSummary, Event, Snapshot};

pub const DEFAULT_PAGE_LIMIT: usize = 50;

type AppStateRef = State<Arc<AppState>>;
type Params = Query<HashMap<String, String>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/collections", get(list_collections).post(create_collection))
        .route("/collections/{c}", get(get_collection).put(update_collection))
        .route("/collections/{c}/axes", axum::routing::post(create_axis))
        .route("/collections/{c}/rank", get(rank))
        .route("/collections/{c}/percentiles", get(percentiles))
        .route("/collections/{c}/items/{id}", get(item))
        .route("/axes", get(list_axes))
        .route("/axes/{id}", get(get_axis).delete(delete_axis))
        .with_state(state)
}

/// Parses a JSON body by hand so malformed input still gets the usual error shape.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("request body: {e}")))
}

fn param<T: std::str::FromStr>(params: &HashMap<String, String>, key: &str) -> ApiResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    params
        .get(key)
        .map(|v| {
            v.parse()
                .map_err(|e| ApiError::BadRequest(format!("query parameter {key}={v:?}: {e}")))
        })
        .transpose()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CollectionBody {
    #[serde(default)]
    manifest: Option<DatasetManifest>,
    /// Server-side manifest file; relative paths inside resolve against it.
    #[serde(default)]
    manifest_path: Option<PathBuf>,
}

impl CollectionBody {
    fn into_manifest(self) -> ApiResult<DatasetManifest> {
        match (self.manifest, self.manifest_path) {
            (Some(m), None) => Ok(m.resolved()),
            (None, Some(p)) => Ok(DatasetManifest::load(&p)?.resolved()),
            _ => Err(ApiError::BadRequest(
                "give exactly one of manifest or manifest_path".into(),
            )),
        }
    }
}

#[derive(Serialize)]
struct CollectionCreated {
    collection_id: String,
    version: u64,
}

#[derive(Serialize)]
struct CollectionDetail {
    #[serde(flatten)]
    summary: CollectionSummary,
    manifest: DatasetManifest,
}

async fn list_collections(State(state): AppStateRef) -> Json<Vec<CollectionSummary>> {
    let snap = state.snapshot();
    Json(snap.collections.values().map(|c| c.summary()).collect())
}

async fn create_collection(
    State(state): AppStateRef,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<CollectionCreated>)> {
    let manifest = parse_body::<CollectionBody>(&body)?.into_manifest()?;
    let id = state
        .mutate(move |snap| {
            let collection_id = snap.new_collection_id();
            let event = Event::RegisterCollection {
                collection_id: collection_id.clone(),
                manifest,
            };
            Ok((event, collection_id))
        })
        .await?;
    log::info!("registered collection {id}");
    Ok((
        StatusCode::CREATED,
        Json(CollectionCreated {
            collection_id: id,
            version: 1,
        }),
    ))
}

async fn get_collection(State(state): AppStateRef, Path(c): Path<String>) -> ApiResult<Json<CollectionDetail>> {
    let snap = state.snapshot();
    let col = snap.collection(&c)?;
    Ok(Json(CollectionDetail {
        summary: col.summary(),
        manifest: col.manifest.clone(),
    }))
}

/// Replaces a collection's manifest and bumps its version. Axes created
/// against earlier versions answer 409 on this collection afterwards.
async fn update_collection(
    State(state): AppStateRef,
    Path(c): Path<String>,
    body: Bytes,
) -> ApiResult<Json<CollectionCreated>> {
    let manifest = parse_body::<CollectionBody>(&body)?.into_manifest()?;
    let cid = c.clone();
    state
        .mutate(move |snap| {
            snap.collection(&cid)?;
            Ok((
                Event::UpdateCollection {
                    collection_id: cid,
                    manifest,
                },
                (),
            ))
        })
        .await?;
    let version = state.snapshot().collection(&c)?.version;
    Ok(Json(CollectionCreated {
        collection_id: c,
        version,
    }))
}

#[derive(Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
enum AxisRequest {
    Extremes {
        low_ids: Vec<String>,
        high_ids: Vec<String>,
        #[serde(default)]
        attribute_name: Option<String>,
    },
    Raw {
        vector: Vec<f64>,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        attribute_name: Option<String>,
    },
    Labels {
        #[serde(default)]
        solver: LabelSolver,
        #[serde(default)]
        lambda: f64,
        #[serde(default)]
        n_trials: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Deserialize, Default, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum LabelSolver {
    #[default]
    Ridge,
    Sgd,
}

impl AxisRequest {
    fn build(self, col: &Collection) -> ApiResult<AxisRecord> {
        match self {
            AxisRequest::Extremes {
                low_ids,
                high_ids,
                attribute_name,
            } => {
                let spec = ExtremeSpec::from_strs(&low_ids, &high_ids)?;
                let axis = extreme_pair_axis(&col.embeddings, &spec)?;
                Ok(axis.with_attribute(attribute_name.unwrap_or_default()))
            }
            AxisRequest::Raw {
                vector,
                offset,
                attribute_name,
            } => {
                if vector.len() != col.embeddings.dim() {
                    return Err(rankaxis_core::Error::Dim {
                        expected: col.embeddings.dim(),
                        found: vector.len(),
                    }
                    .into());
                }
                let axis = AxisRecord::from_direction(&vector, offset, AxisMethod::Raw)?;
                Ok(axis.with_attribute(attribute_name.unwrap_or_default()))
            }
            AxisRequest::Labels {
                solver,
                lambda,
                n_trials,
                seed,
            } => {
                let ds = col.dataset.as_ref().ok_or_else(|| {
                    ApiError::BadRequest(format!(
                        "collection {} has no labels and split",
                        col.collection_id
                    ))
                })?;
                let axis = match solver {
                    LabelSolver::Ridge => {
                        let (x, y) = ds.xy(SplitPart::Train)?;
                        let mut fit = fit_ridge_closed_form(
                            &x,
                            &y,
                            &RidgeConfig {
                                lambda,
                                standardize: false,
                            },
                        )?;
                        if !ds.split.val.is_empty() {
                            let (vx, vy) = ds.xy(SplitPart::Val)?;
                            fit.val_rho = Some(spearman_rho(&fit.predict(&vx), &vy)?);
                        }
                        axis_from_weights(&fit)?
                    }
                    LabelSolver::Sgd => {
                        let data = search_data(ds, &ds.split.train)?;
                        let defaults = HyperSearchSpec::default();
                        let spec = HyperSearchSpec {
                            n_trials: n_trials.unwrap_or(defaults.n_trials),
                            seed: seed.unwrap_or(defaults.seed),
                            ..defaults
                        };
                        let result = hyperparameter_search(&data.view(), &spec, Trainer::SgdLinear)?;
                        let fit = result.best.as_linear().ok_or_else(|| {
                            ApiError::BadRequest("search returned a nonlinear model".into())
                        })?;
                        axis_from_weights(fit)?
                    }
                };
                Ok(axis.with_attribute(ds.attribute_name()))
            }
        }
    }
}

#[derive(Serialize)]
struct AxisView<'a> {
    collection_id: &'a str,
    collection_version: u64,
    #[serde(flatten)]
    axis: &'a AxisRecord,
}

impl<'a> From<&'a AxisEntry> for AxisView<'a> {
    fn from(e: &'a AxisEntry) -> Self {
        AxisView {
            collection_id: &e.collection_id,
            collection_version: e.collection_version,
            axis: &e.axis,
        }
    }
}

fn axis_json(e: &AxisEntry) -> serde_json::Value {
    serde_json::to_value(AxisView::from(e)).unwrap_or_default()
}

async fn create_axis(
    State(state): AppStateRef,
    Path(c): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    // an unknown collection is reported before the body is looked at
    state.snapshot().collection(&c)?;
    let request: AxisRequest = parse_body(&body)?;
    let entry = state
        .mutate(move |snap| {
            let col = snap.collection(&c)?;
            let axis = request.build(col)?.with_id(snap.new_axis_id());
            let entry = AxisEntry {
                collection_id: c,
                collection_version: col.version,
                axis,
            };
            Ok((Event::CreateAxis(entry.clone()), entry))
        })
        .await?;
    log::info!("created axis {} on {}", entry.axis.axis_id, entry.collection_id);
    Ok((StatusCode::CREATED, Json(axis_json(&entry))))
}

async fn list_axes(State(state): AppStateRef) -> Json<Vec<serde_json::Value>> {
    let snap = state.snapshot();
    Json(snap.axes.values().map(|e| axis_json(e)).collect())
}

async fn get_axis(State(state): AppStateRef, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let snap = state.snapshot();
    Ok(Json(axis_json(snap.axis(&id)?)))
}

async fn delete_axis(State(state): AppStateRef, Path(id): Path<String>) -> ApiResult<StatusCode> {
    state
        .mutate(move |snap| {
            snap.axis(&id)?;
            Ok((Event::DeleteAxis { axis_id: id }, ()))
        })
        .await?;
    Ok(StatusCode::NO_CONTENT)
}

/// Collection and axis named by the path and `axis` query parameter.
fn resolve(snap: &Snapshot, c: &str, params: &HashMap<String, String>) -> ApiResult<(Arc<Collection>, Arc<AxisEntry>)> {
    let col = snap.collection(c)?.clone();
    let axis_id = params
        .get("axis")
        .ok_or_else(|| ApiError::BadRequest("missing query parameter axis".into()))?;
    let axis = snap.axis_for(&col, axis_id)?;
    Ok((col, axis))
}

#[derive(Serialize)]
struct RankPage<'a> {
    axis_id: &'a str,
    order: Order,
    offset: usize,
    limit: usize,
    total: usize,
    items: &'a [rankaxis_core::rankquery::RankedEntry],
}

async fn rank(State(state): AppStateRef, Path(c): Path<String>, Query(params): Params) -> ApiResult<Json<serde_json::Value>> {
    let snap = state.snapshot();
    let (col, axis) = resolve(&snap, &c, &params)?;
    let order = param::<Order>(&params, "order")?.unwrap_or_default();
    let offset = param(&params, "offset")?.unwrap_or(0);
    let limit = param(&params, "limit")?.unwrap_or(DEFAULT_PAGE_LIMIT);
    let view = state.ranked_view(col, axis, order).await?;
    let items = page(&view, offset, limit)?;
    let body = RankPage {
        axis_id: &view.axis_id,
        order,
        offset,
        limit,
        total: view.len(),
        items,
    };
    Ok(Json(serde_json::to_value(body).unwrap_or_default()))
}

#[derive(Serialize)]
struct PercentileEntry {
    r: f64,
    item_id: String,
    score: f64,
    /// Position in the ascending order.
    index: usize,
}

fn parse_r_list(raw: Option<&String>) -> ApiResult<Vec<f64>> {
    match raw {
        None => Ok((0..=10).map(|k| f64::from(k * 10)).collect()),
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| ApiError::BadRequest(format!("percentile {t:?}: {e}")))
            })
            .collect(),
    }
}

async fn percentiles(
    State(state): AppStateRef,
    Path(c): Path<String>,
    Query(params): Params,
) -> ApiResult<Json<Vec<PercentileEntry>>> {
    let snap = state.snapshot();
    let (col, axis) = resolve(&snap, &c, &params)?;
    let rs = parse_r_list(params.get("r"))?;
    let view = state.ranked_view(col, axis, Order::Ascending).await?;
    let out = rs
        .into_iter()
        .map(|r| {
            let (id, score) = percentile_item(&view, r)?;
            Ok(PercentileEntry {
                r,
                item_id: id.as_str().to_string(),
                score,
                index: nearest_rank_index(r, view.len())?,
            })
        })
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(Json(out))
}

#[derive(Serialize)]
struct ItemDetail {
    collection_id: String,
    item_id: String,
    index: usize,
    asset_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<SplitPart>,
}

async fn item(State(state): AppStateRef, Path((c, id)): Path<(String, String)>) -> ApiResult<Json<ItemDetail>> {
    let snap = state.snapshot();
    let col = snap.collection(&c)?;
    let index = col
        .embeddings
        .index_of(&id)
        .ok_or_else(|| ApiError::not_found("item", id.clone()))?;
    let (label, split) = match &col.dataset {
        Some(ds) => {
            let part = [SplitPart::Train, SplitPart::Val, SplitPart::Test]
                .into_iter()
                .find(|p| ds.ids(*p).iter().any(|i| i.as_str() == id));
            (ds.labels.get(&id), part)
        }
        None => (None, None),
    };
    Ok(Json(ItemDetail {
        collection_id: c,
        asset_url: col.manifest.asset_url(&id),
        item_id: id,
        index,
        label,
        split,
    }))
}
