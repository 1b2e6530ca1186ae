//! Endpoint handlers and their response bodies.
//!
//! Scores, upperbounds and deltas are copied out of the session's results;
//! only geometry (bins and spanning trees) for the detail view is rebuilt.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::Json;
use outlying_core::pipeline::{prepare_timestep, BinningStats, Impact, PreparedTimestep};
use outlying_core::scoring::{exceeds_fence, leave_one_out_tree};
use outlying_core::{
    parse_dataset, rank_instances, InputFormat, Point, RankAggregate, RankAt, RankMode,
    SpanningTree, TimestepSummary,
};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::session::Session;
use crate::AppState;

type ApiResult<T> = Result<Json<T>, ApiError>;

fn current(state: &AppState) -> Result<Arc<Session>, ApiError> {
    state.session().ok_or_else(ApiError::no_session)
}

fn timestep_index(session: &Session, raw: &str) -> Result<usize, ApiError> {
    let count = session.dataset().timestep_count();
    raw.parse::<usize>()
        .ok()
        .filter(|&t| t < count)
        .ok_or_else(|| ApiError::not_found("unknown_timestep", format!("no timestep `{raw}` (dataset has {count})")))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Axes {
    pub x: String,
    pub y: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub iqr_factor: f64,
    pub bin_min: usize,
    pub bin_max: usize,
    pub workers: usize,
    pub rank_agg: RankAggregate,
    pub top_k: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Meta {
    pub axes: Axes,
    pub timesteps: Vec<String>,
    pub instances: Vec<InstanceMeta>,
    pub config: ConfigEcho,
    pub dataset_sha256: String,
    pub result_hash: String,
}

fn meta_of(session: &Session) -> Meta {
    let ds = session.dataset();
    let c = session.config();
    Meta {
        axes: Axes {
            x: ds.axes().0.to_string(),
            y: ds.axes().1.to_string(),
        },
        timesteps: ds.timesteps().to_vec(),
        instances: ds
            .instances()
            .iter()
            .map(|i| InstanceMeta {
                id: i.id.clone(),
                label: i.label.clone(),
            })
            .collect(),
        config: ConfigEcho {
            iqr_factor: c.iqr_factor,
            bin_min: c.bin_min,
            bin_max: c.bin_max,
            workers: c.workers,
            rank_agg: c.rank_agg,
            top_k: c.top_k,
        },
        dataset_sha256: session.analysis().dataset.sha256.clone(),
        result_hash: session.result_hash().to_string(),
    }
}

pub async fn meta(State(state): State<AppState>) -> ApiResult<Meta> {
    let session = current(&state)?;
    Ok(Json(meta_of(&session)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TimestepEntry {
    pub t: usize,
    pub label: String,
    pub score: f64,
    pub upperbound: Option<f64>,
    pub degenerate: bool,
    pub sample_count: usize,
    pub binning: Option<BinningStats>,
    pub summary: TimestepSummary,
    pub top_impacts: Vec<Impact>,
}

pub async fn timesteps(State(state): State<AppState>) -> ApiResult<Vec<TimestepEntry>> {
    let session = current(&state)?;
    Ok(Json(
        session
            .analysis()
            .timesteps
            .iter()
            .map(|r| TimestepEntry {
                t: r.t,
                label: r.label.clone(),
                score: r.original.score,
                upperbound: r.original.upperbound,
                degenerate: r.degenerate,
                sample_count: r.sample_count,
                binning: r.binning.clone(),
                summary: r.summary,
                top_impacts: r.top_impacts.clone(),
            })
            .collect(),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RawPoint {
    pub id: String,
    /// Value in the dataset's units.
    pub x: f64,
    pub y: f64,
    /// Position in the unit square; absent on degenerate timesteps.
    pub nx: Option<f64>,
    pub ny: Option<f64>,
    pub bin: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BinView {
    pub index: usize,
    pub leader: Point,
    pub centroid: Point,
    pub members: Vec<String>,
    pub singleton: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NodeView {
    pub bin: usize,
    pub position: Point,
}

/// `a` and `b` index into `nodes`.
#[derive(Debug, Serialize, Deserialize)]
pub struct EdgeView {
    pub a: usize,
    pub b: usize,
    pub length: f64,
    pub outlying: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TreeView {
    pub nodes: Vec<NodeView>,
    pub edges: Vec<EdgeView>,
    pub total_length: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LeaveOneOutView {
    pub instance: String,
    pub bin: usize,
    pub score: f64,
    pub delta: f64,
    pub tree: TreeView,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Detail {
    pub t: usize,
    pub label: String,
    pub degenerate: bool,
    pub score: f64,
    pub upperbound: Option<f64>,
    pub points: Vec<RawPoint>,
    pub bins: Vec<BinView>,
    pub tree: Option<TreeView>,
    pub leave_one_out: Option<LeaveOneOutView>,
}

#[derive(Debug, Deserialize)]
pub struct DetailQuery {
    pub instance: Option<String>,
}

fn tree_view(tree: &SpanningTree, node_bins: &[usize], positions: &[Point], upperbound: Option<f64>) -> TreeView {
    TreeView {
        nodes: node_bins
            .iter()
            .zip(positions)
            .map(|(&bin, &position)| NodeView { bin, position })
            .collect(),
        edges: tree
            .edges
            .iter()
            .map(|e| EdgeView {
                a: e.a,
                b: e.b,
                length: e.length,
                outlying: upperbound.is_some_and(|u| exceeds_fence(e.length, u)),
            })
            .collect(),
        total_length: tree.total_length,
    }
}

fn leave_one_out_view(
    session: &Session,
    t: usize,
    prepared: &PreparedTimestep,
    id: &str,
) -> Result<LeaveOneOutView, ApiError> {
    let instance = session
        .dataset()
        .instance_index(id)
        .ok_or_else(|| ApiError::not_found("unknown_instance", format!("no instance `{id}`")))?;
    let bin = prepared.binning.bin_of(instance).ok_or_else(|| {
        ApiError::not_found("absent_sample", format!("instance `{id}` has no sample at timestep {t}"))
    })?;
    let bins = &prepared.binning.bins;
    let record = session.analysis().timesteps[t]
        .deltas
        .iter()
        .find(|d| d.id == id)
        .ok_or_else(|| ApiError::internal(format!("results hold no delta for `{id}` at timestep {t}")))?;
    if record.skipped || bins.len() < 2 {
        let detail = if bins.len() < 2 {
            format!("timestep {t} has a single bin; leaving it out leaves no tree, so `{id}` has delta 0")
        } else {
            format!(
                "`{id}` shares bin {bin} with {} other points; removing it leaves the bin centroid unchanged, so its delta is 0 and no leave-one-out plot is computed",
                bins[bin].count - 1
            )
        };
        return Err(ApiError::new(StatusCode::CONFLICT, "not_singleton", detail));
    }
    let tree = leave_one_out_tree(&prepared.representatives, bin);
    let node_bins: Vec<usize> = (0..bins.len()).filter(|&k| k != bin).collect();
    let positions: Vec<Point> = node_bins.iter().map(|&k| prepared.representatives[k]).collect();
    Ok(LeaveOneOutView {
        instance: id.to_string(),
        bin,
        score: record.loo_score,
        delta: record.delta,
        tree: tree_view(&tree, &node_bins, &positions, session.analysis().timesteps[t].original.upperbound),
    })
}

fn detail_of(session: &Session, t: usize, instance: Option<&str>) -> Result<Detail, ApiError> {
    let ds = session.dataset();
    let result = &session.analysis().timesteps[t];
    let prepared = prepare_timestep(ds, t, session.config()).map_err(|e| ApiError::internal(e.to_string()))?;
    let Some(prepared) = prepared else {
        if let Some(id) = instance {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "degenerate_timestep",
                format!("timestep {t} has fewer than three samples; no leave-one-out plot exists for `{id}`"),
            ));
        }
        let points = (0..ds.instance_count())
            .filter_map(|i| ds.sample(i, t).map(|p| (i, p)))
            .map(|(i, p)| RawPoint {
                id: ds.instance_id(i).to_string(),
                x: p[0],
                y: p[1],
                nx: None,
                ny: None,
                bin: None,
            })
            .collect();
        return Ok(Detail {
            t,
            label: result.label.clone(),
            degenerate: true,
            score: result.original.score,
            upperbound: result.original.upperbound,
            points,
            bins: Vec::new(),
            tree: None,
            leave_one_out: None,
        });
    };
    if prepared.original.score.to_bits() != result.original.score.to_bits() {
        return Err(ApiError::internal(format!("rebuilt geometry for timestep {t} disagrees with the stored score")));
    }
    let bins = &prepared.binning.bins;
    let mut bin_of = vec![usize::MAX; ds.instance_count()];
    for (k, b) in bins.iter().enumerate() {
        for &m in &b.members {
            bin_of[m] = k;
        }
    }
    let points = prepared
        .plot
        .points
        .iter()
        .map(|p| {
            let raw = ds.sample(p.instance, t).expect("plotted instances have samples");
            RawPoint {
                id: ds.instance_id(p.instance).to_string(),
                x: raw[0],
                y: raw[1],
                nx: Some(p.position[0]),
                ny: Some(p.position[1]),
                bin: Some(bin_of[p.instance]),
            }
        })
        .collect();
    let bin_views = bins
        .iter()
        .enumerate()
        .map(|(index, b)| BinView {
            index,
            leader: b.leader,
            centroid: b.centroid,
            members: b.members.iter().map(|&m| ds.instance_id(m).to_string()).collect(),
            singleton: b.is_singleton(),
        })
        .collect();
    let all_bins: Vec<usize> = (0..bins.len()).collect();
    let tree = tree_view(&prepared.tree, &all_bins, &prepared.representatives, result.original.upperbound);
    let leave_one_out = instance
        .map(|id| leave_one_out_view(session, t, &prepared, id))
        .transpose()?;
    Ok(Detail {
        t,
        label: result.label.clone(),
        degenerate: false,
        score: result.original.score,
        upperbound: result.original.upperbound,
        points,
        bins: bin_views,
        tree: Some(tree),
        leave_one_out,
    })
}

pub async fn detail(
    State(state): State<AppState>,
    Path(t): Path<String>,
    Query(query): Query<DetailQuery>,
) -> ApiResult<Detail> {
    let session = current(&state)?;
    let t = timestep_index(&session, &t)?;
    let instance = query.instance.filter(|s| !s.is_empty());
    // Rebuilding geometry is CPU-bound.
    tokio::task::spawn_blocking(move || detail_of(&session, t, instance.as_deref()))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map(Json)
}

#[derive(Debug, Deserialize)]
pub struct RankQuery {
    pub mode: Option<String>,
    pub t: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RankEntry {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Ranking {
    pub mode: String,
    pub t: Option<usize>,
    pub ranking: Vec<RankEntry>,
}

pub async fn rank(State(state): State<AppState>, Query(query): Query<RankQuery>) -> ApiResult<Ranking> {
    let session = current(&state)?;
    let mode_name = query.mode.unwrap_or_else(|| "outlying".to_string());
    let mode: RankMode = mode_name
        .parse()
        .map_err(|e: String| ApiError::bad_request("invalid_mode", e))?;
    let t = match query.t.as_deref().filter(|s| !s.is_empty()) {
        None => None,
        Some(raw) => Some(timestep_index(&session, raw)?),
    };
    let at = t.map_or(RankAt::Overall, RankAt::Timestep);
    let ranked = rank_instances(&session.analysis().profiles, mode, at)
        .map_err(|e| ApiError::not_found("no_ranking", e.to_string()))?;
    Ok(Json(Ranking {
        mode: mode_name,
        t,
        ranking: ranked
            .into_iter()
            .map(|r| RankEntry { id: r.id, score: r.score })
            .collect(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: usize,
    pub label: String,
    pub original_score: f64,
    pub delta: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Profile {
    pub id: String,
    pub label: String,
    pub overall_outlying: f64,
    pub overall_inlying: f64,
    pub series: Vec<SeriesPoint>,
}

pub async fn profile(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Profile> {
    let session = current(&state)?;
    let p = session
        .analysis()
        .profile(&id)
        .ok_or_else(|| ApiError::not_found("unknown_instance", format!("no instance `{id}`")))?;
    let labels = session.dataset().timesteps();
    Ok(Json(Profile {
        id: p.id.clone(),
        label: p.label.clone(),
        overall_outlying: p.overall_outlying,
        overall_inlying: p.overall_inlying,
        series: p
            .series
            .iter()
            .enumerate()
            .map(|(t, s)| SeriesPoint {
                t,
                label: labels[t].clone(),
                original_score: s.original_score,
                delta: s.delta,
            })
            .collect(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct UploadQuery {
    pub format: Option<String>,
}

fn upload_format(query: &UploadQuery, headers: &HeaderMap) -> Result<InputFormat, ApiError> {
    if let Some(f) = &query.format {
        return f.parse().map_err(|e: String| ApiError::bad_request("invalid_format", e));
    }
    let content_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("");
    Ok(if content_type.starts_with("application/json") {
        InputFormat::WideJson
    } else {
        InputFormat::LongCsv
    })
}

/// Parse an uploaded dataset, analyze it and make it the current session.
pub async fn upload(
    State(state): State<AppState>,
    Query(query): Query<UploadQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<Meta>), ApiError> {
    let format = upload_format(&query, &headers)?;
    let config = state.config().clone();
    let session = tokio::task::spawn_blocking(move || -> Result<Session, ApiError> {
        let (dataset, report) =
            parse_dataset(body.as_ref(), format).map_err(|e| ApiError::bad_request("invalid_dataset", e.to_string()))?;
        tracing::info!(records = report.records, dropped = report.dropped, "dataset uploaded");
        Session::compute(dataset, &config).map_err(|e| match e {
            crate::session::SessionError::Analysis(e) if e.kind() == outlying_core::error::ErrorKind::Validation => {
                ApiError::bad_request("invalid_dataset", e.to_string())
            }
            other => ApiError::internal(other.to_string()),
        })
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    let meta = meta_of(&session);
    state.replace(session);
    Ok((StatusCode::CREATED, Json(meta)))
}
