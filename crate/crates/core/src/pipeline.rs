//! Whole-series orchestration.
//!
//! Work is split into independent tasks: one per timestep for the original
//! plot, then one per (timestep, singleton bin) removal. Both stages run on a
//! worker pool of the configured size and results are collected by task index,
//! so the output is identical for any worker count.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::binning::{leader_bin, Binning};
use crate::config::{AnalysisConfig, RankAggregate};
use crate::error::Error;
use crate::geometry::{delaunay_edges, mst_from_edges, SpanningTree};
use crate::ingest::{normalize_plot, NormalizedPlot, TemporalBivariateDataset, MIN_PLOT_SAMPLES};
use crate::runner::{StageMillis, TimingBreakdown};
use crate::scoring::{
    assemble_deltas, compute_threshold, leave_one_out_deltas, loo_candidates, outlying_score,
    without_node, InstanceDelta, OutlyingScore,
};
use crate::Point;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("threshold must lie in [0, 1], got {0}")]
    ThresholdOutOfRange(f64),
    #[error("no profiles to rank")]
    EmptyProfiles,
    #[error("timestep {index} out of range ({count} timesteps)")]
    TimestepOutOfRange { index: usize, count: usize },
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error("could not serialize results: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Wall time per stage of one plot computation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub bin: Duration,
    pub triangulation: Duration,
    pub mst: Duration,
    pub boxrule: Duration,
}

impl StageTimes {
    pub fn total(&self) -> Duration {
        self.bin + self.triangulation + self.mst + self.boxrule
    }
}

fn timed<T>(slot: &mut Duration, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed();
    out
}

/// Everything computed once per timestep and shared by its leave-one-out tasks.
#[derive(Debug, Clone)]
pub struct PreparedTimestep {
    pub plot: NormalizedPlot,
    pub binning: Binning,
    pub representatives: Vec<Point>,
    pub tree: SpanningTree,
    pub original: OutlyingScore,
    pub times: StageTimes,
}

/// Normalize, bin, build the EMST over bin centroids and score it.
/// `None` when the timestep has fewer than three samples.
pub fn prepare_timestep(
    dataset: &TemporalBivariateDataset,
    t: usize,
    config: &AnalysisConfig,
) -> Result<Option<PreparedTimestep>, Error> {
    if t >= dataset.timestep_count() {
        return Err(PipelineError::TimestepOutOfRange {
            index: t,
            count: dataset.timestep_count(),
        }
        .into());
    }
    if dataset.present_count(t) < MIN_PLOT_SAMPLES {
        return Ok(None);
    }
    let mut times = StageTimes::default();
    let plot = normalize_plot(dataset, t)?;
    let binning = timed(&mut times.bin, || leader_bin(&plot, config.bin_min, config.bin_max));
    let representatives = binning.centroids();
    let candidates = timed(&mut times.triangulation, || delaunay_edges(&representatives));
    let tree = timed(&mut times.mst, || {
        mst_from_edges(representatives.len(), &candidates, &representatives)
    })?;
    let original = timed(&mut times.boxrule, || match compute_threshold(&tree, config.iqr_factor) {
        Ok(upper) => outlying_score(&tree, upper),
        Err(_) => OutlyingScore::empty(),
    });
    Ok(Some(PreparedTimestep {
        plot,
        binning,
        representatives,
        tree,
        original,
        times,
    }))
}

/// Score one leave-one-out plot and time its stages.
fn timed_loo(representatives: &[Point], removed: usize, upper: f64) -> (f64, StageTimes) {
    let mut times = StageTimes::default();
    let remaining = without_node(representatives, removed);
    let candidates = timed(&mut times.triangulation, || delaunay_edges(&remaining));
    let tree = timed(&mut times.mst, || {
        mst_from_edges(remaining.len(), &candidates, &remaining).expect("Delaunay edges connect")
    });
    let score = timed(&mut times.boxrule, || outlying_score(&tree, upper).score);
    (score, times)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningStats {
    pub bin_count: usize,
    pub singleton_count: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRecord {
    pub id: String,
    pub delta: f64,
    pub loo_score: f64,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Impact {
    pub id: String,
    pub delta: f64,
}

/// Spread of positive (inlying) and negative (outlying) deltas at one timestep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimestepSummary {
    pub max_inlying: f64,
    pub avg_inlying: f64,
    pub max_outlying: f64,
    pub avg_outlying: f64,
}

impl TimestepSummary {
    pub fn from_deltas(deltas: impl IntoIterator<Item = f64>) -> Self {
        let (mut pos_n, mut pos_sum, mut pos_max) = (0usize, 0.0f64, 0.0f64);
        let (mut neg_n, mut neg_sum, mut neg_max) = (0usize, 0.0f64, 0.0f64);
        for d in deltas {
            if d > 0.0 {
                pos_n += 1;
                pos_sum += d;
                pos_max = pos_max.max(d);
            } else if d < 0.0 {
                neg_n += 1;
                neg_sum += -d;
                neg_max = neg_max.max(-d);
            }
        }
        let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
        TimestepSummary {
            max_inlying: pos_max,
            // A mean can round a hair above the max it is bounded by.
            avg_inlying: mean(pos_sum, pos_n).min(pos_max),
            max_outlying: neg_max,
            avg_outlying: mean(neg_sum, neg_n).min(neg_max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestepResult {
    pub t: usize,
    pub label: String,
    /// Fewer than three samples; reported with score 0 and no deltas.
    pub degenerate: bool,
    pub sample_count: usize,
    pub original: OutlyingScore,
    pub binning: Option<BinningStats>,
    /// Sorted by instance id.
    pub deltas: Vec<DeltaRecord>,
    pub summary: TimestepSummary,
    pub top_impacts: Vec<Impact>,
}

fn top_impacts(deltas: &[DeltaRecord], k: usize) -> Vec<Impact> {
    let mut nonzero: Vec<&DeltaRecord> = deltas.iter().filter(|d| d.delta != 0.0).collect();
    nonzero.sort_by(|a, b| {
        b.delta
            .abs()
            .total_cmp(&a.delta.abs())
            .then_with(|| a.id.cmp(&b.id))
    });
    nonzero
        .into_iter()
        .take(k)
        .map(|d| Impact {
            id: d.id.clone(),
            delta: d.delta,
        })
        .collect()
}

fn degenerate_result(dataset: &TemporalBivariateDataset, t: usize) -> TimestepResult {
    TimestepResult {
        t,
        label: dataset.timesteps()[t].clone(),
        degenerate: true,
        sample_count: dataset.present_count(t),
        original: OutlyingScore::empty(),
        binning: None,
        deltas: Vec::new(),
        summary: TimestepSummary::default(),
        top_impacts: Vec::new(),
    }
}

fn build_result(
    dataset: &TemporalBivariateDataset,
    prepared: &PreparedTimestep,
    deltas: Vec<InstanceDelta>,
    top_k: usize,
) -> TimestepResult {
    let mut records: Vec<DeltaRecord> = deltas
        .into_iter()
        .map(|d| DeltaRecord {
            id: dataset.instance_id(d.instance).to_string(),
            delta: d.delta,
            loo_score: d.loo_score,
            skipped: d.skipped,
        })
        .collect();
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let summary = TimestepSummary::from_deltas(records.iter().map(|d| d.delta));
    let top_impacts = top_impacts(&records, top_k);
    let t = prepared.plot.timestep;
    TimestepResult {
        t,
        label: dataset.timesteps()[t].clone(),
        degenerate: false,
        sample_count: prepared.plot.len(),
        original: prepared.original.clone(),
        binning: Some(BinningStats {
            bin_count: prepared.binning.bins.len(),
            singleton_count: prepared.binning.singleton_count(),
            radius: prepared.binning.radius,
        }),
        deltas: records,
        summary,
        top_impacts,
    }
}

/// Analyze one timestep end to end on the current thread pool.
pub fn analyze_timestep(
    dataset: &TemporalBivariateDataset,
    t: usize,
    config: &AnalysisConfig,
) -> Result<TimestepResult, Error> {
    config.validate()?;
    Ok(match prepare_timestep(dataset, t, config)? {
        None => degenerate_result(dataset, t),
        Some(prepared) => {
            let deltas = leave_one_out_deltas(&prepared.plot, &prepared.binning, &prepared.original);
            build_result(dataset, &prepared, deltas, config.top_k)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub original_score: f64,
    /// Absent when the instance has no sample at this timestep or the
    /// timestep is degenerate.
    pub delta: Option<f64>,
}

/// One instance's leave-one-out deltas over the whole series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceProfile {
    pub id: String,
    pub label: String,
    pub series: Vec<ProfilePoint>,
    pub overall_outlying: f64,
    pub overall_inlying: f64,
}

impl InstanceProfile {
    pub fn score(&self, mode: RankMode, at: RankAt) -> f64 {
        match at {
            RankAt::Overall => match mode {
                RankMode::Outlying => self.overall_outlying,
                RankMode::Inlying => self.overall_inlying,
            },
            RankAt::Timestep(t) => self
                .series
                .get(t)
                .and_then(|p| p.delta)
                .map_or(0.0, |d| mode.contribution(d)),
        }
    }
}

fn aggregate(values: impl Iterator<Item = f64>, how: RankAggregate) -> f64 {
    match how {
        RankAggregate::Max => values.fold(0.0, f64::max),
        RankAggregate::Sum => values.sum(),
    }
}

fn build_profiles(
    dataset: &TemporalBivariateDataset,
    timesteps: &[TimestepResult],
    how: RankAggregate,
) -> Vec<InstanceProfile> {
    let mut series: Vec<Vec<ProfilePoint>> = (0..dataset.instance_count())
        .map(|_| {
            timesteps
                .iter()
                .map(|r| ProfilePoint {
                    original_score: r.original.score,
                    delta: None,
                })
                .collect()
        })
        .collect();
    let index: std::collections::HashMap<&str, usize> = dataset
        .instances()
        .iter()
        .enumerate()
        .map(|(i, inst)| (inst.id.as_str(), i))
        .collect();
    for r in timesteps {
        for d in &r.deltas {
            let i = index[d.id.as_str()];
            series[i][r.t].delta = Some(d.delta);
        }
    }
    let mut profiles: Vec<InstanceProfile> = dataset
        .instances()
        .iter()
        .zip(series)
        .map(|(inst, series)| {
            let deltas = || series.iter().filter_map(|p| p.delta);
            InstanceProfile {
                id: inst.id.clone(),
                label: inst.label.clone(),
                overall_outlying: aggregate(deltas().map(|d| (-d).max(0.0)), how),
                overall_inlying: aggregate(deltas().map(|d| d.max(0.0)), how),
                series,
            }
        })
        .collect();
    profiles.sort_by(|a, b| a.id.cmp(&b.id));
    profiles
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub sha256: String,
    pub axes: (String, String),
    pub instances: usize,
    pub timesteps: usize,
}

/// The result document.
///
/// Field order is fixed; with `timings` omitted the serialized form is
/// byte-identical across runs and worker counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub config: AnalysisConfig,
    pub dataset: DatasetSummary,
    pub timesteps: Vec<TimestepResult>,
    pub profiles: Vec<InstanceProfile>,
    pub timings: Option<TimingBreakdown>,
}

impl Analysis {
    pub fn to_json(&self) -> Result<String, PipelineError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// SHA-256 of the document without timings.
    pub fn result_hash(&self) -> String {
        let untimed = Analysis {
            timings: None,
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&untimed).expect("analysis serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn profile(&self, id: &str) -> Option<&InstanceProfile> {
        self.profiles
            .binary_search_by(|p| p.id.as_str().cmp(id))
            .ok()
            .map(|k| &self.profiles[k])
    }
}

pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))
}

/// Analyze every timestep. Timings are not recorded.
pub fn analyze_all(
    dataset: &TemporalBivariateDataset,
    config: &AnalysisConfig,
) -> Result<Analysis, Error> {
    let (mut analysis, _) = analyze_all_timed(dataset, config)?;
    analysis.timings = None;
    Ok(analysis)
}

/// Analyze every timestep and attach the per-stage timing breakdown.
pub fn analyze_all_timed(
    dataset: &TemporalBivariateDataset,
    config: &AnalysisConfig,
) -> Result<(Analysis, TimingBreakdown), Error> {
    config.validate()?;
    let workers = config.resolved_workers();
    let pool = worker_pool(workers)?;
    let start = Instant::now();

    let (prepared, loo) = pool.install(|| -> Result<_, Error> {
        let prepared: Vec<Option<PreparedTimestep>> = (0..dataset.timestep_count())
            .into_par_iter()
            .map(|t| prepare_timestep(dataset, t, config))
            .collect::<Result<_, _>>()?;

        let tasks: Vec<(usize, usize)> = prepared
            .iter()
            .enumerate()
            .filter_map(|(t, p)| p.as_ref().map(|p| (t, p)))
            .filter(|(_, p)| p.original.upperbound.is_some())
            .flat_map(|(t, p)| loo_candidates(&p.binning).into_iter().map(move |bin| (t, bin)))
            .collect();

        let loo: Vec<((usize, usize), (f64, StageTimes))> = tasks
            .into_par_iter()
            .map(|(t, bin)| {
                let p = prepared[t].as_ref().expect("task for prepared timestep");
                let upper = p.original.upperbound.expect("task has a fence");
                ((t, bin), timed_loo(&p.representatives, bin, upper))
            })
            .collect();
        Ok((prepared, loo))
    })?;

    let mut per_timestep: Vec<Vec<(usize, f64)>> = vec![Vec::new(); prepared.len()];
    for &((t, bin), (score, _)) in &loo {
        per_timestep[t].push((bin, score));
    }
    let timesteps: Vec<TimestepResult> = prepared
        .iter()
        .enumerate()
        .map(|(t, p)| match p {
            None => degenerate_result(dataset, t),
            Some(p) => {
                let deltas = assemble_deltas(&p.plot, &p.binning, &p.original, &per_timestep[t]);
                build_result(dataset, p, deltas, config.top_k)
            }
        })
        .collect();
    let profiles = build_profiles(dataset, &timesteps, config.rank_agg);
    let wall = start.elapsed();

    let breakdown = TimingBreakdown::new(
        workers,
        wall,
        prepared
            .iter()
            .enumerate()
            .filter_map(|(t, p)| p.as_ref().map(|p| (t, StageMillis::from(p.times)))),
        loo.iter().map(|&((t, bin), (_, times))| (t, bin, StageMillis::from(times))),
    );
    let analysis = Analysis {
        config: config.clone(),
        dataset: DatasetSummary {
            sha256: dataset.content_hash(),
            axes: (dataset.axes().0.to_string(), dataset.axes().1.to_string()),
            instances: dataset.instance_count(),
            timesteps: dataset.timestep_count(),
        },
        timesteps,
        profiles,
        timings: Some(breakdown.clone()),
    };
    Ok((analysis, breakdown))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMode {
    Outlying,
    Inlying,
}

impl RankMode {
    /// Non-negative contribution of a delta under this mode.
    pub fn contribution(self, delta: f64) -> f64 {
        match self {
            RankMode::Outlying => (-delta).max(0.0),
            RankMode::Inlying => delta.max(0.0),
        }
    }
}

impl std::str::FromStr for RankMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "outlying" => Ok(RankMode::Outlying),
            "inlying" => Ok(RankMode::Inlying),
            other => Err(format!("unknown mode `{other}` (expected outlying or inlying)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankAt {
    Overall,
    Timestep(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedInstance {
    pub id: String,
    pub score: f64,
}

/// Order instances by descending score; ties by ascending id.
pub fn rank_instances(
    profiles: &[InstanceProfile],
    mode: RankMode,
    at: RankAt,
) -> Result<Vec<RankedInstance>, PipelineError> {
    if profiles.is_empty() {
        return Err(PipelineError::EmptyProfiles);
    }
    if let RankAt::Timestep(t) = at {
        let count = profiles[0].series.len();
        if t >= count {
            return Err(PipelineError::TimestepOutOfRange { index: t, count });
        }
    }
    let mut ranked: Vec<RankedInstance> = profiles
        .iter()
        .map(|p| RankedInstance {
            id: p.id.clone(),
            score: p.score(mode, at),
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    Ok(ranked)
}

/// Profiles whose overall score under `mode` is at least `threshold`.
pub fn filter_by_threshold(
    profiles: &[InstanceProfile],
    mode: RankMode,
    threshold: f64,
) -> Result<Vec<&InstanceProfile>, PipelineError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(PipelineError::ThresholdOutOfRange(threshold));
    }
    Ok(profiles
        .iter()
        .filter(|p| p.score(mode, RankAt::Overall) >= threshold)
        .collect())
}
