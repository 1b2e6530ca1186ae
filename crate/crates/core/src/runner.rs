//! Timing breakdown and worker-count benchmarks.
//!
//! Each configuration is run `repeats` times and the mean wall time is
//! reported together with the speedup over a single worker. Every timed run
//! must reproduce the untimed result hash.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::error::Error;
use crate::ingest::TemporalBivariateDataset;
use crate::pipeline::{analyze_all, analyze_all_timed, StageTimes};

pub const DEFAULT_REPEATS: usize = 30;

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageMillis {
    pub bin_ms: f64,
    pub triangulation_ms: f64,
    pub mst_ms: f64,
    pub boxrule_ms: f64,
}

impl From<StageTimes> for StageMillis {
    fn from(t: StageTimes) -> Self {
        StageMillis {
            bin_ms: ms(t.bin),
            triangulation_ms: ms(t.triangulation),
            mst_ms: ms(t.mst),
            boxrule_ms: ms(t.boxrule),
        }
    }
}

impl StageMillis {
    pub fn total_ms(&self) -> f64 {
        self.bin_ms + self.triangulation_ms + self.mst_ms + self.boxrule_ms
    }

    fn mean<'a>(items: impl Iterator<Item = &'a StageMillis>) -> StageMillis {
        let (mut acc, mut n) = (StageMillis::default(), 0usize);
        for s in items {
            acc.bin_ms += s.bin_ms;
            acc.triangulation_ms += s.triangulation_ms;
            acc.mst_ms += s.mst_ms;
            acc.boxrule_ms += s.boxrule_ms;
            n += 1;
        }
        if n > 0 {
            let n = n as f64;
            acc.bin_ms /= n;
            acc.triangulation_ms /= n;
            acc.mst_ms /= n;
            acc.boxrule_ms /= n;
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestepTiming {
    pub t: usize,
    #[serde(flatten)]
    pub stages: StageMillis,
}

/// Leave-one-out plots reuse the timestep's binning, so `bin_ms` is always 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooTiming {
    pub t: usize,
    pub bin: usize,
    pub triangulation_ms: f64,
    pub mst_ms: f64,
    pub boxrule_ms: f64,
}

/// Per-stage wall times of one analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingBreakdown {
    pub workers: usize,
    pub wall_ms: f64,
    pub timesteps: Vec<TimestepTiming>,
    pub loo: Vec<LooTiming>,
    pub mean_timestep: StageMillis,
    pub mean_loo: StageMillis,
}

impl TimingBreakdown {
    pub fn new(
        workers: usize,
        wall: Duration,
        timesteps: impl Iterator<Item = (usize, StageMillis)>,
        loo: impl Iterator<Item = (usize, usize, StageMillis)>,
    ) -> Self {
        let timesteps: Vec<TimestepTiming> =
            timesteps.map(|(t, stages)| TimestepTiming { t, stages }).collect();
        let loo_stages: Vec<(usize, usize, StageMillis)> = loo
            .map(|(t, bin, s)| (t, bin, StageMillis { bin_ms: 0.0, ..s }))
            .collect();
        let mean_timestep = StageMillis::mean(timesteps.iter().map(|t| &t.stages));
        let mean_loo = StageMillis::mean(loo_stages.iter().map(|(_, _, s)| s));
        TimingBreakdown {
            workers,
            wall_ms: ms(wall),
            timesteps,
            loo: loo_stages
                .into_iter()
                .map(|(t, bin, s)| LooTiming {
                    t,
                    bin,
                    triangulation_ms: s.triangulation_ms,
                    mst_ms: s.mst_ms,
                    boxrule_ms: s.boxrule_ms,
                })
                .collect(),
            mean_timestep,
            mean_loo,
        }
    }

    /// Sum of all recorded stage times. Exceeds `wall_ms` only when stages ran
    /// concurrently.
    pub fn stage_sum_ms(&self) -> f64 {
        self.timesteps.iter().map(|t| t.stages.total_ms()).sum::<f64>()
            + self
                .loo
                .iter()
                .map(|l| l.triangulation_ms + l.mst_ms + l.boxrule_ms)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub workers: usize,
    pub mean_ms: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub dataset_sha256: String,
    pub result_hash: String,
    /// Every timed run reproduced `result_hash`.
    pub hashes_match: bool,
    pub repeats: usize,
    pub original_plots: usize,
    pub loo_plots: usize,
    pub rows: Vec<BenchRow>,
    /// Stage means over all single-worker repeats.
    pub mean_timestep: StageMillis,
    pub mean_loo: StageMillis,
    pub hardware_concurrency: usize,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("workers,mean_ms,speedup\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.6},{:.6}\n", r.workers, r.mean_ms, r.speedup));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn row(&self, workers: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.workers == workers)
    }
}

/// Time the full analysis for each worker count.
///
/// A single-worker baseline is always measured; it is listed in the rows only
/// when `worker_counts` contains 1.
pub fn bench_dataset(
    dataset: &TemporalBivariateDataset,
    config: &AnalysisConfig,
    worker_counts: &[usize],
    repeats: usize,
) -> Result<BenchReport, Error> {
    let repeats = repeats.max(1);
    let reference = analyze_all(dataset, &config.clone().with_workers(1))?;
    let result_hash = reference.result_hash();

    let mut hashes_match = true;
    let mut baseline_stage_runs: Vec<(StageMillis, StageMillis)> = Vec::new();
    let mut loo_plots = 0;
    let mut original_plots = 0;
    let mut measure = |workers: usize| -> Result<f64, Error> {
        let cfg = config.clone().with_workers(workers);
        let mut total = Duration::ZERO;
        for _ in 0..repeats {
            let start = Instant::now();
            let (analysis, timing) = analyze_all_timed(dataset, &cfg)?;
            total += start.elapsed();
            hashes_match &= analysis.result_hash() == result_hash;
            if workers == 1 {
                baseline_stage_runs.push((timing.mean_timestep, timing.mean_loo));
                loo_plots = timing.loo.len();
                original_plots = timing.timesteps.len();
            }
        }
        Ok(ms(total) / repeats as f64)
    };

    let baseline = measure(1)?;
    let mut rows = Vec::with_capacity(worker_counts.len());
    for &w in worker_counts {
        let mean_ms = if w == 1 { baseline } else { measure(w.max(1))? };
        rows.push(BenchRow {
            workers: w,
            mean_ms,
            speedup: baseline / mean_ms,
        });
    }

    Ok(BenchReport {
        dataset_sha256: dataset.content_hash(),
        result_hash,
        hashes_match,
        repeats,
        original_plots,
        loo_plots,
        rows,
        mean_timestep: StageMillis::mean(baseline_stage_runs.iter().map(|(t, _)| t)),
        mean_loo: StageMillis::mean(baseline_stage_runs.iter().map(|(_, l)| l)),
        hardware_concurrency: crate::config::hardware_concurrency(),
    })
}
