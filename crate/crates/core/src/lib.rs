//! Leave-one-out diagnostics for MST-based outlying scores of temporal
//! bivariate data.
//!
//! Each time step of a dataset is a scatterplot. The plot is normalized to the
//! unit square, aggregated with the leader algorithm, and summarized by the
//! Euclidean minimum spanning tree over bin centroids. The outlying score is the
//! fraction of tree length carried by edges longer than the Tukey upper fence.
//! Every singleton bin is then removed in turn and the plot is rescored with the
//! original fence; the signed change is that observation's contribution.
//!
//! Module map:
//! - [`ingest`]: dataset parsing and per-timestep normalization
//! - [`binning`]: leader binning with an adaptive coverage radius
//! - [`geometry`]: Delaunay edges and Kruskal EMST
//! - [`scoring`]: box-plot fence, outlying score, leave-one-out deltas
//! - [`pipeline`]: whole-series orchestration, profiles, rankings
//! - [`runner`]: timing breakdown and worker-count benchmarks
//! - [`synthetic`]: seeded generators for tests and benchmarks

pub mod binning;
pub mod config;
pub mod error;
pub mod geometry;
pub mod ingest;
pub mod pipeline;
pub mod runner;
pub mod scoring;
pub mod synthetic;

pub use binning::{leader_bin, singleton_ids, Bin, Binning, SearchOutcome};
pub use config::{AnalysisConfig, RankAggregate};
pub use error::Error;
pub use geometry::{delaunay_edges, emst, mst_from_edges, SpanningTree, TreeEdge};
pub use ingest::{
    normalize_plot, parse_dataset, InputFormat, NormalizedPlot, ParseReport, PlotPoint, Scale,
    TemporalBivariateDataset,
};
pub use pipeline::{
    analyze_all, analyze_timestep, filter_by_threshold, rank_instances, Analysis, InstanceProfile,
    RankAt, RankMode, TimestepResult, TimestepSummary,
};
pub use scoring::{compute_threshold, leave_one_out_deltas, outlying_score, InstanceDelta, OutlyingScore};

/// A position in the unit square.
pub type Point = [f64; 2];
