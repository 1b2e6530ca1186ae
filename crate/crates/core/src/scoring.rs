//! Box-plot fence on MST edge lengths, the outlying score, and selective
//! leave-one-out deltas.
//!
//! Only singleton bins are left out. Removing a member of a denser bin leaves
//! the bin's representative in place, so the node set and the score are
//! unchanged and the removal is reported as a skip with delta 0.
//!
//! Every leave-one-out plot is scored against the ORIGINAL plot's fence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::Binning;
use crate::geometry::{delaunay_edges, mst_from_edges, SpanningTree};
use crate::ingest::NormalizedPlot;
use crate::Point;

pub const DEFAULT_IQR_FACTOR: f64 = 1.5;

/// Relative band around the fence inside which a length counts as a tie.
/// Min-max scaling leaves ulp-level noise on lengths that are equal in the
/// data, and a zero IQR puts the fence right on top of them.
pub const FENCE_TIE_TOLERANCE: f64 = 1e-9;

/// Whether an edge is strictly longer than the fence, ties excluded.
pub fn exceeds_fence(length: f64, upperbound: f64) -> bool {
    length > upperbound + FENCE_TIE_TOLERANCE * upperbound.abs()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoringError {
    #[error("tree has no edges, so no fence can be derived")]
    NoEdges,
}

/// Upper fence `q75 + factor * (q75 - q25)` with integer-index quartiles:
/// `i50 = L / 2`, `i25 = i50 / 2`, `i75 = i50 + i25`.
pub fn compute_threshold(tree: &SpanningTree, factor: f64) -> Result<f64, ScoringError> {
    let mut lengths = tree.lengths();
    if lengths.is_empty() {
        return Err(ScoringError::NoEdges);
    }
    lengths.sort_by(f64::total_cmp);
    Ok(fence_from_sorted(&lengths, factor))
}

fn fence_from_sorted(sorted: &[f64], factor: f64) -> f64 {
    let i50 = sorted.len() / 2;
    let i25 = i50 / 2;
    let i75 = i50 + i25;
    sorted[i75] + factor * (sorted[i75] - sorted[i25])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlyingScore {
    /// Fraction of total tree length on edges strictly longer than the fence.
    pub score: f64,
    /// `None` only for trees without edges.
    pub upperbound: Option<f64>,
    /// Indices into the scored tree's edge list.
    pub outlier_edge_indices: Vec<usize>,
    pub outlier_length: f64,
    pub total_length: f64,
}

impl OutlyingScore {
    /// Score of a plot with no edges.
    pub fn empty() -> Self {
        OutlyingScore {
            score: 0.0,
            upperbound: None,
            outlier_edge_indices: Vec::new(),
            outlier_length: 0.0,
            total_length: 0.0,
        }
    }
}

/// Score a tree against a fixed fence. Edges equal to the fence (within
/// [`FENCE_TIE_TOLERANCE`]) are not outlying.
pub fn outlying_score(tree: &SpanningTree, upperbound: f64) -> OutlyingScore {
    let mut outlier_edge_indices = Vec::new();
    let mut outlier_length = 0.0;
    for (k, e) in tree.edges.iter().enumerate() {
        if exceeds_fence(e.length, upperbound) {
            outlier_edge_indices.push(k);
            outlier_length += e.length;
        }
    }
    let total_length = tree.total_length;
    let score = if total_length > 0.0 {
        (outlier_length / total_length).clamp(0.0, 1.0)
    } else {
        0.0
    };
    OutlyingScore {
        score,
        upperbound: Some(upperbound),
        outlier_edge_indices,
        outlier_length,
        total_length,
    }
}

/// Derive the fence from the tree itself and score it.
pub fn score_tree(tree: &SpanningTree, factor: f64) -> OutlyingScore {
    match compute_threshold(tree, factor) {
        Ok(upper) => outlying_score(tree, upper),
        Err(ScoringError::NoEdges) => OutlyingScore::empty(),
    }
}

/// Representatives with node `removed` dropped.
pub fn without_node(representatives: &[Point], removed: usize) -> Vec<Point> {
    representatives
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != removed)
        .map(|(_, &p)| p)
        .collect()
}

/// Tree over the representatives left after removing one node, triangulated
/// from scratch.
pub fn leave_one_out_tree(representatives: &[Point], removed: usize) -> SpanningTree {
    let remaining = without_node(representatives, removed);
    let candidates = delaunay_edges(&remaining);
    mst_from_edges(remaining.len(), &candidates, &remaining).expect("Delaunay edges connect")
}

/// Score one leave-one-out plot with the original fence.
pub fn leave_one_out_score(
    representatives: &[Point],
    removed: usize,
    original_upperbound: f64,
) -> OutlyingScore {
    outlying_score(&leave_one_out_tree(representatives, removed), original_upperbound)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceDelta {
    /// Dataset instance index.
    pub instance: usize,
    /// `loo_score - original_score`; negative for outlier contributors,
    /// positive for maskers.
    pub delta: f64,
    pub loo_score: f64,
    /// Member of a bin with two or more points.
    pub skipped: bool,
}

/// Bins whose removal is evaluated. Empty when only one bin exists.
pub fn loo_candidates(binning: &Binning) -> Vec<usize> {
    if binning.bins.len() < 2 {
        return Vec::new();
    }
    (0..binning.bins.len())
        .filter(|&k| binning.bins[k].is_singleton())
        .collect()
}

/// Combine per-bin leave-one-out scores into one delta per plotted instance,
/// ordered by dataset instance index.
pub fn assemble_deltas(
    plot: &NormalizedPlot,
    binning: &Binning,
    original: &OutlyingScore,
    loo: &[(usize, f64)],
) -> Vec<InstanceDelta> {
    let mut by_bin: Vec<Option<f64>> = vec![None; binning.bins.len()];
    for &(bin, score) in loo {
        by_bin[bin] = Some(score);
    }
    let mut deltas: Vec<InstanceDelta> = Vec::with_capacity(plot.len());
    for (k, bin) in binning.bins.iter().enumerate() {
        for &instance in &bin.members {
            deltas.push(match by_bin[k] {
                Some(loo_score) => InstanceDelta {
                    instance,
                    delta: loo_score - original.score,
                    loo_score,
                    skipped: false,
                },
                None => InstanceDelta {
                    instance,
                    delta: 0.0,
                    loo_score: original.score,
                    skipped: true,
                },
            });
        }
    }
    deltas.sort_by_key(|d| d.instance);
    deltas
}

/// Leave out every singleton bin in turn, reusing `original.upperbound`.
///
/// `original` must be the score of the tree over `binning`'s centroids. Runs
/// on the current rayon pool; the output does not depend on its size.
pub fn leave_one_out_deltas(
    plot: &NormalizedPlot,
    binning: &Binning,
    original: &OutlyingScore,
) -> Vec<InstanceDelta> {
    let reps = binning.centroids();
    let loo: Vec<(usize, f64)> = match original.upperbound {
        Some(upper) => loo_candidates(binning)
            .into_par_iter()
            .map(|bin| (bin, leave_one_out_score(&reps, bin, upper).score))
            .collect(),
        None => Vec::new(),
    };
    assemble_deltas(plot, binning, original, &loo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{emst, TreeEdge};
    use crate::ingest::{PlotPoint, Scale};
    use proptest::prelude::*;

    fn chain(lengths: &[f64]) -> SpanningTree {
        let edges: Vec<TreeEdge> = lengths
            .iter()
            .enumerate()
            .map(|(k, &length)| TreeEdge { a: k, b: k + 1, length })
            .collect();
        SpanningTree {
            node_count: lengths.len() + 1,
            total_length: lengths.iter().sum(),
            edges,
        }
    }

    #[test]
    fn fence_hand_traces() {
        let t = chain(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0]);
        assert_eq!(compute_threshold(&t, 1.5), Ok(1.0));
        assert_eq!(compute_threshold(&chain(&[1.0]), 1.5), Ok(1.0));
        assert_eq!(compute_threshold(&chain(&[2.0, 4.0, 6.0, 8.0]), 1.5), Ok(14.0));
        // Input order does not matter.
        assert_eq!(compute_threshold(&chain(&[8.0, 2.0, 6.0, 4.0]), 1.5), Ok(14.0));
        assert_eq!(compute_threshold(&chain(&[]), 1.5), Err(ScoringError::NoEdges));
    }

    #[test]
    fn extreme_factor() {
        assert_eq!(compute_threshold(&chain(&[2.0, 4.0, 6.0, 8.0]), 3.0), Ok(20.0));
    }

    #[test]
    fn score_examples() {
        let t = chain(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0]);
        let s = outlying_score(&t, 1.0);
        assert!((s.score - 10.0 / 17.0).abs() < 1e-12);
        assert_eq!(s.outlier_edge_indices, vec![7]);

        let flat = chain(&[0.3; 9]);
        assert_eq!(score_tree(&flat, 1.5).score, 0.0);

        assert_eq!(outlying_score(&chain(&[1.0, 2.0, 3.0]), 0.5).score, 1.0);
        assert_eq!(outlying_score(&chain(&[]), 0.5).score, 0.0);
        assert_eq!(score_tree(&chain(&[]), 1.5), OutlyingScore::empty());
    }

    #[test]
    fn edge_at_fence_is_not_outlying() {
        let s = outlying_score(&chain(&[1.0, 2.0, 2.0]), 2.0);
        assert!(s.outlier_edge_indices.is_empty());
        assert_eq!(s.score, 0.0);
        // One ulp above the fence is still a tie.
        let s = outlying_score(&chain(&[1.0, f64::from_bits(2.0f64.to_bits() + 1)]), 2.0);
        assert_eq!(s.score, 0.0);
        let s = outlying_score(&chain(&[1.0, 2.0 + 1e-6]), 2.0);
        assert_eq!(s.outlier_edge_indices, vec![1]);
    }

    fn plot_of(points: &[Point]) -> NormalizedPlot {
        NormalizedPlot {
            timestep: 0,
            points: points
                .iter()
                .enumerate()
                .map(|(instance, &position)| PlotPoint { instance, position })
                .collect(),
            scale: Scale { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 },
        }
    }

    fn analyze(points: &[Point]) -> (NormalizedPlot, Binning, OutlyingScore, Vec<InstanceDelta>) {
        let plot = plot_of(points);
        let binning = crate::binning::leader_bin(&plot, 50, 250);
        let original = score_tree(&emst(&binning.centroids()), 1.5);
        let deltas = leave_one_out_deltas(&plot, &binning, &original);
        (plot, binning, original, deltas)
    }

    #[test]
    fn far_singleton_is_an_outlier_contributor() {
        let mut pts: Vec<Point> = (0..60)
            .map(|k| [0.05 + 0.01 * (k % 8) as f64, 0.05 + 0.01 * (k / 8) as f64])
            .collect();
        pts.push([0.95, 0.9]);
        let (_, _, original, deltas) = analyze(&pts);
        assert!(original.score > 0.0);
        let far = &deltas[60];
        assert!(!far.skipped);
        assert!(far.delta < 0.0, "{far:?}");
    }

    #[test]
    fn dense_bin_members_are_skipped() {
        let mut pts = vec![[0.2, 0.2]; 5];
        pts.extend((0..4).map(|k| [0.5 + 0.1 * k as f64, 0.8]));
        let plot = plot_of(&pts);
        let binning = crate::binning::leader_bin(&plot, 2, 10);
        let original = score_tree(&emst(&binning.centroids()), 1.5);
        let deltas = leave_one_out_deltas(&plot, &binning, &original);
        assert_eq!(deltas.len(), pts.len());
        for d in &deltas[..5] {
            assert!(d.skipped);
            assert_eq!(d.delta, 0.0);
            assert_eq!(d.loo_score, original.score);
        }
        assert!(deltas[5..].iter().all(|d| !d.skipped));
    }

    #[test]
    fn single_bin_skips_everything() {
        let pts = vec![[0.4, 0.4]; 3];
        let (_, binning, original, deltas) = analyze(&pts);
        assert_eq!(binning.bins.len(), 1);
        assert_eq!(original.upperbound, None);
        assert!(deltas.iter().all(|d| d.skipped && d.delta == 0.0));
    }

    #[test]
    fn loo_fence_is_the_original_fence() {
        let pts = crate::synthetic::mixture_points(11, 300);
        let plot = plot_of(&pts);
        let binning = crate::binning::leader_bin(&plot, 50, 250);
        let reps = binning.centroids();
        let original = score_tree(&emst(&reps), 1.5);
        let upper = original.upperbound.unwrap();
        for bin in loo_candidates(&binning) {
            let loo = leave_one_out_score(&reps, bin, upper);
            assert_eq!(loo.upperbound.unwrap().to_bits(), upper.to_bits());
        }
    }

    proptest! {
        #[test]
        fn score_is_bounded(
            lengths in prop::collection::vec(0.0f64..10.0, 0..60),
            upper in -1.0f64..12.0,
        ) {
            let s = outlying_score(&chain(&lengths), upper);
            prop_assert!((0.0..=1.0).contains(&s.score));
            for &k in &s.outlier_edge_indices {
                prop_assert!(lengths[k] > upper);
            }
            let counted = lengths.iter().filter(|&&l| exceeds_fence(l, upper)).count();
            prop_assert_eq!(counted, s.outlier_edge_indices.len());
        }

        #[test]
        fn equal_lengths_never_outlying(len in 1e-6f64..5.0, n in 1usize..50, factor in 0.1f64..4.0) {
            prop_assert_eq!(score_tree(&chain(&vec![len; n]), factor).score, 0.0);
        }
    }
}
