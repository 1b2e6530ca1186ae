//! Leader binning with an adaptive coverage radius.
//!
//! A point joins the first-founded bin whose leader lies within the coverage
//! radius, otherwise it founds a new bin. The radius is searched geometrically
//! (then by bisection once bracketed) until the bin count lands inside the
//! requested bracket.

use std::collections::HashMap;

use serde::Serialize;

use crate::ingest::NormalizedPlot;
use crate::Point;

/// Starting radius: 1/30 of the unit-square diagonal.
pub const INITIAL_RADIUS: f64 = std::f64::consts::SQRT_2 / 30.0;
/// Largest meaningful radius; one bin covers the whole unit square.
pub const MAX_RADIUS: f64 = std::f64::consts::SQRT_2;
pub const RADIUS_STEP: f64 = 1.5;
pub const MAX_SEARCH_ITERATIONS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin {
    /// Position of the founding point; membership is tested against it.
    pub leader: Point,
    /// Mean of member positions; this is the representative used for geometry.
    pub centroid: Point,
    /// Dataset instance indices, in assignment order.
    pub members: Vec<usize>,
    pub count: usize,
}

impl Bin {
    pub fn is_singleton(&self) -> bool {
        self.count == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchStep {
    pub radius: f64,
    pub bin_count: usize,
}

/// Why the radius search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchOutcome {
    /// Bin count landed inside the bracket.
    InRange,
    /// Fewer distinct positions than `min_bins`; each position is its own bin.
    Unreachable { distinct_points: usize },
    /// Iteration cap reached; the attempt closest to the bracket was kept.
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Binning {
    pub radius: f64,
    pub bins: Vec<Bin>,
    pub search_trace: Vec<SearchStep>,
    pub outcome: SearchOutcome,
}

impl Binning {
    pub fn centroids(&self) -> Vec<Point> {
        self.bins.iter().map(|b| b.centroid).collect()
    }

    pub fn singleton_count(&self) -> usize {
        self.bins.iter().filter(|b| b.is_singleton()).count()
    }

    /// Index of the bin holding the given dataset instance.
    pub fn bin_of(&self, instance: usize) -> Option<usize> {
        self.bins.iter().position(|b| b.members.contains(&instance))
    }
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Uniform grid over leader positions, used to find the first leader within
/// `radius` without scanning every bin.
struct LeaderGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl LeaderGrid {
    fn new(radius: f64) -> Self {
        // Radius 0 still needs a finite cell; coincident points share a cell.
        let cell = if radius > 0.0 { radius } else { 1e-9 };
        LeaderGrid {
            cell,
            cells: HashMap::new(),
        }
    }

    fn key(&self, p: Point) -> (i64, i64) {
        ((p[0] / self.cell).floor() as i64, (p[1] / self.cell).floor() as i64)
    }

    fn insert(&mut self, p: Point, bin: usize) {
        self.cells.entry(self.key(p)).or_default().push(bin);
    }

    /// Lowest bin index whose leader is within `radius` of `p`.
    fn first_within(&self, p: Point, radius: f64, bins: &[Bin]) -> Option<usize> {
        let (cx, cy) = self.key(p);
        let mut best: Option<usize> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(candidates) = self.cells.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                // Bin indices within a cell are increasing, stop at the first hit.
                for &b in candidates {
                    if best.is_some_and(|cur| b >= cur) {
                        break;
                    }
                    if distance(bins[b].leader, p) <= radius {
                        best = Some(b);
                        break;
                    }
                }
            }
        }
        best
    }
}

/// One leader pass at a fixed radius, in plot order.
pub fn assign_leaders(plot: &NormalizedPlot, radius: f64) -> Vec<Bin> {
    let mut bins: Vec<Bin> = Vec::new();
    let mut sums: Vec<[f64; 2]> = Vec::new();
    let mut grid = LeaderGrid::new(radius);
    for pp in &plot.points {
        let p = pp.position;
        match grid.first_within(p, radius, &bins) {
            Some(b) => {
                bins[b].members.push(pp.instance);
                bins[b].count += 1;
                sums[b][0] += p[0];
                sums[b][1] += p[1];
            }
            None => {
                grid.insert(p, bins.len());
                bins.push(Bin {
                    leader: p,
                    centroid: p,
                    members: vec![pp.instance],
                    count: 1,
                });
                sums.push(p);
            }
        }
    }
    for (bin, sum) in bins.iter_mut().zip(sums) {
        if bin.count > 1 {
            let n = bin.count as f64;
            bin.centroid = [sum[0] / n, sum[1] / n];
        }
    }
    bins
}

/// Distinct positions and the smallest gap between two of them, when there
/// are few enough to compare pairwise.
fn small_distinct_set(plot: &NormalizedPlot, limit: usize) -> Option<(usize, f64)> {
    let mut distinct: Vec<Point> = Vec::new();
    let mut seen: HashMap<[u64; 2], ()> = HashMap::new();
    for pp in &plot.points {
        let key = [pp.position[0].to_bits(), pp.position[1].to_bits()];
        if seen.insert(key, ()).is_none() {
            distinct.push(pp.position);
            if distinct.len() >= limit {
                return None;
            }
        }
    }
    let mut min_gap = f64::INFINITY;
    for (i, a) in distinct.iter().enumerate() {
        for b in &distinct[i + 1..] {
            min_gap = min_gap.min(distance(*a, *b));
        }
    }
    Some((distinct.len(), min_gap))
}

fn bracket_distance(count: usize, min_bins: usize, max_bins: usize) -> usize {
    if count < min_bins {
        min_bins - count
    } else {
        count.saturating_sub(max_bins)
    }
}

/// Bin a plot into `[min_bins, max_bins]` leader bins.
///
/// Always returns a partition of the plot's points. When the plot has fewer
/// distinct positions than `min_bins`, every distinct position becomes its own
/// bin (coincident points share one).
pub fn leader_bin(plot: &NormalizedPlot, min_bins: usize, max_bins: usize) -> Binning {
    assert!(!plot.is_empty(), "cannot bin an empty plot");
    assert!(1 <= min_bins && min_bins <= max_bins, "invalid bin bracket");

    if let Some((distinct, min_gap)) = small_distinct_set(plot, min_bins) {
        // Any radius below the smallest gap separates every distinct position.
        let radius = if min_gap.is_finite() {
            (min_gap / 2.0).min(INITIAL_RADIUS)
        } else {
            INITIAL_RADIUS
        };
        let bins = assign_leaders(plot, radius);
        return Binning {
            radius,
            search_trace: vec![SearchStep {
                radius,
                bin_count: bins.len(),
            }],
            bins,
            outcome: SearchOutcome::Unreachable {
                distinct_points: distinct,
            },
        };
    }

    let mut radius = INITIAL_RADIUS;
    let mut trace = Vec::new();
    // Largest radius known to give too many bins, smallest known to give too few.
    let mut too_many: Option<f64> = None;
    let mut too_few: Option<f64> = None;
    let mut best: Option<(usize, f64, Vec<Bin>)> = None;

    for _ in 0..MAX_SEARCH_ITERATIONS {
        let bins = assign_leaders(plot, radius);
        let count = bins.len();
        trace.push(SearchStep {
            radius,
            bin_count: count,
        });
        if (min_bins..=max_bins).contains(&count) {
            return Binning {
                radius,
                bins,
                search_trace: trace,
                outcome: SearchOutcome::InRange,
            };
        }
        let miss = bracket_distance(count, min_bins, max_bins);
        if best.as_ref().is_none_or(|(m, _, _)| miss < *m) {
            best = Some((miss, radius, bins));
        }
        if count > max_bins {
            too_many = Some(too_many.map_or(radius, |r: f64| r.max(radius)));
        } else {
            too_few = Some(too_few.map_or(radius, |r: f64| r.min(radius)));
        }
        radius = match (too_many, too_few) {
            (Some(lo), Some(hi)) => 0.5 * (lo + hi),
            (Some(_), None) => (radius * RADIUS_STEP).min(MAX_RADIUS),
            (None, Some(_)) => radius / RADIUS_STEP,
            (None, None) => unreachable!(),
        };
    }

    let (_, radius, bins) = best.expect("at least one attempt");
    Binning {
        radius,
        bins,
        search_trace: trace,
        outcome: SearchOutcome::IterationCap,
    }
}

/// Instance indices of all singleton bins, in bin order.
pub fn singleton_ids(binning: &Binning) -> Vec<usize> {
    binning
        .bins
        .iter()
        .filter(|b| b.is_singleton())
        .map(|b| b.members[0])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{PlotPoint, Scale};
    use proptest::prelude::*;

    fn plot(points: &[Point]) -> NormalizedPlot {
        NormalizedPlot {
            timestep: 0,
            points: points
                .iter()
                .enumerate()
                .map(|(instance, &position)| PlotPoint { instance, position })
                .collect(),
            scale: Scale {
                x_min: 0.0,
                x_max: 1.0,
                y_min: 0.0,
                y_max: 1.0,
            },
        }
    }

    fn check_partition(p: &NormalizedPlot, b: &Binning) {
        let total: usize = b.bins.iter().map(|bin| bin.count).sum();
        assert_eq!(total, p.len());
        let mut seen: Vec<usize> = b.bins.iter().flat_map(|bin| bin.members.clone()).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), p.len());
        for bin in &b.bins {
            assert_eq!(bin.count, bin.members.len());
            for &m in &bin.members {
                let pos = p.points[m].position;
                assert!(distance(pos, bin.leader) <= b.radius + 1e-12);
            }
            if bin.is_singleton() {
                assert_eq!(bin.centroid, bin.leader);
                assert_eq!(bin.leader, p.points[bin.members[0]].position);
            }
        }
        assert!(b.radius > 0.0 && b.radius <= MAX_RADIUS);
    }

    fn grid(side: usize) -> Vec<Point> {
        let step = 1.0 / (side - 1) as f64;
        (0..side * side)
            .map(|k| [(k % side) as f64 * step, (k / side) as f64 * step])
            .collect()
    }

    #[test]
    fn few_points_become_singletons() {
        let pts: Vec<Point> = (0..10).map(|i| [i as f64 / 9.0, 0.3]).collect();
        let p = plot(&pts);
        let b = leader_bin(&p, 50, 250);
        assert_eq!(b.bins.len(), 10);
        assert!(b.bins.iter().all(Bin::is_singleton));
        assert_eq!(b.outcome, SearchOutcome::Unreachable { distinct_points: 10 });
        check_partition(&p, &b);
    }

    #[test]
    fn identical_points_share_a_bin() {
        let p = plot(&[[0.25, 0.75], [0.25, 0.75]]);
        let b = leader_bin(&p, 50, 250);
        assert_eq!(b.bins.len(), 1);
        assert_eq!(b.bins[0].count, 2);
        assert_eq!(b.bins[0].centroid, [0.25, 0.75]);
        check_partition(&p, &b);
    }

    #[test]
    fn fine_grid_is_driven_into_bracket() {
        // 18 x 18 = 324 points; spacing ~0.059 exceeds the initial radius, so the
        // first attempt yields 324 bins and the search has to grow the radius.
        let p = plot(&grid(18));
        let b = leader_bin(&p, 50, 250);
        let n = b.bins.len();
        assert!((50..=250).contains(&n), "bin count {n}");
        assert_eq!(b.outcome, SearchOutcome::InRange);
        assert!(b.search_trace.len() >= 2);
        assert_eq!(b.search_trace[0].bin_count, 324);
        assert_eq!(b.search_trace.last().unwrap().bin_count, n);
        check_partition(&p, &b);
    }

    #[test]
    fn trace_is_monotone_on_grid_and_clusters() {
        for pts in [grid(18), grid(40), crate::synthetic::mixture_points(7, 2000)] {
            let p = plot(&pts);
            let b = leader_bin(&p, 50, 250);
            let mut trace = b.search_trace.clone();
            trace.sort_by(|a, b| a.radius.total_cmp(&b.radius));
            for w in trace.windows(2) {
                assert!(w[0].bin_count >= w[1].bin_count, "{trace:?}");
            }
        }
    }

    #[test]
    fn leader_count_is_not_monotone_in_general() {
        // A radius-1 leader at the origin swallows (1, 0), leaving three
        // mutually distant points that each found a bin. At radius 0.95 they all
        // join (1, 0) instead.
        let p = plot(&[[0.0, 0.0], [1.0, 0.0], [1.0, 0.9], [1.9, 0.0], [1.0, -0.9]]);
        assert_eq!(assign_leaders(&p, 1.0).len(), 4);
        assert_eq!(assign_leaders(&p, 0.95).len(), 2);
    }

    #[test]
    fn first_founded_leader_wins_ties() {
        let p = plot(&[[0.0, 0.0], [0.2, 0.0], [0.1, 0.0]]);
        let bins = assign_leaders(&p, 0.15);
        assert_eq!(bins.len(), 2);
        assert_eq!(bins[0].members, vec![0, 2]);
    }

    #[test]
    fn singleton_ids_examples() {
        let pts: Vec<Point> = (0..5).map(|i| [0.1 * i as f64, 0.0]).collect();
        let b = leader_bin(&plot(&pts), 3, 10);
        assert_eq!(singleton_ids(&b), vec![0, 1, 2, 3, 4]);

        let p = plot(&[[0.5, 0.5]; 5]);
        let b = leader_bin(&p, 1, 10);
        assert_eq!(b.bins.len(), 1);
        assert!(singleton_ids(&b).is_empty());

        let p = plot(&crate::synthetic::mixture_points(3, 263));
        let b = leader_bin(&p, 50, 250);
        let recount = b.bins.iter().filter(|bin| bin.members.len() == 1).count();
        assert_eq!(singleton_ids(&b).len(), recount);
        assert_eq!(b.singleton_count(), recount);
    }

    proptest! {
        #[test]
        fn partition_and_coverage(
            raw in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..400),
            min_bins in 1usize..60,
            extra in 0usize..200,
        ) {
            let pts: Vec<Point> = raw.iter().map(|&(x, y)| [x, y]).collect();
            let p = plot(&pts);
            let b = leader_bin(&p, min_bins, min_bins + extra);
            check_partition(&p, &b);
            if b.outcome == SearchOutcome::InRange {
                prop_assert!((min_bins..=min_bins + extra).contains(&b.bins.len()));
            }
            if p.len() > 250 && min_bins == 50 && extra == 200 {
                prop_assert!((50..=250).contains(&b.bins.len()));
            }
        }
    }
}
