//! Delaunay candidate edges and the Euclidean minimum spanning tree.
//!
//! The EMST is a subgraph of the Delaunay triangulation, so Kruskal over the
//! Delaunay edges gives the same tree as Kruskal over the complete graph.
//! Triangulation uses adaptive exact orientation and in-circle predicates.

use serde::Serialize;
use spade::{DelaunayTriangulation, Point2, Triangulation};
use thiserror::Error;

use crate::Point;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("candidate edges leave {components} components over {nodes} nodes")]
    Disconnected { nodes: usize, components: usize },
    #[error("edge ({0}, {1}) references a node outside the point set")]
    EdgeOutOfRange(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanningTree {
    pub node_count: usize,
    /// Edges in Kruskal acceptance order, i.e. by `(length, a, b)`.
    pub edges: Vec<TreeEdge>,
    pub total_length: f64,
}

impl SpanningTree {
    pub fn empty(node_count: usize) -> Self {
        SpanningTree {
            node_count,
            edges: Vec::new(),
            total_length: 0.0,
        }
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.length).collect()
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn complete_graph(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

const HILBERT_BITS: u32 = 16;
const HILBERT_MAX: u32 = (1 << HILBERT_BITS) - 1;

/// Position along a Hilbert curve over a `2^16 x 2^16` grid.
fn hilbert_index(mut x: u32, mut y: u32) -> u64 {
    let mut d = 0u64;
    let mut s = 1u32 << (HILBERT_BITS - 1);
    while s > 0 {
        let rx = u32::from(x & s > 0);
        let ry = u32::from(y & s > 0);
        d += u64::from(s) * u64::from(s) * u64::from((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = HILBERT_MAX - x;
                y = HILBERT_MAX - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s >>= 1;
    }
    d
}

/// Insertion order with spatially adjacent points next to each other, so each
/// point location walk starts near its target. Ties keep input order.
fn hilbert_order(points: &[Point]) -> Vec<usize> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for axis in 0..2 {
            lo[axis] = lo[axis].min(p[axis]);
            hi[axis] = hi[axis].max(p[axis]);
        }
    }
    let cells = f64::from(HILBERT_MAX);
    let cell = |v: f64, axis: usize| {
        let span = hi[axis] - lo[axis];
        if span > 0.0 && span.is_finite() {
            (((v - lo[axis]) / span).clamp(0.0, 1.0) * cells) as u32
        } else {
            0
        }
    };
    let mut order: Vec<(u64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (hilbert_index(cell(p[0], 0), cell(p[1], 1)), i))
        .collect();
    order.sort_unstable();
    order.into_iter().map(|(_, i)| i).collect()
}

/// Undirected Delaunay edges as `(i, j)` with `i < j`, sorted.
///
/// Fewer than three points, or input whose distinct positions are all
/// collinear, yields the complete graph instead. Coincident points are joined
/// to the first point at that position by a zero-length edge.
pub fn delaunay_edges(points: &[Point]) -> Vec<(usize, usize)> {
    let n = points.len();
    if n < 3 {
        return complete_graph(n);
    }
    let mut tri: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    // Triangulation vertex index -> first input index at that position.
    let mut owner: Vec<usize> = Vec::with_capacity(n);
    let mut coincident: Vec<(usize, usize)> = Vec::new();
    for i in hilbert_order(points) {
        let p = &points[i];
        let pos = spade::mitigate_underflow(Point2::new(p[0], p[1]));
        let handle = match tri.insert(pos) {
            Ok(h) => h,
            // Only non-finite or absurdly large coordinates fail; the plot is
            // normalized, so treat it as fully degenerate.
            Err(_) => return complete_graph(n),
        };
        if handle.index() == owner.len() {
            owner.push(i);
        } else {
            coincident.push((owner[handle.index()], i));
        }
    }
    if tri.num_inner_faces() == 0 {
        return complete_graph(n);
    }
    let mut edges: Vec<(usize, usize)> = tri
        .undirected_edges()
        .map(|e| {
            let [u, v] = e.vertices();
            let (a, b) = (owner[u.fix().index()], owner[v.fix().index()]);
            (a.min(b), a.max(b))
        })
        .chain(coincident.into_iter().map(|(a, b)| (a.min(b), a.max(b))))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Kruskal over the candidate edges. Ties on length are broken by `(a, b)`.
pub fn mst_from_edges(
    node_count: usize,
    candidates: &[(usize, usize)],
    points: &[Point],
) -> Result<SpanningTree, GeometryError> {
    let mut weighted: Vec<TreeEdge> = Vec::with_capacity(candidates.len());
    for &(i, j) in candidates {
        if i >= node_count || j >= node_count || i >= points.len() || j >= points.len() {
            return Err(GeometryError::EdgeOutOfRange(i, j));
        }
        if i == j {
            continue;
        }
        let (a, b) = (i.min(j), i.max(j));
        weighted.push(TreeEdge {
            a,
            b,
            length: distance(points[a], points[b]),
        });
    }
    weighted.sort_by(|x, y| {
        x.length
            .total_cmp(&y.length)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });

    let target = node_count.saturating_sub(1);
    let mut sets = DisjointSet::new(node_count);
    let mut edges = Vec::with_capacity(target);
    for e in weighted {
        if edges.len() == target {
            break;
        }
        if sets.union(e.a, e.b) {
            edges.push(e);
        }
    }
    if edges.len() != target {
        return Err(GeometryError::Disconnected {
            nodes: node_count,
            components: node_count - edges.len(),
        });
    }
    let total_length = edges.iter().map(|e| e.length).sum();
    Ok(SpanningTree {
        node_count,
        edges,
        total_length,
    })
}

/// EMST of a point set via its Delaunay edges.
pub fn emst(points: &[Point]) -> SpanningTree {
    let candidates = delaunay_edges(points);
    mst_from_edges(points.len(), &candidates, points)
        .expect("Delaunay edges connect every node")
}
