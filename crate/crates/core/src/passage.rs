//! Exact passage times on cylinder graphs.
//!
//! Every functional is a single Dijkstra search over the implicit cylinder
//! adjacency with a dense distance array. Among equal tentative distances the
//! predecessor with the smallest edge id wins, as long as the vertex has not
//! been settled, so geodesics are a deterministic function of the weights.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BaseGraph, CylinderGraph, EdgeId, GraphError, VertexId};
use crate::weights::{sample_weights, RngStream, WeightConfig, WeightDistribution};

const NO_EDGE: EdgeId = EdgeId::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum PassageError {
    #[error("no path between the requested vertex sets")]
    Disconnected,
    #[error("columns [{a}, {b}] are not an increasing range inside [{first}, {last}]")]
    Span { a: i64, b: i64, first: i64, last: i64 },
    #[error("strip window margin {needed} exceeds cap {cap} (last geodesic still touched the window edge)")]
    MarginCap { needed: u32, cap: u32 },
    #[error("weight vector does not match the graph ({0} weights for {1} edges)")]
    WeightMismatch(usize, u32),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    SideToSide,
    CylinderPoint,
    StripPoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PassageResult {
    pub variant: Variant,
    pub value: f64,
    /// Edge ids from source to target.
    pub geodesic: Vec<EdgeId>,
    pub pi: usize,
    /// Final margin of the strip window, strip variant only.
    pub window_used: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VertexSet {
    Column(i64),
    Vertices(Vec<VertexId>),
}

impl VertexSet {
    #[inline]
    fn contains(&self, graph: &CylinderGraph, x: VertexId) -> bool {
        match self {
            VertexSet::Column(c) => graph.column_of(x) == *c,
            VertexSet::Vertices(vs) => vs.contains(&x),
        }
    }

    fn members(&self, graph: &CylinderGraph) -> Vec<VertexId> {
        match self {
            VertexSet::Column(c) => {
                if *c < graph.first_column() || *c > graph.last_column() {
                    return Vec::new();
                }
                (0..graph.base().vertex_count())
                    .map(|u| graph.vertex_id(*c, u))
                    .collect()
            }
            VertexSet::Vertices(vs) => vs.clone(),
        }
    }
}

/// A shortest-path request.
#[derive(Clone, Debug)]
pub struct Search<'a> {
    pub sources: &'a VertexSet,
    pub targets: &'a VertexSet,
    pub forbidden: &'a [EdgeId],
    /// Inclusive column range the path must stay in.
    pub columns: Option<(i64, i64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Route {
    pub value: f64,
    pub geodesic: Vec<EdgeId>,
    pub source: VertexId,
    pub target: VertexId,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    vertex: VertexId,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, vertex)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reusable scratch for repeated searches.
#[derive(Default)]
pub struct PassageEngine {
    dist: Vec<f64>,
    pred: Vec<EdgeId>,
    settled: Vec<bool>,
    heap: BinaryHeap<Entry>,
}

impl PassageEngine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shortest_path(
        &mut self,
        graph: &CylinderGraph,
        weights: &WeightConfig,
        search: &Search<'_>,
    ) -> Result<Route, PassageError> {
        if weights.len() != graph.edge_count() as usize {
            return Err(PassageError::WeightMismatch(weights.len(), graph.edge_count()));
        }
        let w = &weights.weights;
        let n = graph.vertex_count() as usize;
        self.dist.clear();
        self.dist.resize(n, f64::INFINITY);
        self.pred.clear();
        self.pred.resize(n, NO_EDGE);
        self.settled.clear();
        self.settled.resize(n, false);
        self.heap.clear();

        let (lo, hi) = search
            .columns
            .unwrap_or((graph.first_column(), graph.last_column()));
        let inside = |x: VertexId| {
            let c = graph.column_of(x);
            c >= lo && c <= hi
        };

        for s in search.sources.members(graph) {
            if inside(s) && self.dist[s as usize] != 0.0 {
                self.dist[s as usize] = 0.0;
                self.heap.push(Entry { dist: 0.0, vertex: s });
            }
        }

        let mut reached = None;
        while let Some(Entry { dist: d, vertex: x }) = self.heap.pop() {
            if self.settled[x as usize] || d > self.dist[x as usize] {
                continue;
            }
            self.settled[x as usize] = true;
            if search.targets.contains(graph, x) {
                reached = Some(x);
                break;
            }
            let dist = &mut self.dist;
            let pred = &mut self.pred;
            let settled = &self.settled;
            let heap = &mut self.heap;
            graph.for_each_neighbor(x, |y, e| {
                if settled[y as usize] || !inside(y) || search.forbidden.contains(&e) {
                    return;
                }
                let nd = d + w[e as usize];
                let cur = dist[y as usize];
                if nd < cur {
                    dist[y as usize] = nd;
                    pred[y as usize] = e;
                    heap.push(Entry { dist: nd, vertex: y });
                } else if nd == cur && e < pred[y as usize] {
                    pred[y as usize] = e;
                }
            });
        }

        let target = reached.ok_or(PassageError::Disconnected)?;
        let mut geodesic = Vec::new();
        let mut x = target;
        while self.pred[x as usize] != NO_EDGE {
            let e = self.pred[x as usize];
            geodesic.push(e);
            let (a, b) = graph.endpoints(e);
            x = if a == x { b } else { a };
        }
        geodesic.reverse();
        Ok(Route {
            value: self.dist[target as usize],
            geodesic,
            source: x,
            target,
        })
    }

    /// `T_{a,b}`: side-to-side time across columns `a < b`, inside `[a,b]`.
    pub fn side_to_side(
        &mut self,
        graph: &CylinderGraph,
        weights: &WeightConfig,
        a: i64,
        b: i64,
    ) -> Result<PassageResult, PassageError> {
        check_span(graph, a, b)?;
        let route = self.shortest_path(
            graph,
            weights,
            &Search {
                sources: &VertexSet::Column(a),
                targets: &VertexSet::Column(b),
                forbidden: &[],
                columns: Some((a, b)),
            },
        )?;
        Ok(result(Variant::SideToSide, route, None))
    }

    /// Point-to-point time from `(a, o)` to `(b, o)` inside `[a, b]`.
    pub fn cylinder_point_between(
        &mut self,
        graph: &CylinderGraph,
        weights: &WeightConfig,
        a: i64,
        b: i64,
    ) -> Result<PassageResult, PassageError> {
        check_span(graph, a, b)?;
        let o = graph.base().origin();
        let route = self.shortest_path(
            graph,
            weights,
            &Search {
                sources: &VertexSet::Vertices(vec![graph.vertex_id(a, o)]),
                targets: &VertexSet::Vertices(vec![graph.vertex_id(b, o)]),
                forbidden: &[],
                columns: Some((a, b)),
            },
        )?;
        Ok(result(Variant::CylinderPoint, route, None))
    }

    /// `t_n`: from the origin in the first column to the origin in the last.
    pub fn cylinder_point(&mut self, graph: &CylinderGraph, weights: &WeightConfig) -> Result<PassageResult, PassageError> {
        self.cylinder_point_between(graph, weights, graph.first_column(), graph.last_column())
    }

    /// `(0, o)` to `(n, o)` anywhere in the window graph.
    pub fn window_point(
        &mut self,
        graph: &CylinderGraph,
        weights: &WeightConfig,
        n: i64,
    ) -> Result<PassageResult, PassageError> {
        check_span(graph, 0, n)?;
        let o = graph.base().origin();
        let route = self.shortest_path(
            graph,
            weights,
            &Search {
                sources: &VertexSet::Vertices(vec![graph.vertex_id(0, o)]),
                targets: &VertexSet::Vertices(vec![graph.vertex_id(n, o)]),
                forbidden: &[],
                columns: None,
            },
        )?;
        Ok(result(Variant::StripPoint, route, None))
    }

    /// `a_n` on an adaptively enlarged window around the core cylinder `[0, n]`.
    ///
    /// The core weights are kept; columns added in round `r` are drawn from
    /// `stream.substream(r)`.
    pub fn strip_point_from_core(
        &mut self,
        core_graph: &CylinderGraph,
        core_weights: &WeightConfig,
        dist: &WeightDistribution,
        stream: &RngStream,
        options: &StripOptions,
    ) -> Result<(PassageResult, StripWindow), PassageError> {
        let n = core_graph.last_column();
        let cap = options.margin_cap.unwrap_or(8 * n as u32);
        let mut window = StripWindow::from_core(core_graph, core_weights)?;
        let mut margin = options.initial_margin;
        if margin > cap {
            return Err(PassageError::MarginCap { needed: margin, cap });
        }
        let mut round = 0u64;
        loop {
            if margin > window.margin() {
                window.extend_to(margin, dist, &mut stream.substream(round))?;
                round += 1;
            }
            let graph = window.graph()?;
            let weights = window.weights(&graph);
            let mut res = self.window_point(&graph, &weights, n)?;
            let touches = res.geodesic.iter().any(|&e| {
                let (x, y) = graph.endpoints(e);
                [x, y].iter().any(|&v| {
                    let c = graph.column_of(v);
                    c == graph.first_column() || c == graph.last_column()
                })
            }) || (margin == 0);
            if !touches {
                res.window_used = Some(margin);
                return Ok((res, window));
            }
            let next = (2 * margin).max(1);
            if next > cap {
                return Err(PassageError::MarginCap { needed: next, cap });
            }
            margin = next;
        }
    }
}

fn check_span(graph: &CylinderGraph, a: i64, b: i64) -> Result<(), PassageError> {
    if a < b && a >= graph.first_column() && b <= graph.last_column() {
        Ok(())
    } else {
        Err(PassageError::Span {
            a,
            b,
            first: graph.first_column(),
            last: graph.last_column(),
        })
    }
}

fn result(variant: Variant, route: Route, window_used: Option<u32>) -> PassageResult {
    PassageResult {
        variant,
        value: route.value,
        pi: route.geodesic.len(),
        geodesic: route.geodesic,
        window_used,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripOptions {
    pub initial_margin: u32,
    /// Largest margin allowed; `None` means `8 n`.
    pub margin_cap: Option<u32>,
}

impl Default for StripOptions {
    fn default() -> Self {
        Self {
            initial_margin: 2,
            margin_cap: None,
        }
    }
}

/// Weights of a finite window `[-margin, n + margin] x G` of the strip,
/// stored per column so the window can grow without touching old weights.
#[derive(Clone, Debug)]
pub struct StripWindow {
    base: Arc<BaseGraph>,
    n: i64,
    lo: i64,
    vertical: VecDeque<Vec<f64>>,
    // horizontal[i] joins column lo+i to lo+i+1
    horizontal: VecDeque<Vec<f64>>,
}

impl StripWindow {
    pub fn from_core(core: &CylinderGraph, weights: &WeightConfig) -> Result<Self, PassageError> {
        if core.first_column() != 0 {
            return Err(PassageError::Span {
                a: 0,
                b: core.last_column(),
                first: core.first_column(),
                last: core.last_column(),
            });
        }
        if weights.len() != core.edge_count() as usize {
            return Err(PassageError::WeightMismatch(weights.len(), core.edge_count()));
        }
        let k = core.base().edge_count() as usize;
        let v = core.base().vertex_count() as usize;
        let mut vertical = VecDeque::new();
        let mut horizontal = VecDeque::new();
        let mut it = weights.weights.chunks(k + v);
        for c in 0..core.column_count() as i64 {
            let chunk = it.next().unwrap_or(&[]);
            vertical.push_back(chunk[..k].to_vec());
            if c < core.last_column() {
                horizontal.push_back(chunk[k..k + v].to_vec());
            }
        }
        Ok(Self {
            base: core.base_arc().clone(),
            n: core.last_column(),
            lo: 0,
            vertical,
            horizontal,
        })
    }

    pub fn margin(&self) -> u32 {
        (-self.lo) as u32
    }

    fn hi(&self) -> i64 {
        self.lo + self.vertical.len() as i64 - 1
    }

    /// Grows the window to `margin`, drawing new edges in canonical order:
    /// new left columns ascending, then the right extension.
    pub fn extend_to(&mut self, margin: u32, dist: &WeightDistribution, rng: &mut RngStream) -> Result<(), PassageError> {
        let new_lo = -(margin as i64);
        let new_hi = self.n + margin as i64;
        if new_lo >= self.lo {
            return Ok(());
        }
        // budget check before drawing anything
        CylinderGraph::new(new_lo, new_hi, self.base.clone())?;
        let k = self.base.edge_count() as usize;
        let v = self.base.vertex_count() as usize;
        let mut draw = |count: usize| -> Vec<f64> { (0..count).map(|_| dist.sample(rng)).collect() };

        let mut left_v = Vec::new();
        let mut left_h = Vec::new();
        for _ in new_lo..self.lo {
            left_v.push(draw(k));
            left_h.push(draw(v));
        }
        for (vv, hh) in left_v.into_iter().zip(left_h).rev() {
            self.vertical.push_front(vv);
            self.horizontal.push_front(hh);
        }
        self.lo = new_lo;

        let old_hi = self.hi();
        for _ in old_hi..new_hi {
            self.horizontal.push_back(draw(v));
            self.vertical.push_back(draw(k));
        }
        Ok(())
    }

    pub fn graph(&self) -> Result<CylinderGraph, PassageError> {
        Ok(CylinderGraph::new(self.lo, self.hi(), self.base.clone())?)
    }

    pub fn weights(&self, graph: &CylinderGraph) -> WeightConfig {
        let mut out = Vec::with_capacity(graph.edge_count() as usize);
        for (i, col) in self.vertical.iter().enumerate() {
            out.extend_from_slice(col);
            if let Some(h) = self.horizontal.get(i) {
                out.extend_from_slice(h);
            }
        }
        WeightConfig::from_values(graph, out).expect("window weights are nonnegative and complete")
    }
}

pub fn shortest_path(
    graph: &CylinderGraph,
    weights: &WeightConfig,
    sources: &VertexSet,
    targets: &VertexSet,
    forbidden: &[EdgeId],
) -> Result<Route, PassageError> {
    PassageEngine::new().shortest_path(
        graph,
        weights,
        &Search {
            sources,
            targets,
            forbidden,
            columns: None,
        },
    )
}

pub fn side_to_side_time(graph: &CylinderGraph, weights: &WeightConfig, a: i64, b: i64) -> Result<PassageResult, PassageError> {
    PassageEngine::new().side_to_side(graph, weights, a, b)
}

pub fn cylinder_point_time(graph: &CylinderGraph, weights: &WeightConfig) -> Result<PassageResult, PassageError> {
    PassageEngine::new().cylinder_point(graph, weights)
}

/// `a_n(h)` on `Z x [-h,h]^{d-1}`. The core `[0, n]` weights are the first
/// draws of `stream`, exactly as [`sample_weights`] would produce them.
pub fn strip_point_time(
    n: u32,
    h: u32,
    d: u32,
    dist: &WeightDistribution,
    stream: &mut RngStream,
    options: &StripOptions,
) -> Result<PassageResult, PassageError> {
    let core = crate::graph::build_box_cylinder(n, h, d, 0)?;
    let ext = stream.substream(u64::MAX);
    let weights = sample_weights(&core, dist, stream);
    let (res, _) = PassageEngine::new().strip_point_from_core(&core, &weights, dist, &ext, options)?;
    Ok(res)
}

/// Endpoint constraints of one passage functional on a given graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PassageQuery {
    SideToSide { a: i64, b: i64 },
    CylinderPoint { a: i64, b: i64 },
    /// From `(from, o)` to `(to, o)` anywhere in the graph.
    StripPoint { from: i64, to: i64 },
}

impl PassageQuery {
    fn parts(&self, graph: &CylinderGraph) -> (VertexSet, VertexSet, Option<(i64, i64)>) {
        let o = graph.base().origin();
        match *self {
            PassageQuery::SideToSide { a, b } => (VertexSet::Column(a), VertexSet::Column(b), Some((a, b))),
            PassageQuery::CylinderPoint { a, b } => (
                VertexSet::Vertices(vec![graph.vertex_id(a, o)]),
                VertexSet::Vertices(vec![graph.vertex_id(b, o)]),
                Some((a, b)),
            ),
            PassageQuery::StripPoint { from, to } => (
                VertexSet::Vertices(vec![graph.vertex_id(from, o)]),
                VertexSet::Vertices(vec![graph.vertex_id(to, o)]),
                None,
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssentialEdgeReport {
    /// `L`: number of edges on every geodesic.
    pub essential: usize,
    pub candidates_tested: usize,
    pub edges: Vec<EdgeId>,
}

impl PassageEngine {
    /// Counts edges whose removal strictly increases the passage value.
    /// Only edges of one geodesic are candidates.
    pub fn essential_edges(
        &mut self,
        graph: &CylinderGraph,
        weights: &WeightConfig,
        query: PassageQuery,
    ) -> Result<EssentialEdgeReport, PassageError> {
        let (sources, targets, columns) = query.parts(graph);
        let base = self.shortest_path(
            graph,
            weights,
            &Search {
                sources: &sources,
                targets: &targets,
                forbidden: &[],
                columns,
            },
        )?;
        let mut edges = Vec::new();
        for &e in &base.geodesic {
            let detour = self.shortest_path(
                graph,
                weights,
                &Search {
                    sources: &sources,
                    targets: &targets,
                    forbidden: &[e],
                    columns,
                },
            );
            match detour {
                Ok(r) if r.value <= base.value => {}
                Ok(_) | Err(PassageError::Disconnected) => edges.push(e),
                Err(other) => return Err(other),
            }
        }
        Ok(EssentialEdgeReport {
            essential: edges.len(),
            candidates_tested: base.geodesic.len(),
            edges,
        })
    }
}

pub fn essential_edge_count(
    graph: &CylinderGraph,
    weights: &WeightConfig,
    query: PassageQuery,
) -> Result<EssentialEdgeReport, PassageError> {
    PassageEngine::new().essential_edges(graph, weights, query)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_box_cylinder, build_product_cylinder, EdgeKind, GraphSpec};
    use crate::weights::derive_stream;

    /// The unit square: base = single edge {0,1}, n = 1.
    /// Canonical order: [v(0), h(0,0), h(0,1), v(1)] =
    /// [left vertical c, bottom a, top b, right vertical e].
    fn square() -> (CylinderGraph, WeightConfig) {
        let g = build_product_cylinder(1, &GraphSpec::explicit(2, vec![(0, 1)], 0)).unwrap();
        let w = WeightConfig::from_values(&g, vec![5.0, 3.0, 1.0, 2.0]).unwrap();
        (g, w)
    }

    #[test]
    fn square_layout() {
        let (g, _) = square();
        assert!(matches!(g.edge_kind(0), EdgeKind::Vertical { column: 0, .. }));
        assert!(matches!(g.edge_kind(1), EdgeKind::Horizontal { column: 0, vertex: 0 }));
        assert!(matches!(g.edge_kind(2), EdgeKind::Horizontal { column: 0, vertex: 1 }));
        assert!(matches!(g.edge_kind(3), EdgeKind::Vertical { column: 1, .. }));
    }

    #[test]
    fn square_shortest_path() {
        let (g, w) = square();
        let r = shortest_path(
            &g,
            &w,
            &VertexSet::Vertices(vec![g.vertex_id(0, 0)]),
            &VertexSet::Vertices(vec![g.vertex_id(1, 0)]),
            &[],
        )
        .unwrap();
        assert_eq!(r.value, 3.0);
        assert_eq!(r.geodesic, vec![1]);
    }

    #[test]
    fn square_functionals() {
        let (g, w) = square();
        let t = side_to_side_time(&g, &w, 0, 1).unwrap();
        assert_eq!(t.value, 1.0);
        assert_eq!(t.geodesic, vec![2]);
        let c = cylinder_point_time(&g, &w).unwrap();
        assert_eq!(c.value, 3.0);
        assert_eq!(c.pi, 1);
        let ess = essential_edge_count(&g, &w, PassageQuery::CylinderPoint { a: 0, b: 1 }).unwrap();
        assert_eq!(ess.essential, 1);
        assert_eq!(ess.edges, vec![1]);
    }

    #[test]
    fn straight_path_under_unit_weights() {
        let g = build_box_cylinder(6, 2, 2, 0).unwrap();
        let w = WeightConfig::from_values(&g, vec![1.0; g.edge_count() as usize]).unwrap();
        let r = cylinder_point_time(&g, &w).unwrap();
        assert_eq!(r.value, 6.0);
        assert_eq!(r.pi, 6);
        assert!(r
            .geodesic
            .iter()
            .all(|&e| matches!(g.edge_kind(e), EdgeKind::Horizontal { vertex, .. } if vertex == g.base().origin())));
    }

    #[test]
    fn forbidding_a_bridge_disconnects() {
        let g = build_box_cylinder(3, 0, 2, 0).unwrap();
        let w = WeightConfig::from_values(&g, vec![1.0; 3]).unwrap();
        let err = shortest_path(&g, &w, &VertexSet::Column(0), &VertexSet::Column(3), &[1]).unwrap_err();
        assert_eq!(err, PassageError::Disconnected);
    }

    #[test]
    fn deterministic_side_to_side() {
        let g = build_box_cylinder(5, 2, 3, 0).unwrap();
        let w = WeightConfig::from_values(&g, vec![2.0; g.edge_count() as usize]).unwrap();
        assert_eq!(side_to_side_time(&g, &w, 0, 5).unwrap().value, 10.0);
        assert_eq!(cylinder_point_time(&g, &w).unwrap().value, 10.0);
    }

    #[test]
    fn side_to_side_ignores_boundary_columns() {
        let g = build_box_cylinder(6, 2, 2, 0).unwrap();
        let dist = WeightDistribution::exponential(1.0);
        let mut w = sample_weights(&g, &dist, &mut derive_stream(3, 0));
        let before = side_to_side_time(&g, &w, 0, 6).unwrap();
        let mut s = derive_stream(3, 1);
        for e in 0..g.edge_count() {
            if let EdgeKind::Vertical { column, .. } = g.edge_kind(e) {
                if column == 0 || column == 6 {
                    w.weights[e as usize] = dist.sample(&mut s) * 10.0;
                }
            }
        }
        assert_eq!(side_to_side_time(&g, &w, 0, 6).unwrap().value, before.value);
    }

    #[test]
    fn span_errors() {
        let (g, w) = square();
        assert!(matches!(side_to_side_time(&g, &w, 1, 1), Err(PassageError::Span { .. })));
        assert!(matches!(side_to_side_time(&g, &w, 0, 2), Err(PassageError::Span { .. })));
    }

    #[test]
    fn essential_edges_on_paths_and_ties() {
        let g = build_box_cylinder(4, 0, 2, 0).unwrap();
        let w = WeightConfig::from_values(&g, vec![0.5; 4]).unwrap();
        let r = essential_edge_count(&g, &w, PassageQuery::CylinderPoint { a: 0, b: 4 }).unwrap();
        assert_eq!(r.essential, 4);

        // two disjoint routes of equal weight around a square
        let sq = build_product_cylinder(1, &GraphSpec::explicit(2, vec![(0, 1)], 0)).unwrap();
        let w = WeightConfig::from_values(&sq, vec![1.0, 3.0, 1.0, 1.0]).unwrap();
        let r = essential_edge_count(&sq, &w, PassageQuery::CylinderPoint { a: 0, b: 1 }).unwrap();
        assert_eq!(r.essential, 0);
        assert_eq!(r.candidates_tested, 1);
    }

    #[test]
    fn strip_deterministic_and_path() {
        let dist = WeightDistribution::deterministic(1.5);
        let r = strip_point_time(10, 2, 2, &dist, &mut derive_stream(1, 0), &StripOptions::default()).unwrap();
        assert_eq!(r.value, 15.0);
        assert_eq!(r.window_used, Some(2));

        let dist = WeightDistribution::exponential(1.0);
        let mut s = derive_stream(4, 4);
        let core = build_box_cylinder(7, 0, 2, 0).unwrap();
        let w = sample_weights(&core, &dist, &mut s.clone());
        let r = strip_point_time(7, 0, 2, &dist, &mut s, &StripOptions { initial_margin: 0, margin_cap: None }).unwrap();
        let straight: f64 = w.weights.iter().fold(0.0, |acc, x| acc + x);
        assert_eq!(r.value, straight);
        assert_eq!(r.window_used, Some(1));
    }

    #[test]
    fn strip_margin_cap() {
        // a zero margin always touches the window edge, so growth is forced
        let dist = WeightDistribution::exponential(1.0);
        let err = strip_point_time(3, 1, 2, &dist, &mut derive_stream(1, 1), &StripOptions { initial_margin: 0, margin_cap: Some(0) })
            .unwrap_err();
        assert_eq!(err, PassageError::MarginCap { needed: 1, cap: 0 });
    }

    #[test]
    fn window_growth_keeps_old_weights() {
        let dist = WeightDistribution::exponential(1.0);
        let core = build_box_cylinder(5, 1, 2, 0).unwrap();
        let w = sample_weights(&core, &dist, &mut derive_stream(8, 0));
        let mut win = StripWindow::from_core(&core, &w).unwrap();
        win.extend_to(2, &dist, &mut derive_stream(8, 1)).unwrap();
        let g2 = win.graph().unwrap();
        let w2 = win.weights(&g2);
        let before = w2.clone();
        win.extend_to(4, &dist, &mut derive_stream(8, 2)).unwrap();
        let g4 = win.graph().unwrap();
        let w4 = win.weights(&g4);
        // every edge of the smaller window keeps its weight
        for e in 0..g2.edge_count() {
            let (a, b) = g2.endpoints(e);
            let (ca, ua) = g2.decode(a);
            let (cb, ub) = g2.decode(b);
            let (a4, b4) = (g4.vertex_id(ca, ua), g4.vertex_id(cb, ub));
            let mut found = None;
            g4.for_each_neighbor(a4, |y, f| {
                if y == b4 {
                    found = Some(f);
                }
            });
            assert_eq!(w4.weights[found.unwrap() as usize], before.weights[e as usize]);
        }
        // and the core sits in the middle unchanged
        for e in 0..core.edge_count() {
            let (a, b) = core.endpoints(e);
            let (ca, ua) = core.decode(a);
            let (cb, ub) = core.decode(b);
            let (a4, b4) = (g4.vertex_id(ca, ua), g4.vertex_id(cb, ub));
            let mut found = None;
            g4.for_each_neighbor(a4, |y, f| {
                if y == b4 {
                    found = Some(f);
                }
            });
            assert_eq!(w4.weights[found.unwrap() as usize], w.weights[e as usize]);
        }
    }
}
