//! Cylinder product graphs `[a,b] x G`.
//!
//! A base graph `G` is either a box `[-h,h]^{d-1}` with nearest-neighbour
//! edges or an explicit connected graph with a distinguished origin. The
//! cylinder over a column range is never stored as an adjacency list: vertex
//! and edge ids are computed from `(column, base vertex)` and the base CSR.
//!
//! Canonical edge order, per column ascending: the `k` vertical copies of the
//! base edges in base-edge-list order, then the `v` horizontal edges to the
//! next column in base-vertex order. The last column has no horizontal block.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type VertexId = u32;
pub type EdgeId = u32;

/// Default cap on cylinder vertex count.
pub const DEFAULT_VERTEX_BUDGET: u64 = 10_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("dimension must be at least 2, got {0}")]
    Dimension(u32),
    #[error("column count must be at least 1, got {0}")]
    ColumnCount(u64),
    #[error("cylinder would have {vertices} vertices, above the budget of {budget}")]
    Budget { vertices: u64, budget: u64 },
    #[error("base graph is disconnected: vertex {representative} is not reachable from vertex 0")]
    Disconnected { representative: u32 },
    #[error("origin {origin} is not a vertex of a graph with {vertices} vertices")]
    Origin { origin: u32, vertices: u32 },
    #[error("edge ({0}, {1}) is invalid")]
    InvalidEdge(u32, u32),
    #[error("base graph has no vertices")]
    Empty,
    #[error("edge list parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Description of a base graph `G` with origin `o`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSpec {
    /// `[-h,h]^{d-1}` with nearest-neighbour edges, origin at the zero vector.
    Box { h: u32, d: u32 },
    Explicit {
        vertices: u32,
        edges: Vec<(u32, u32)>,
        origin: u32,
    },
}

impl GraphSpec {
    pub fn boxed(h: u32, d: u32) -> Self {
        GraphSpec::Box { h, d }
    }

    pub fn explicit(vertices: u32, edges: Vec<(u32, u32)>, origin: u32) -> Self {
        GraphSpec::Explicit {
            vertices,
            edges,
            origin,
        }
    }

    /// Reads `v k origin` followed by `k` lines `u w`.
    pub fn from_edge_list_file(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io(e.to_string()))?;
        Self::parse_edge_list(&text)
    }

    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let nums = parse_u32s(header, hl + 1)?;
        if nums.len() != 3 {
            return Err(GraphError::Parse {
                line: hl + 1,
                msg: "expected `v k origin`".into(),
            });
        }
        let (v, k, origin) = (nums[0], nums[1] as usize, nums[2]);
        let mut edges = Vec::with_capacity(k);
        for (ln, line) in lines {
            let pair = parse_u32s(line, ln + 1)?;
            if pair.len() != 2 {
                return Err(GraphError::Parse {
                    line: ln + 1,
                    msg: "expected `u w`".into(),
                });
            }
            edges.push((pair[0], pair[1]));
        }
        if edges.len() != k {
            return Err(GraphError::Parse {
                line: 1,
                msg: format!("header announces {k} edges, found {}", edges.len()),
            });
        }
        let spec = GraphSpec::explicit(v, edges, origin);
        spec.materialize()?;
        Ok(spec)
    }

    pub fn materialize(&self) -> Result<BaseGraph, GraphError> {
        match *self {
            GraphSpec::Box { h, d } => BaseGraph::lattice_box(h, d),
            GraphSpec::Explicit {
                vertices,
                ref edges,
                origin,
            } => BaseGraph::from_edges(vertices, edges, origin),
        }
    }
}

fn parse_u32s(line: &str, lineno: usize) -> Result<Vec<u32>, GraphError> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<u32>().map_err(|e| GraphError::Parse {
                line: lineno,
                msg: format!("{t:?}: {e}"),
            })
        })
        .collect()
}

/// Vertex count, edge count and graph diameter of a base graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub vertex_count: u32,
    pub edge_count: u32,
    pub diameter: u32,
}

/// A materialized base graph with CSR adjacency.
#[derive(Clone, Debug)]
pub struct BaseGraph {
    vertex_count: u32,
    edges: Vec<(u32, u32)>,
    origin: u32,
    offsets: Vec<u32>,
    // (neighbour, base edge index)
    adjacency: Vec<(u32, u32)>,
}

impl BaseGraph {
    fn lattice_box(h: u32, d: u32) -> Result<Self, GraphError> {
        if d < 2 {
            return Err(GraphError::Dimension(d));
        }
        let side = 2 * h as u64 + 1;
        let dims = d - 1;
        let vertices = side
            .checked_pow(dims)
            .filter(|&v| v <= u32::MAX as u64)
            .ok_or(GraphError::Budget {
                vertices: u64::MAX,
                budget: u32::MAX as u64,
            })?;
        if vertices > DEFAULT_VERTEX_BUDGET {
            return Err(GraphError::Budget {
                vertices,
                budget: DEFAULT_VERTEX_BUDGET,
            });
        }
        let mut edges = Vec::new();
        for idx in 0..vertices {
            let mut stride = 1u64;
            for _ in 0..dims {
                let coord = (idx / stride) % side;
                if coord + 1 < side {
                    edges.push((idx as u32, (idx + stride) as u32));
                }
                stride *= side;
            }
        }
        let mut origin = 0u64;
        let mut stride = 1u64;
        for _ in 0..dims {
            origin += h as u64 * stride;
            stride *= side;
        }
        Ok(Self::assemble(vertices as u32, edges, origin as u32))
    }

    fn from_edges(vertices: u32, edges: &[(u32, u32)], origin: u32) -> Result<Self, GraphError> {
        if vertices == 0 {
            return Err(GraphError::Empty);
        }
        if origin >= vertices {
            return Err(GraphError::Origin { origin, vertices });
        }
        for &(u, w) in edges {
            if u >= vertices || w >= vertices || u == w {
                return Err(GraphError::InvalidEdge(u, w));
            }
        }
        let g = Self::assemble(vertices, edges.to_vec(), origin);
        let dist = g.bfs(0);
        if let Some(rep) = dist.iter().position(|&d| d == u32::MAX) {
            return Err(GraphError::Disconnected {
                representative: rep as u32,
            });
        }
        Ok(g)
    }

    fn assemble(vertex_count: u32, edges: Vec<(u32, u32)>, origin: u32) -> Self {
        let v = vertex_count as usize;
        let mut degree = vec![0u32; v + 1];
        for &(a, b) in &edges {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        let mut offsets = vec![0u32; v + 1];
        for i in 0..v {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut adjacency = vec![(0u32, 0u32); 2 * edges.len()];
        for (j, &(a, b)) in edges.iter().enumerate() {
            adjacency[fill[a as usize] as usize] = (b, j as u32);
            fill[a as usize] += 1;
            adjacency[fill[b as usize] as usize] = (a, j as u32);
            fill[b as usize] += 1;
        }
        Self {
            vertex_count,
            edges,
            origin,
            offsets,
            adjacency,
        }
    }

    pub fn vertex_count(&self) -> u32 {
        self.vertex_count
    }

    pub fn edge_count(&self) -> u32 {
        self.edges.len() as u32
    }

    pub fn origin(&self) -> u32 {
        self.origin
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    #[inline]
    pub fn neighbors(&self, u: u32) -> &[(u32, u32)] {
        &self.adjacency[self.offsets[u as usize] as usize..self.offsets[u as usize + 1] as usize]
    }

    /// Hop distances from `src`; `u32::MAX` marks unreachable vertices.
    pub fn bfs(&self, src: u32) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.vertex_count as usize];
        let mut queue = VecDeque::new();
        dist[src as usize] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &(w, _) in self.neighbors(u) {
                if dist[w as usize] == u32::MAX {
                    dist[w as usize] = dist[u as usize] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn metrics(&self) -> GraphMetrics {
        let diameter = (0..self.vertex_count)
            .map(|s| self.bfs(s).into_iter().max().unwrap_or(0))
            .max()
            .unwrap_or(0);
        GraphMetrics {
            vertex_count: self.vertex_count,
            edge_count: self.edge_count(),
            diameter,
        }
    }
}

/// Exact `v`, `k` and diameter of a base graph, by BFS from every vertex.
pub fn graph_metrics(base: &GraphSpec) -> Result<GraphMetrics, GraphError> {
    Ok(base.materialize()?.metrics())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    /// Between `(column, vertex)` and `(column + 1, vertex)`.
    Horizontal { column: i64, vertex: u32 },
    /// Copy of base edge `base_edge` inside `column`.
    Vertical { column: i64, base_edge: u32 },
}

/// The product graph `[first, last] x G`.
#[derive(Clone, Debug)]
pub struct CylinderGraph {
    first: i64,
    last: i64,
    base: Arc<BaseGraph>,
}

impl CylinderGraph {
    pub fn new(first: i64, last: i64, base: Arc<BaseGraph>) -> Result<Self, GraphError> {
        Self::with_budget(first, last, base, DEFAULT_VERTEX_BUDGET)
    }

    pub fn with_budget(
        first: i64,
        last: i64,
        base: Arc<BaseGraph>,
        budget: u64,
    ) -> Result<Self, GraphError> {
        if last < first {
            return Err(GraphError::ColumnCount(0));
        }
        let columns = (last - first + 1) as u64;
        let vertices = columns.saturating_mul(base.vertex_count as u64);
        let edges = columns
            .saturating_mul(base.edge_count() as u64)
            .saturating_add((columns - 1).saturating_mul(base.vertex_count as u64));
        if vertices > budget || vertices > u32::MAX as u64 || edges > u32::MAX as u64 {
            return Err(GraphError::Budget {
                vertices,
                budget: budget.min(u32::MAX as u64),
            });
        }
        Ok(Self { first, last, base })
    }

    pub fn base(&self) -> &BaseGraph {
        &self.base
    }

    pub fn base_arc(&self) -> &Arc<BaseGraph> {
        &self.base
    }

    pub fn first_column(&self) -> i64 {
        self.first
    }

    pub fn last_column(&self) -> i64 {
        self.last
    }

    pub fn column_count(&self) -> u32 {
        (self.last - self.first + 1) as u32
    }

    pub fn vertex_count(&self) -> u32 {
        self.column_count() * self.base.vertex_count
    }

    pub fn edge_count(&self) -> u32 {
        let c = self.column_count();
        c * self.base.edge_count() + (c - 1) * self.base.vertex_count
    }

    #[inline]
    fn block(&self) -> u32 {
        self.base.edge_count() + self.base.vertex_count
    }

    #[inline]
    pub fn vertex_id(&self, column: i64, u: u32) -> VertexId {
        debug_assert!(column >= self.first && column <= self.last && u < self.base.vertex_count);
        (column - self.first) as u32 * self.base.vertex_count + u
    }

    #[inline]
    pub fn decode(&self, id: VertexId) -> (i64, u32) {
        let v = self.base.vertex_count;
        (self.first + (id / v) as i64, id % v)
    }

    #[inline]
    pub fn column_of(&self, id: VertexId) -> i64 {
        self.first + (id / self.base.vertex_count) as i64
    }

    pub fn vertical_edge_id(&self, column: i64, base_edge: u32) -> EdgeId {
        (column - self.first) as u32 * self.block() + base_edge
    }

    pub fn horizontal_edge_id(&self, column: i64, u: u32) -> EdgeId {
        debug_assert!(column < self.last);
        (column - self.first) as u32 * self.block() + self.base.edge_count() + u
    }

    pub fn edge_kind(&self, e: EdgeId) -> EdgeKind {
        let block = self.block();
        let column = self.first + (e / block) as i64;
        let off = e % block;
        if off < self.base.edge_count() {
            EdgeKind::Vertical {
                column,
                base_edge: off,
            }
        } else {
            EdgeKind::Horizontal {
                column,
                vertex: off - self.base.edge_count(),
            }
        }
    }

    pub fn endpoints(&self, e: EdgeId) -> (VertexId, VertexId) {
        match self.edge_kind(e) {
            EdgeKind::Vertical { column, base_edge } => {
                let (a, b) = self.base.edges[base_edge as usize];
                (self.vertex_id(column, a), self.vertex_id(column, b))
            }
            EdgeKind::Horizontal { column, vertex } => (
                self.vertex_id(column, vertex),
                self.vertex_id(column + 1, vertex),
            ),
        }
    }

    /// Calls `f(neighbour, edge)` for every edge at `x`.
    #[inline]
    pub fn for_each_neighbor(&self, x: VertexId, mut f: impl FnMut(VertexId, EdgeId)) {
        let v = self.base.vertex_count;
        let c = x / v;
        let u = x % v;
        let block = self.block();
        let k = self.base.edge_count();
        let row = c * v;
        for &(w, j) in self.base.neighbors(u) {
            f(row + w, c * block + j);
        }
        if c > 0 {
            f(x - v, (c - 1) * block + k + u);
        }
        if (c as i64) < self.last - self.first {
            f(x + v, c * block + k + u);
        }
    }

    /// Fingerprint of the canonical edge enumeration.
    pub fn enumeration_hash(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(self.first.to_le_bytes());
        h.update(self.last.to_le_bytes());
        h.update(self.base.vertex_count.to_le_bytes());
        h.update(self.base.origin.to_le_bytes());
        for &(a, b) in &self.base.edges {
            h.update(a.to_le_bytes());
            h.update(b.to_le_bytes());
        }
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().expect("sha256 output has 32 bytes"))
    }
}

/// Cylinder over `[-margin, n + margin]` with base `box(h, d)`.
pub fn build_box_cylinder(n: u32, h: u32, d: u32, margin: u32) -> Result<CylinderGraph, GraphError> {
    if n < 1 {
        return Err(GraphError::ColumnCount(n as u64));
    }
    if d < 2 {
        return Err(GraphError::Dimension(d));
    }
    let side = 2 * h as u64 + 1;
    let columns = n as u64 + 1 + 2 * margin as u64;
    let base_vertices = side.checked_pow(d - 1);
    let vertices = base_vertices.and_then(|b| b.checked_mul(columns));
    match vertices {
        Some(v) if v <= DEFAULT_VERTEX_BUDGET => {}
        other => {
            return Err(GraphError::Budget {
                vertices: other.unwrap_or(u64::MAX),
                budget: DEFAULT_VERTEX_BUDGET,
            })
        }
    }
    let base = Arc::new(BaseGraph::lattice_box(h, d)?);
    CylinderGraph::new(-(margin as i64), n as i64 + margin as i64, base)
}

/// Cylinder over `[0, n]` with an arbitrary connected base.
pub fn build_product_cylinder(n: u32, base: &GraphSpec) -> Result<CylinderGraph, GraphError> {
    if n < 1 {
        return Err(GraphError::ColumnCount(n as u64));
    }
    let base = Arc::new(base.materialize()?);
    CylinderGraph::new(0, n as i64, base)
}
