//! Brute-force passage times by enumerating every simple path.
//!
//! Builds its own edge list for `[first, last] x G` from the base edge list,
//! independent of the library's id arithmetic and neighbour iteration.

#![allow(dead_code)]

pub type Node = (i64, u32);

/// Edges in canonical order: per column, vertical base edges then
/// horizontal edges to the next column.
pub fn canonical_edges(first: i64, last: i64, vertices: u32, base_edges: &[(u32, u32)]) -> Vec<(Node, Node)> {
    let mut out = Vec::new();
    for c in first..=last {
        for &(a, b) in base_edges {
            out.push(((c, a), (c, b)));
        }
        if c < last {
            for u in 0..vertices {
                out.push(((c, u), (c + 1, u)));
            }
        }
    }
    out
}

/// Minimum weight over simple paths from any node in `sources` to any node
/// in `targets`, using only nodes accepted by `allowed`. Weights must be
/// nonnegative.
pub fn min_simple_path(
    edges: &[(Node, Node)],
    weights: &[f64],
    sources: &[Node],
    targets: &[Node],
    allowed: impl Fn(Node) -> bool,
) -> f64 {
    assert_eq!(edges.len(), weights.len());
    let mut nodes: Vec<Node> = edges.iter().flat_map(|&(a, b)| [a, b]).chain(sources.iter().copied()).collect();
    nodes.sort();
    nodes.dedup();
    let index = |x: Node| nodes.binary_search(&x).unwrap();
    let mut adj = vec![Vec::new(); nodes.len()];
    for (e, &(a, b)) in edges.iter().enumerate() {
        if allowed(a) && allowed(b) {
            adj[index(a)].push((index(b), weights[e]));
            adj[index(b)].push((index(a), weights[e]));
        }
    }
    let is_target: Vec<bool> = nodes.iter().map(|n| targets.contains(n)).collect();
    let mut best = f64::INFINITY;
    let mut on_path = vec![false; nodes.len()];
    for &s in sources {
        if !allowed(s) {
            continue;
        }
        let s = index(s);
        on_path[s] = true;
        dfs(s, 0.0, &adj, &is_target, &mut on_path, &mut best);
        on_path[s] = false;
    }
    best
}

// Extensions of a path never weigh less than the path itself, so partial
// paths at or above the incumbent are cut.
fn dfs(x: usize, acc: f64, adj: &[Vec<(usize, f64)>], is_target: &[bool], on_path: &mut [bool], best: &mut f64) {
    if acc >= *best {
        return;
    }
    if is_target[x] {
        if acc < *best {
            *best = acc;
        }
        return;
    }
    for &(y, w) in &adj[x] {
        if !on_path[y] {
            on_path[y] = true;
            dfs(y, acc + w, adj, is_target, on_path, best);
            on_path[y] = false;
        }
    }
}

pub struct Cylinder {
    pub first: i64,
    pub last: i64,
    pub vertices: u32,
    pub origin: u32,
    pub edges: Vec<(Node, Node)>,
}

impl Cylinder {
    pub fn new(first: i64, last: i64, vertices: u32, base_edges: &[(u32, u32)], origin: u32) -> Self {
        Self {
            first,
            last,
            vertices,
            origin,
            edges: canonical_edges(first, last, vertices, base_edges),
        }
    }

    fn column(&self, c: i64) -> Vec<Node> {
        (0..self.vertices).map(|u| (c, u)).collect()
    }

    /// Side-to-side time between columns `a < b`, inside `[a, b]`.
    pub fn side_to_side(&self, weights: &[f64], a: i64, b: i64) -> f64 {
        min_simple_path(&self.edges, weights, &self.column(a), &self.column(b), |(c, _)| c >= a && c <= b)
    }

    /// `(a, o)` to `(b, o)` inside `[a, b]`.
    pub fn point_inside(&self, weights: &[f64], a: i64, b: i64) -> f64 {
        min_simple_path(&self.edges, weights, &[(a, self.origin)], &[(b, self.origin)], |(c, _)| c >= a && c <= b)
    }

    /// `(a, o)` to `(b, o)` anywhere in the window.
    pub fn point_anywhere(&self, weights: &[f64], a: i64, b: i64) -> f64 {
        min_simple_path(&self.edges, weights, &[(a, self.origin)], &[(b, self.origin)], |_| true)
    }
}
