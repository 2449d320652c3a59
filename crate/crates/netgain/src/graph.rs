//! Weighted graphs, ports, and the matrices built from them.
//!
//! Graphs are stored as edge lists: the optimizer iterates over edges and
//! `m` is usually far below `n^2`. Connectivity is decided by union-find
//! over the positive-support edges (weight above [`SUPPORT_TOL`]) rather
//! than by the sign of the Fiedler eigenvalue, so topology questions never
//! depend on eigensolver noise.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::SymMatrix;

/// Weights at or below this threshold do not count towards connectivity.
pub const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    NoNodes,
    #[error("node {node} out of range for {n_nodes} nodes")]
    NodeOutOfRange { node: usize, n_nodes: usize },
    #[error("self-loop at node {node}")]
    SelfLoop { node: usize },
    #[error("duplicate edge {{{u}, {v}}}")]
    DuplicateEdge { u: usize, v: usize },
    #[error("edge {{{u}, {v}}} has invalid weight {w} (must be finite and >= 0)")]
    InvalidWeight { u: usize, v: usize, w: f64 },
    #[error("edge {{{u}, {v}}} must have a negative finite weight, got {w}")]
    NotNegativeWeight { u: usize, v: usize, w: f64 },
    #[error("port ({inflow}, {outflow}) connects different components: resistance is infinite")]
    DisconnectedPort { inflow: usize, outflow: usize },
    #[error("port set must contain at least one port")]
    NoPorts,
    #[error("edge {{{u}, {v}}} has a free (null) weight; this operation needs fixed weights")]
    FreeWeight { u: usize, v: usize },
    #[error("edge {{{u}, {v}}} has a fixed weight; weight allocation needs all weights free (null)")]
    FixedWeight { u: usize, v: usize },
    #[error("expected {expected} weights for {expected} edges, got {got}")]
    WeightCount { expected: usize, got: usize },
}

/// One undirected edge with its weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

/// Undirected simple graph with nonnegative finite edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n_nodes: usize,
    edges: Vec<Edge>,
}

impl WeightedGraph {
    pub fn new(
        n_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, GraphError> {
        let edges: Vec<Edge> = edges
            .into_iter()
            .map(|(u, v, w)| Edge { u, v, w })
            .collect();
        validate_topology(n_nodes, edges.iter().map(|e| (e.u, e.v)))?;
        for e in &edges {
            if !e.w.is_finite() || e.w < 0.0 {
                return Err(GraphError::InvalidWeight {
                    u: e.u,
                    v: e.v,
                    w: e.w,
                });
            }
        }
        Ok(Self { n_nodes, edges })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.w).collect()
    }

    /// Same topology, new weights (ordered as [`Self::edges`]).
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self, GraphError> {
        if weights.len() != self.edges.len() {
            return Err(GraphError::WeightCount {
                expected: self.edges.len(),
                got: weights.len(),
            });
        }
        let edges = self
            .edges
            .iter()
            .zip(weights)
            .map(|(e, &w)| (e.u, e.v, w));
        Self::new(self.n_nodes, edges)
    }

    /// Node-by-edge incidence matrix under the canonical orientation:
    /// +1 at the lower-indexed endpoint, -1 at the higher-indexed one.
    /// The Laplacian is the same for any other orientation choice.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.n_nodes, self.edges.len());
        for (j, e) in self.edges.iter().enumerate() {
            let (lo, hi) = (e.u.min(e.v), e.u.max(e.v));
            b[(lo, j)] = 1.0;
            b[(hi, j)] = -1.0;
        }
        b
    }

    /// Weighted Laplacian `B diag(w) B^T`, assembled edge by edge.
    pub fn laplacian(&self) -> SymMatrix {
        let mut l = DMatrix::zeros(self.n_nodes, self.n_nodes);
        for e in &self.edges {
            accumulate_pair_laplacian(&mut l, e.u, e.v, e.w);
        }
        SymMatrix::from_matrix(l).expect("laplacian is symmetric by construction")
    }

    /// Second-smallest Laplacian eigenvalue; positive iff the
    /// positive-support graph is connected.
    pub fn algebraic_connectivity(&self) -> f64 {
        if self.n_nodes < 2 {
            return 0.0;
        }
        self.laplacian().spectrum().eigenvalues()[1]
    }

    /// Effective resistance `(e_i - e_j)^T L^+ (e_i - e_j)` between two
    /// nodes of the same positive-support component.
    pub fn effective_resistance(&self, i: usize, j: usize) -> Result<f64, GraphError> {
        for node in [i, j] {
            if node >= self.n_nodes {
                return Err(GraphError::NodeOutOfRange {
                    node,
                    n_nodes: self.n_nodes,
                });
            }
        }
        if i == j {
            return Err(GraphError::SelfLoop { node: i });
        }
        if !self.same_support_component(i, j) {
            return Err(GraphError::DisconnectedPort {
                inflow: i,
                outflow: j,
            });
        }
        let pinv = self.laplacian().pseudo_inverse();
        let p = pinv.as_matrix();
        // Evaluate in canonical node order so R_ij and R_ji are bitwise equal.
        let (a, b) = (i.min(j), i.max(j));
        Ok(p[(a, a)] + p[(b, b)] - p[(a, b)] - p[(b, a)])
    }

    /// Union-find components over edges with weight above [`SUPPORT_TOL`].
    pub fn support_components(&self) -> DisjointSets {
        let mut sets = DisjointSets::new(self.n_nodes);
        for e in &self.edges {
            if e.w > SUPPORT_TOL {
                sets.union(e.u, e.v);
            }
        }
        sets
    }

    pub fn same_support_component(&self, i: usize, j: usize) -> bool {
        self.support_components().same_set(i, j)
    }

    pub fn is_support_connected(&self) -> bool {
        let mut sets = self.support_components();
        (1..self.n_nodes).all(|i| sets.same_set(0, i))
    }
}

/// Graph whose Laplacian decomposes into a nonnegative part plus a set of
/// strictly negative edges: `L = L_+ + L_-`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedGraph {
    positive: WeightedGraph,
    negative: Vec<Edge>,
}

impl SignedGraph {
    pub fn new(
        positive: WeightedGraph,
        negative_edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, GraphError> {
        let negative: Vec<Edge> = negative_edges
            .into_iter()
            .map(|(u, v, w)| Edge { u, v, w })
            .collect();
        validate_topology(positive.n_nodes(), negative.iter().map(|e| (e.u, e.v)))?;
        for e in &negative {
            if !e.w.is_finite() || e.w >= 0.0 {
                return Err(GraphError::NotNegativeWeight {
                    u: e.u,
                    v: e.v,
                    w: e.w,
                });
            }
        }
        Ok(Self { positive, negative })
    }

    pub fn positive(&self) -> &WeightedGraph {
        &self.positive
    }

    pub fn negative_edges(&self) -> &[Edge] {
        &self.negative
    }

    /// Laplacian of the signed graph: the positive part's Laplacian plus
    /// `w (e_u - e_v)(e_u - e_v)^T` for each negative edge.
    pub fn laplacian(&self) -> SymMatrix {
        let mut l = self.positive.laplacian().into_matrix();
        for e in &self.negative {
            accumulate_pair_laplacian(&mut l, e.u, e.v, e.w);
        }
        SymMatrix::from_matrix(l).expect("signed laplacian is symmetric by construction")
    }
}

/// A signed edge list: each entry is `(u, v, w)`.
pub type SignedEdges = Vec<(usize, usize, f64)>;

/// Inflow/outflow pattern: each port routes one unit in at `inflow` and one
/// unit out at `outflow`, so the materialized matrix `E` has exactly one +1
/// and one -1 per column and `E^T 1 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PortSet {
    n_nodes: usize,
    ports: Vec<(usize, usize)>,
}

impl PortSet {
    pub fn new(
        n_nodes: usize,
        ports: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        if n_nodes == 0 {
            return Err(GraphError::NoNodes);
        }
        let ports: Vec<(usize, usize)> = ports.into_iter().collect();
        if ports.is_empty() {
            return Err(GraphError::NoPorts);
        }
        for &(inflow, outflow) in &ports {
            for node in [inflow, outflow] {
                if node >= n_nodes {
                    return Err(GraphError::NodeOutOfRange { node, n_nodes });
                }
            }
            if inflow == outflow {
                return Err(GraphError::SelfLoop { node: inflow });
            }
        }
        Ok(Self { n_nodes, ports })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn len(&self) -> usize {
        self.ports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ports.is_empty()
    }

    pub fn ports(&self) -> &[(usize, usize)] {
        &self.ports
    }

    /// The `n x k` port matrix `E`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.n_nodes, self.ports.len());
        for (j, &(inflow, outflow)) in self.ports.iter().enumerate() {
            e[(inflow, j)] = 1.0;
            e[(outflow, j)] = -1.0;
        }
        e
    }

    /// The `n x n` Gram matrix `E E^T` (itself a unit-weight Laplacian over
    /// the port pairs).
    pub fn gram(&self) -> SymMatrix {
        let mut g = DMatrix::zeros(self.n_nodes, self.n_nodes);
        for &(inflow, outflow) in &self.ports {
            accumulate_pair_laplacian(&mut g, inflow, outflow, 1.0);
        }
        SymMatrix::from_matrix(g).expect("port gram is symmetric by construction")
    }
}

/// Adds `w (e_u - e_v)(e_u - e_v)^T` into `l`.
fn accumulate_pair_laplacian(l: &mut DMatrix<f64>, u: usize, v: usize, w: f64) {
    l[(u, u)] += w;
    l[(v, v)] += w;
    l[(u, v)] -= w;
    l[(v, u)] -= w;
}

fn validate_topology(
    n_nodes: usize,
    pairs: impl IntoIterator<Item = (usize, usize)>,
) -> Result<(), GraphError> {
    if n_nodes == 0 {
        return Err(GraphError::NoNodes);
    }
    let mut seen = std::collections::HashSet::new();
    for (u, v) in pairs {
        for node in [u, v] {
            if node >= n_nodes {
                return Err(GraphError::NodeOutOfRange { node, n_nodes });
            }
        }
        if u == v {
            return Err(GraphError::SelfLoop { node: u });
        }
        if !seen.insert((u.min(v), u.max(v))) {
            return Err(GraphError::DuplicateEdge { u, v });
        }
    }
    Ok(())
}

/// Plain union-find with path halving.
#[derive(Debug, Clone)]
pub struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra] = rb;
        }
    }

    pub fn same_set(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }
}

// ---------------------------------------------------------------------------
// Network JSON schema
// ---------------------------------------------------------------------------

/// On-disk network description:
///
/// ```json
/// { "n": 4,
///   "edges": [{"u": 0, "v": 1, "w": 0.6}, {"u": 0, "v": 2, "w": null}],
///   "ports": [{"in": 0, "out": 3}] }
/// ```
///
/// A `null` (or omitted) weight marks the edge as a free variable for the
/// allocator; analysis operations reject files containing free weights.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NetworkFile {
    pub n: usize,
    pub edges: Vec<EdgeEntry>,
    #[serde(default)]
    pub ports: Vec<PortEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EdgeEntry {
    pub u: usize,
    pub v: usize,
    #[serde(default)]
    pub w: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PortEntry {
    #[serde(rename = "in")]
    pub inflow: usize,
    #[serde(rename = "out")]
    pub outflow: usize,
}

impl NetworkFile {
    /// Parses JSON; the error message carries line/column diagnostics.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serialization cannot fail")
    }

    /// All weights fixed and nonnegative: a graph ready for analysis.
    pub fn fixed_graph(&self) -> Result<WeightedGraph, GraphError> {
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let w = e
                .w
                .ok_or(GraphError::FreeWeight { u: e.u, v: e.v })?;
            edges.push((e.u, e.v, w));
        }
        WeightedGraph::new(self.n, edges)
    }

    /// Splits fixed-weight edges into the nonnegative part and the strictly
    /// negative edges, for signed-Laplacian checks. A pair may carry both a
    /// positive and a negative edge (the decomposition `L = L_+ + L_-` does
    /// not require disjoint supports), but each side must be simple on its
    /// own.
    pub fn signed_parts(&self) -> Result<(WeightedGraph, SignedEdges), GraphError> {
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for e in &self.edges {
            let w = e
                .w
                .ok_or(GraphError::FreeWeight { u: e.u, v: e.v })?;
            if w < 0.0 {
                negative.push((e.u, e.v, w));
            } else {
                positive.push((e.u, e.v, w));
            }
        }
        validate_topology(self.n, negative.iter().map(|&(u, v, _)| (u, v)))?;
        let graph = WeightedGraph::new(self.n, positive)?;
        Ok((graph, negative))
    }

    /// All weights free: the edge pairs of an allocation problem.
    pub fn free_topology(&self) -> Result<(usize, Vec<(usize, usize)>), GraphError> {
        let mut pairs = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            if e.w.is_some() {
                return Err(GraphError::FixedWeight { u: e.u, v: e.v });
            }
            pairs.push((e.u, e.v));
        }
        validate_topology(self.n, pairs.iter().copied())?;
        Ok((self.n, pairs))
    }

    pub fn port_set(&self) -> Result<PortSet, GraphError> {
        PortSet::new(self.n, self.ports.iter().map(|p| (p.inflow, p.outflow)))
    }
}
