//! Undirected graph algebra: incidence and Laplacian matrices, node classes
//! and row-block extraction.
//!
//! Edge orientation follows the listed pair order: column `k` of the
//! incidence matrix carries `+1` at the first endpoint of edge `k` and `-1`
//! at the second. Node indices are 0-based here; the scenario layer converts
//! from the 1-based indices used in files.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A connected undirected graph without self-loops or parallel edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from 0-based edge pairs.
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut seen = BTreeSet::new();
        for (k, &(a, b)) in edges.iter().enumerate() {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge {} ({}, {}) references a node outside 1..={}",
                    k + 1,
                    a + 1,
                    b + 1,
                    num_nodes
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!(
                    "edge {} is a self-loop at node {}",
                    k + 1,
                    a + 1
                )));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidGraph(format!(
                    "edge {} duplicates ({}, {})",
                    k + 1,
                    a + 1,
                    b + 1
                )));
            }
        }
        if !is_connected(num_nodes, &edges) {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(Self { num_nodes, edges })
    }

    /// Builds a graph from 1-based edge pairs, as written in scenario files.
    pub fn from_one_based(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut zero_based = Vec::with_capacity(edges.len());
        for (k, &(a, b)) in edges.iter().enumerate() {
            if a == 0 || b == 0 {
                return Err(Error::InvalidGraph(format!(
                    "edge {} uses index 0; node indices are 1-based",
                    k + 1
                )));
            }
            zero_based.push((a - 1, b - 1));
        }
        Self::new(num_nodes, zero_based)
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn path(num_nodes: usize) -> Result<Self> {
        Self::new(num_nodes, (1..num_nodes).map(|i| (i - 1, i)).collect())
    }

    /// Cycle graph on `n >= 3` nodes.
    pub fn cycle(num_nodes: usize) -> Result<Self> {
        if num_nodes < 3 {
            return Err(Error::InvalidGraph("a cycle needs at least 3 nodes".into()));
        }
        let mut edges: Vec<_> = (1..num_nodes).map(|i| (i - 1, i)).collect();
        edges.push((num_nodes - 1, 0));
        Self::new(num_nodes, edges)
    }

    pub fn complete(num_nodes: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..num_nodes {
            for j in (i + 1)..num_nodes {
                edges.push((i, j));
            }
        }
        Self::new(num_nodes, edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Edges as 1-based pairs.
    pub fn edges_one_based(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|&(a, b)| (a + 1, b + 1)).collect()
    }

    /// Neighbours of every node.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Subgraph induced by `keep` (0-based), re-indexed in the order given.
    /// Fails if the induced graph is disconnected.
    pub fn induced(&self, keep: &[usize]) -> Result<Self> {
        let mut map = vec![None; self.num_nodes];
        for (new, &old) in keep.iter().enumerate() {
            if old >= self.num_nodes {
                return Err(Error::InvalidGraph(format!("node {} out of range", old + 1)));
            }
            map[old] = Some(new);
        }
        let edges = self
            .edges
            .iter()
            .filter_map(|&(a, b)| Some((map[a]?, map[b]?)))
            .collect();
        Self::new(keep.len(), edges)
    }
}

/// Connectivity test by union-find. Accepts arbitrary edge lists, including
/// ones [`Graph::new`] would reject for other reasons.
pub fn is_connected(num_nodes: usize, edges: &[(usize, usize)]) -> bool {
    if num_nodes == 0 {
        return false;
    }
    let mut parent: Vec<usize> = (0..num_nodes).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = num_nodes;
    for &(a, b) in edges {
        if a >= num_nodes || b >= num_nodes {
            continue;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components == 1
}

/// N x M incidence matrix.
pub fn incidence_matrix(g: &Graph) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(g.num_nodes, g.edges.len());
    for (k, &(from, to)) in g.edges.iter().enumerate() {
        b[(from, k)] = 1.0;
        b[(to, k)] = -1.0;
    }
    b
}

/// Unweighted Laplacian, assembled from degrees and adjacency.
pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.num_nodes;
    let mut l = DMatrix::zeros(n, n);
    for &(a, b) in &g.edges {
        l[(a, a)] += 1.0;
        l[(b, b)] += 1.0;
        l[(a, b)] -= 1.0;
        l[(b, a)] -= 1.0;
    }
    l
}

/// True iff the (connected) graph is a tree.
pub fn is_acyclic(g: &Graph) -> bool {
    g.edges.len() + 1 == g.num_nodes
}

/// Role of a node in the controlled network.
///
/// The first digit says whether the node is differential (1) or algebraic
/// (2); the second whether it accepts a control input (1) or not (2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum NodeClass {
    C11,
    C12,
    C21,
    C22,
}

impl NodeClass {
    pub const ALL: [NodeClass; 4] = [NodeClass::C11, NodeClass::C12, NodeClass::C21, NodeClass::C22];

    pub fn is_differential(self) -> bool {
        matches!(self, NodeClass::C11 | NodeClass::C12)
    }

    pub fn is_algebraic(self) -> bool {
        !self.is_differential()
    }

    pub fn is_controlled(self) -> bool {
        matches!(self, NodeClass::C11 | NodeClass::C21)
    }

    /// Same dynamics type with the control input removed.
    pub fn uncontrolled(self) -> NodeClass {
        match self {
            NodeClass::C11 | NodeClass::C12 => NodeClass::C12,
            NodeClass::C21 | NodeClass::C22 => NodeClass::C22,
        }
    }
}

impl TryFrom<u8> for NodeClass {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            11 => Ok(NodeClass::C11),
            12 => Ok(NodeClass::C12),
            21 => Ok(NodeClass::C21),
            22 => Ok(NodeClass::C22),
            other => Err(format!("node class must be one of 11, 12, 21, 22 (got {other})")),
        }
    }
}

impl From<NodeClass> for u8 {
    fn from(c: NodeClass) -> u8 {
        match c {
            NodeClass::C11 => 11,
            NodeClass::C12 => 12,
            NodeClass::C21 => 21,
            NodeClass::C22 => 22,
        }
    }
}

impl fmt::Display for NodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

/// Row selector for [`row_block`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassSet {
    Class(NodeClass),
    /// Classes 11 and 12.
    Differential,
    /// Classes 21 and 22.
    Algebraic,
    /// Classes 11 and 21.
    Controlled,
    All,
}

impl ClassSet {
    pub fn contains(self, c: NodeClass) -> bool {
        match self {
            ClassSet::Class(k) => k == c,
            ClassSet::Differential => c.is_differential(),
            ClassSet::Algebraic => c.is_algebraic(),
            ClassSet::Controlled => c.is_controlled(),
            ClassSet::All => true,
        }
    }
}

/// Assignment of every node to a class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePartition {
    class_of: Vec<NodeClass>,
}

impl NodePartition {
    pub fn new(class_of: Vec<NodeClass>) -> Self {
        Self { class_of }
    }

    pub fn len(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }

    pub fn class_of(&self, node: usize) -> NodeClass {
        self.class_of[node]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.class_of
    }

    /// Node indices in `set`, ascending.
    pub fn indices(&self, set: ClassSet) -> Vec<usize> {
        self.class_of
            .iter()
            .enumerate()
            .filter(|(_, c)| set.contains(**c))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Rows of `b` belonging to `set`, in original order. An empty set gives a
/// `0 x M` matrix.
pub fn row_block(b: &DMatrix<f64>, p: &NodePartition, set: ClassSet) -> DMatrix<f64> {
    let rows = p.indices(set);
    DMatrix::from_fn(rows.len(), b.ncols(), |r, c| b[(rows[r], c)])
}
