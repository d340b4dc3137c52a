//! DAG and undirected graph types with structural queries.
//!
//! Nodes are `0..p`. A [`Dag`] keeps its edge list sorted, an optional weight
//! per edge, parent/child lists and a causal (topological) order.

mod dsep;
mod generate;
pub mod io;
pub(crate) mod trek;

pub use dsep::{d_separated, d_separated_by_paths};
pub use generate::{generate_er_dag, generate_powerlaw_dag, GraphFamily};
pub use trek::{enumerate_treks, local_separator, trek_counts, Trek};

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{param, Error, Result};

/// Read-only adjacency queries shared by directed and undirected graphs.
pub trait Adjacency {
    fn node_count(&self) -> usize;
    fn is_adjacent(&self, a: usize, b: usize) -> bool;
    /// Sorted neighbours of `v`, ignoring direction.
    fn neighbors(&self, v: usize) -> Vec<usize>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    p: usize,
    edges: Vec<(usize, usize)>,
    weights: Option<Vec<f64>>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl Dag {
    /// Builds an unweighted DAG, deriving a causal order by Kahn's algorithm
    /// (smallest available index first).
    pub fn new(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let (edges, parents, children) = Self::collect(p, edges)?;
        let order = kahn_order(p, &parents, &children).ok_or(Error::Cycle)?;
        Ok(Self { p, edges, weights: None, parents, children, order })
    }

    /// Builds an unweighted DAG with a caller-supplied causal order.
    pub fn with_order(
        p: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        order: Vec<usize>,
    ) -> Result<Self> {
        let (edges, parents, children) = Self::collect(p, edges)?;
        let mut position = vec![usize::MAX; p];
        if order.len() != p {
            return Err(param("order must be a permutation of the nodes"));
        }
        for (pos, &v) in order.iter().enumerate() {
            if v >= p || position[v] != usize::MAX {
                return Err(param("order must be a permutation of the nodes"));
            }
            position[v] = pos;
        }
        if edges.iter().any(|&(j, k)| position[j] >= position[k]) {
            return Err(Error::Cycle);
        }
        Ok(Self { p, edges, weights: None, parents, children, order })
    }

    /// Builds a weighted DAG from `(src, dst, weight)` triples.
    pub fn from_weighted(p: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let dag = Self::new(p, edges.iter().map(|&(j, k, _)| (j, k)))?;
        let mut weights = vec![0.0; dag.edges.len()];
        for &(j, k, w) in edges {
            weights[dag.edge_index(j, k).expect("edge just inserted")] = w;
        }
        dag.with_weights(weights)
    }

    fn collect(
        p: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<(Vec<(usize, usize)>, Vec<Vec<usize>>, Vec<Vec<usize>>)> {
        let mut set = BTreeSet::new();
        for (j, k) in edges {
            if j >= p || k >= p {
                return Err(param(format!("edge ({j}, {k}) out of range for p = {p}")));
            }
            if j == k {
                return Err(param(format!("self-loop on node {j}")));
            }
            set.insert((j, k));
        }
        if set.iter().any(|&(j, k)| set.contains(&(k, j))) {
            return Err(Error::Cycle);
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut parents = vec![Vec::new(); p];
        let mut children = vec![Vec::new(); p];
        for &(j, k) in &edges {
            parents[k].push(j);
            children[j].push(k);
        }
        for v in 0..p {
            parents[v].sort_unstable();
        }
        Ok((edges, parents, children))
    }

    /// Replaces the edge weights; `weights` is aligned with [`Dag::edges`].
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.edges.len() {
            return Err(param(format!(
                "expected {} weights, got {}",
                self.edges.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(param("edge weights must be finite"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Edges `(j, k)` meaning `j -> k`, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    pub fn edge_index(&self, j: usize, k: usize) -> Option<usize> {
        self.edges.binary_search(&(j, k)).ok()
    }

    pub fn has_edge(&self, j: usize, k: usize) -> bool {
        self.edge_index(j, k).is_some()
    }

    /// Weight of `j -> k`; `None` when the edge is absent or weights are unset.
    pub fn weight(&self, j: usize, k: usize) -> Option<f64> {
        let w = self.weights.as_ref()?;
        self.edge_index(j, k).map(|e| w[e])
    }

    pub fn parents(&self, k: usize) -> &[usize] {
        &self.parents[k]
    }

    pub fn children(&self, k: usize) -> &[usize] {
        &self.children[k]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn degree(&self, k: usize) -> usize {
        self.parents[k].len() + self.children[k].len()
    }

    /// Maximum node degree `d_max`.
    pub fn max_degree(&self) -> usize {
        (0..self.p).map(|k| self.degree(k)).max().unwrap_or(0)
    }

    /// Largest absolute edge weight (`rho_max`), zero for an empty or
    /// unweighted graph.
    pub fn max_abs_weight(&self) -> f64 {
        self.weights
            .as_ref()
            .map(|w| w.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
            .unwrap_or(0.0)
    }

    /// Weighted adjacency `A` with `A[(k, j)] = rho_jk`, so that
    /// `X = A X + eps`. Unset weights are treated as zero.
    pub fn weighted_adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.p, self.p);
        if let Some(w) = &self.weights {
            for (e, &(j, k)) in self.edges.iter().enumerate() {
                a[(k, j)] = w[e];
            }
        }
        a
    }

    /// All descendants of `v`, including `v` itself.
    pub fn descendants_of(&self, v: usize) -> Vec<bool> {
        let mut seen = vec![false; self.p];
        let mut stack = vec![v];
        seen[v] = true;
        while let Some(u) = stack.pop() {
            for &c in &self.children[u] {
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        seen
    }

    /// Checks acyclicity from scratch with a topological sort.
    pub fn is_acyclic(&self) -> bool {
        kahn_order(self.p, &self.parents, &self.children).is_some()
    }
}

impl Adjacency for Dag {
    fn node_count(&self) -> usize {
        self.p
    }

    fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self.parents[v].iter().chain(&self.children[v]).copied().collect();
        n.sort_unstable();
        n
    }
}

fn kahn_order(p: usize, parents: &[Vec<usize>], children: &[Vec<usize>]) -> Option<Vec<usize>> {
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BTreeSet<usize> = (0..p).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(p);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.insert(c);
            }
        }
    }
    (order.len() == p).then_some(order)
}

/// Symmetric graph without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    adj: Vec<BTreeSet<usize>>,
}

impl UndirectedGraph {
    pub fn empty(p: usize) -> Self {
        Self { adj: vec![BTreeSet::new(); p] }
    }

    pub fn complete(p: usize) -> Self {
        Self { adj: (0..p).map(|v| (0..p).filter(|&u| u != v).collect()).collect() }
    }

    pub fn from_edges(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::empty(p);
        for (a, b) in edges {
            if a >= p || b >= p || a == b {
                return Err(param(format!("invalid undirected edge ({a}, {b}) for p = {p}")));
            }
            g.add_edge(a, b);
        }
        Ok(g)
    }

    pub fn p(&self) -> usize {
        self.adj.len()
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        debug_assert_ne!(a, b);
        self.adj[a].insert(b);
        self.adj[b].insert(a);
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) -> bool {
        let removed = self.adj[a].remove(&b);
        self.adj[b].remove(&a);
        removed
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(&b)
    }

    pub fn neighbor_set(&self, v: usize) -> &BTreeSet<usize> {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Edges `(a, b)` with `a < b` in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(a, n)| n.range(a + 1..).map(move |&b| (a, b)))
            .collect()
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut g = Self::empty(self.p());
        for (a, b) in self.edges() {
            g.add_edge(perm[a], perm[b]);
        }
        g
    }
}

impl Adjacency for UndirectedGraph {
    fn node_count(&self) -> usize {
        self.p()
    }

    fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.has_edge(a, b)
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        self.adj[v].iter().copied().collect()
    }
}

pub fn skeleton_of(dag: &Dag) -> UndirectedGraph {
    let mut g = UndirectedGraph::empty(dag.p());
    for &(j, k) in dag.edges() {
        g.add_edge(j, k);
    }
    g
}

/// Unshielded triples `(i, k, j)` with `i < j`: `i - k - j` adjacent and
/// `i`, `j` not adjacent. Sorted lexicographically.
pub fn unshielded_triples<G: Adjacency>(graph: &G) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for k in 0..graph.node_count() {
        let nb = graph.neighbors(k);
        for (a, &i) in nb.iter().enumerate() {
            for &j in &nb[a + 1..] {
                if !graph.is_adjacent(i, j) {
                    out.push((i, k, j));
                }
            }
        }
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::Dag;

    /// The nine-node example graph with treks between X1 and X2, 0-based
    /// (X1 is node 0).
    pub const FIGURE1_EDGES: [(usize, usize); 10] = [
        (0, 2),
        (1, 3),
        (3, 2),
        (4, 0),
        (4, 1),
        (0, 8),
        (8, 7),
        (7, 6),
        (6, 5),
        (5, 1),
    ];

    pub fn figure1() -> Dag {
        Dag::new(9, FIGURE1_EDGES).unwrap()
    }

    pub fn figure1_weighted(w: f64) -> Dag {
        let edges: Vec<_> = FIGURE1_EDGES.iter().map(|&(a, b)| (a, b, w)).collect();
        Dag::from_weighted(9, &edges).unwrap()
    }

    pub fn chain3() -> Dag {
        Dag::new(3, [(0, 1), (1, 2)]).unwrap()
    }
}
