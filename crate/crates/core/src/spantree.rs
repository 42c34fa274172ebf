//! Spanning trees with exact stretch and condition number, LCA-based
//! tree-path queries, and tree-induced potentials.
//!
//! For a non-tree edge `e = (u, v)` (canonical `u < v`) the tree cycle `C_e`
//! traverses `e` from `u` to `v` and then the tree path from `v` back to `u`.
//! With that orientation the cycle flow equals the p-residual of `e` under the
//! tree potentials: `G_C = g_e - (x̂_u - x̂_v)`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::graph::{FlowState, Graph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("graph is not connected")]
    Disconnected,
    #[error("edge {0} is a tree edge; a non-tree edge is required")]
    TreeEdge(usize),
    #[error("edge index {0} out of range")]
    EdgeOutOfRange(usize),
    #[error("invalid spanning tree: {0}")]
    Invalid(String),
    #[error("unknown tree strategy `{0}`")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TreeStrategy {
    /// Shortest-path tree under edge length `1/w` from a maximum-degree root.
    #[default]
    ShortestPathResistance,
    /// Minimum spanning tree under edge cost `1/w`.
    MinResistanceSpanning,
}

impl fmt::Display for TreeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ShortestPathResistance => "spt",
            Self::MinResistanceSpanning => "mst",
        })
    }
}

impl FromStr for TreeStrategy {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spt" => Ok(Self::ShortestPathResistance),
            "mst" => Ok(Self::MinResistanceSpanning),
            other => Err(TreeError::UnknownStrategy(other.to_string())),
        }
    }
}

/// An edge traversed in direction `sign` (+1 = canonical `u -> v`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrientedEdge {
    pub edge: usize,
    pub sign: i8,
}

#[derive(Debug, Clone)]
pub struct SpanningTree {
    root: usize,
    parent: Vec<usize>,
    parent_edge: Vec<Option<usize>>,
    // Direction of the parent edge when walked child -> parent.
    parent_sign: Vec<i8>,
    depth: Vec<usize>,
    ancestors: Vec<Vec<usize>>,
    resistance_prefix: Vec<f64>,
    in_tree: Vec<bool>,
    bfs_order: Vec<usize>,
    non_tree: Vec<usize>,
    stretch: Vec<f64>,
    st_total: f64,
    tau: f64,
}

impl SpanningTree {
    pub fn build(graph: &Graph, strategy: TreeStrategy) -> Result<Self, TreeError> {
        if !graph.is_connected() {
            return Err(TreeError::Disconnected);
        }
        let root = max_degree_node(graph);
        let edges = match strategy {
            TreeStrategy::ShortestPathResistance => shortest_path_edges(graph, root),
            TreeStrategy::MinResistanceSpanning => min_resistance_edges(graph),
        };
        Self::from_edges(graph, &edges, root)
    }

    /// Roots the given edge set at `root`, checking it is a spanning tree.
    pub fn from_edges(graph: &Graph, tree_edges: &[usize], root: usize) -> Result<Self, TreeError> {
        let n = graph.node_count();
        let m = graph.edge_count();
        if root >= n {
            return Err(TreeError::Invalid(format!("root {root} out of range")));
        }
        if tree_edges.len() != n - 1 {
            return Err(TreeError::Invalid(format!(
                "expected {} tree edges, got {}",
                n - 1,
                tree_edges.len()
            )));
        }
        let mut in_tree = vec![false; m];
        for &e in tree_edges {
            if e >= m {
                return Err(TreeError::EdgeOutOfRange(e));
            }
            if std::mem::replace(&mut in_tree[e], true) {
                return Err(TreeError::Invalid(format!("edge {e} listed twice")));
            }
        }

        let mut parent = vec![usize::MAX; n];
        let mut parent_edge = vec![None; n];
        let mut parent_sign = vec![0i8; n];
        let mut depth = vec![0usize; n];
        let mut resistance_prefix = vec![0.0; n];
        let mut bfs_order = Vec::with_capacity(n);
        parent[root] = root;
        let mut queue = VecDeque::from([root]);
        while let Some(node) = queue.pop_front() {
            bfs_order.push(node);
            for inc in graph.incident(node) {
                let child = inc.neighbor;
                if !in_tree[inc.edge] || parent[child] != usize::MAX {
                    continue;
                }
                parent[child] = node;
                parent_edge[child] = Some(inc.edge);
                // inc.sign is the direction node -> child; the child walks it backwards.
                parent_sign[child] = -inc.sign;
                depth[child] = depth[node] + 1;
                resistance_prefix[child] = resistance_prefix[node] + 1.0 / graph.edge(inc.edge).weight;
                queue.push_back(child);
            }
        }
        if bfs_order.len() != n {
            return Err(TreeError::Invalid("edges do not span the graph".into()));
        }

        let levels = (usize::BITS - (n.max(2) - 1).leading_zeros()) as usize;
        let mut ancestors = vec![parent.clone()];
        for level in 1..levels {
            let prev = &ancestors[level - 1];
            let next = (0..n).map(|v| prev[prev[v]]).collect();
            ancestors.push(next);
        }

        let non_tree: Vec<usize> = (0..m).filter(|&e| !in_tree[e]).collect();
        let mut tree = Self {
            root,
            parent,
            parent_edge,
            parent_sign,
            depth,
            ancestors,
            resistance_prefix,
            in_tree,
            bfs_order,
            non_tree,
            stretch: Vec::new(),
            st_total: 0.0,
            tau: 0.0,
        };
        tree.measure(graph);
        Ok(tree)
    }

    fn measure(&mut self, graph: &Graph) {
        let stretch: Vec<f64> = graph
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                if self.in_tree[e] {
                    1.0
                } else {
                    edge.weight * self.path_resistance(edge.u, edge.v)
                }
            })
            .collect();
        self.st_total = stretch.iter().sum();
        self.stretch = stretch;
        self.tau = self
            .non_tree
            .iter()
            .map(|&e| graph.edge(e).weight / self.cycle_resistance_unchecked(graph, e))
            .fold(0.0, |acc, r| acc + r);
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, node: usize) -> usize {
        self.parent[node]
    }

    pub fn parent_edge(&self, node: usize) -> Option<usize> {
        self.parent_edge[node]
    }

    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    pub fn resistance_prefix(&self, node: usize) -> f64 {
        self.resistance_prefix[node]
    }

    pub fn contains(&self, edge: usize) -> bool {
        self.in_tree[edge]
    }

    pub fn tree_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.parent_edge.iter().filter_map(|e| *e)
    }

    pub fn non_tree_edges(&self) -> &[usize] {
        &self.non_tree
    }

    /// Nodes in breadth-first order from the root.
    pub fn bfs_order(&self) -> &[usize] {
        &self.bfs_order
    }

    /// Per-edge stretch `w_e · R_T(u, v)`; tree edges have stretch 1.
    pub fn stretch(&self) -> &[f64] {
        &self.stretch
    }

    /// Total stretch `st(T)` over all edges.
    pub fn total_stretch(&self) -> f64 {
        self.st_total
    }

    /// Tree condition number `τ(T) = Σ_{e ∉ T} w_e / W_{C_e}`.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn lca(&self, mut a: usize, mut b: usize) -> usize {
        if self.depth[a] < self.depth[b] {
            std::mem::swap(&mut a, &mut b);
        }
        let mut diff = self.depth[a] - self.depth[b];
        let mut level = 0;
        while diff > 0 {
            if diff & 1 == 1 {
                a = self.ancestors[level][a];
            }
            diff >>= 1;
            level += 1;
        }
        if a == b {
            return a;
        }
        for level in (0..self.ancestors.len()).rev() {
            let (pa, pb) = (self.ancestors[level][a], self.ancestors[level][b]);
            if pa != pb {
                a = pa;
                b = pb;
            }
        }
        self.parent[a]
    }

    /// Sum of `1/w` along the tree path between `a` and `b`.
    pub fn path_resistance(&self, a: usize, b: usize) -> f64 {
        let l = self.lca(a, b);
        self.resistance_prefix[a] + self.resistance_prefix[b] - 2.0 * self.resistance_prefix[l]
    }

    fn require_non_tree(&self, edge: usize) -> Result<(), TreeError> {
        match self.in_tree.get(edge) {
            None => Err(TreeError::EdgeOutOfRange(edge)),
            Some(true) => Err(TreeError::TreeEdge(edge)),
            Some(false) => Ok(()),
        }
    }

    /// Oriented tree path from `v` to `u` for the non-tree edge `(u, v)`.
    pub fn tree_path(&self, graph: &Graph, edge: usize) -> Result<Vec<OrientedEdge>, TreeError> {
        self.require_non_tree(edge)?;
        let e = graph.edge(edge);
        let mut path = Vec::with_capacity(self.depth[e.u] + self.depth[e.v]);
        self.append_tree_path(e.v, e.u, &mut path);
        Ok(path)
    }

    /// The tree cycle of a non-tree edge: the edge itself (`u -> v`) followed
    /// by the tree path back to `u`.
    pub fn tree_cycle(&self, graph: &Graph, edge: usize) -> Result<Vec<OrientedEdge>, TreeError> {
        let mut cycle = Vec::new();
        self.tree_cycle_into(graph, edge, &mut cycle)?;
        Ok(cycle)
    }

    pub(crate) fn tree_cycle_into(
        &self,
        graph: &Graph,
        edge: usize,
        cycle: &mut Vec<OrientedEdge>,
    ) -> Result<(), TreeError> {
        self.require_non_tree(edge)?;
        let e = graph.edge(edge);
        cycle.clear();
        cycle.push(OrientedEdge { edge, sign: 1 });
        self.append_tree_path(e.v, e.u, cycle);
        Ok(())
    }

    fn append_tree_path(&self, from: usize, to: usize, out: &mut Vec<OrientedEdge>) {
        let l = self.lca(from, to);
        let mut node = from;
        while node != l {
            out.push(OrientedEdge {
                edge: self.parent_edge[node].expect("non-root node has a parent edge"),
                sign: self.parent_sign[node],
            });
            node = self.parent[node];
        }
        let start = out.len();
        node = to;
        while node != l {
            out.push(OrientedEdge {
                edge: self.parent_edge[node].expect("non-root node has a parent edge"),
                sign: -self.parent_sign[node],
            });
            node = self.parent[node];
        }
        out[start..].reverse();
    }

    /// `W_C = (Σ_{C} 1/w)^{-1}` for the tree cycle through `edge`.
    pub fn cycle_resistance(&self, graph: &Graph, edge: usize) -> Result<f64, TreeError> {
        self.require_non_tree(edge)?;
        Ok(self.cycle_resistance_unchecked(graph, edge))
    }

    fn cycle_resistance_unchecked(&self, graph: &Graph, edge: usize) -> f64 {
        let e = graph.edge(edge);
        1.0 / (1.0 / e.weight + self.path_resistance(e.u, e.v))
    }

    /// Signed flow `G_C` around the tree cycle through `edge`.
    pub fn cycle_flow(&self, graph: &Graph, g: &FlowState, edge: usize) -> Result<f64, TreeError> {
        self.require_non_tree(edge)?;
        let e = graph.edge(edge);
        let mut total = g[edge];
        let l = self.lca(e.u, e.v);
        // Path v -> u: up from v to the LCA, then down to u.
        let mut node = e.v;
        while node != l {
            total += g.oriented(self.parent_edge[node].unwrap(), self.parent_sign[node]);
            node = self.parent[node];
        }
        node = e.u;
        while node != l {
            total -= g.oriented(self.parent_edge[node].unwrap(), self.parent_sign[node]);
            node = self.parent[node];
        }
        Ok(total)
    }

    /// Potentials `x̂` with `x̂(root) = 0` and `x̂_u - x̂_v = g_uv` on tree edges.
    pub fn tree_potentials(&self, g: &FlowState) -> Vec<f64> {
        let mut x = vec![0.0; self.parent.len()];
        for &node in &self.bfs_order[1..] {
            let e = self.parent_edge[node].unwrap();
            x[node] = x[self.parent[node]] + g.oriented(e, self.parent_sign[node]);
        }
        x
    }

    /// Oriented child -> parent direction of the parent edge.
    pub(crate) fn parent_sign(&self, node: usize) -> i8 {
        self.parent_sign[node]
    }
}

fn max_degree_node(graph: &Graph) -> usize {
    (0..graph.node_count())
        .max_by_key(|&v| (graph.degree(v), std::cmp::Reverse(v)))
        .unwrap_or(0)
}

#[derive(PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn shortest_path_edges(graph: &Graph, root: usize) -> Vec<usize> {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut via = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[root] = 0.0;
    heap.push(Frontier { dist: 0.0, node: root });
    while let Some(Frontier { dist: d, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        for inc in graph.incident(node) {
            let next = d + 1.0 / graph.edge(inc.edge).weight;
            if !done[inc.neighbor] && next < dist[inc.neighbor] {
                dist[inc.neighbor] = next;
                via[inc.neighbor] = Some(inc.edge);
                heap.push(Frontier { dist: next, node: inc.neighbor });
            }
        }
    }
    via.into_iter().flatten().collect()
}

fn min_resistance_edges(graph: &Graph) -> Vec<usize> {
    let mut order: Vec<usize> = (0..graph.edge_count()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (1.0 / graph.edge(a).weight, 1.0 / graph.edge(b).weight);
        ra.total_cmp(&rb).then(a.cmp(&b))
    });
    let mut sets = DisjointSets::new(graph.node_count());
    order
        .into_iter()
        .filter(|&e| sets.union(graph.edge(e).u, graph.edge(e).v))
        .collect()
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
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
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}
