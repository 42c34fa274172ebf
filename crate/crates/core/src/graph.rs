//! Weighted graphs carrying a response function per edge, the nonlinear
//! Laplacian, and the b/p feasibility residuals of the flow formulation.

use std::collections::{HashSet, VecDeque};
use std::ops::{Index, IndexMut};
use std::sync::Arc;

use thiserror::Error;

use crate::nonlinearity::Nonlinearity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge {edge}: endpoint {node} out of range for {n} nodes")]
    NodeOutOfRange { edge: usize, node: usize, n: usize },
    #[error("edge {edge}: self-loop on node {node}")]
    SelfLoop { edge: usize, node: usize },
    #[error("edge {edge}: duplicate of an earlier edge between {u} and {v}")]
    ParallelEdge { edge: usize, u: usize, v: usize },
    #[error("edge {edge}: weight must be positive and finite, got {weight}")]
    BadWeight { edge: usize, weight: f64 },
    #[error("expected a vector of length {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("b must sum to zero: sum is {sum:e}, tolerance {tol:e}")]
    UnbalancedDemand { sum: f64, tol: f64 },
    #[error("graph is not connected")]
    Disconnected,
}

#[derive(Debug, Clone)]
pub struct Edge {
    /// Canonical tail, always `u < v`.
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    pub response: Arc<Nonlinearity>,
}

/// Incidence of an edge at a node. `sign` is +1 when the node is the
/// canonical tail, so the flow leaving the node is `sign * g[edge]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub neighbor: usize,
    pub edge: usize,
    pub sign: i8,
}

#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<Incidence>>,
}

impl Graph {
    /// Builds a simple graph; edges given as `(u, v, weight, response)` in any
    /// orientation are stored once with `u < v`. Connectivity is not required
    /// here; see [`Graph::validate_instance`].
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64, Arc<Nonlinearity>)>,
    ) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut stored = Vec::new();
        let mut seen = HashSet::new();
        let mut adjacency = vec![Vec::new(); n];
        for (idx, (a, b, weight, response)) in edges.into_iter().enumerate() {
            for node in [a, b] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { edge: idx, node, n });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop { edge: idx, node: a });
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(GraphError::BadWeight { edge: idx, weight });
            }
            let (u, v) = (a.min(b), a.max(b));
            if !seen.insert((u, v)) {
                return Err(GraphError::ParallelEdge { edge: idx, u, v });
            }
            adjacency[u].push(Incidence { neighbor: v, edge: idx, sign: 1 });
            adjacency[v].push(Incidence { neighbor: u, edge: idx, sign: -1 });
            stored.push(Edge { u, v, weight, response });
        }
        Ok(Self {
            n,
            edges: stored,
            adjacency,
        })
    }

    /// Convenience constructor with one response shared by every edge.
    pub fn uniform(
        n: usize,
        edges: &[(usize, usize, f64)],
        response: Nonlinearity,
    ) -> Result<Self, GraphError> {
        let response = Arc::new(response);
        Self::new(n, edges.iter().map(|&(u, v, w)| (u, v, w, Arc::clone(&response))))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn incident(&self, node: usize) -> &[Incidence] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(node) = queue.pop_front() {
            for inc in &self.adjacency[node] {
                if !seen[inc.neighbor] {
                    seen[inc.neighbor] = true;
                    count += 1;
                    queue.push_back(inc.neighbor);
                }
            }
        }
        count == self.n
    }

    fn check_len(&self, len: usize, expected: usize) -> Result<(), GraphError> {
        if len == expected {
            Ok(())
        } else {
            Err(GraphError::DimensionMismatch { expected, actual: len })
        }
    }

    /// Rejects demand vectors of the wrong length or whose entries do not sum
    /// to zero within `1e-9 * max|b|`.
    pub fn check_demand(&self, b: &[f64]) -> Result<(), GraphError> {
        self.check_len(b.len(), self.n)?;
        let sum: f64 = b.iter().sum();
        let tol = 1e-9 * max_abs(b);
        if sum.abs() > tol {
            return Err(GraphError::UnbalancedDemand { sum, tol });
        }
        Ok(())
    }

    /// `(Lx)_i = Σ_j w_ij h_ij(x_i - x_j)`.
    pub fn apply_laplacian(&self, x: &[f64]) -> Result<Vec<f64>, GraphError> {
        self.check_len(x.len(), self.n)?;
        let mut out = vec![0.0; self.n];
        for e in &self.edges {
            let current = e.weight * e.response.h(x[e.u] - x[e.v]);
            out[e.u] += current;
            out[e.v] -= current;
        }
        Ok(out)
    }

    /// Net weighted response out of each node for the flow `g`.
    pub fn net_response(&self, g: &FlowState) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (e, &ge) in self.edges.iter().zip(g.as_slice()) {
            let current = e.weight * e.response.h(ge);
            out[e.u] += current;
            out[e.v] -= current;
        }
        out
    }

    /// Per-node residual `Σ_j w_ij h_ij(g_ij) - b_i`; zero iff `g` is b-feasible.
    pub fn b_residual(&self, g: &FlowState, b: &[f64]) -> Result<Vec<f64>, GraphError> {
        self.check_len(g.len(), self.edges.len())?;
        self.check_demand(b)?;
        let mut out = self.net_response(g);
        for (r, bi) in out.iter_mut().zip(b) {
            *r -= bi;
        }
        Ok(out)
    }

    /// Per-edge residual `g_uv - (x_u - x_v)`; zero iff `x` is a potential for `g`.
    pub fn p_residual(&self, g: &FlowState, x: &[f64]) -> Result<Vec<f64>, GraphError> {
        self.check_len(g.len(), self.edges.len())?;
        self.check_len(x.len(), self.n)?;
        Ok(self
            .edges
            .iter()
            .zip(g.as_slice())
            .map(|(e, &ge)| ge - (x[e.u] - x[e.v]))
            .collect())
    }

    /// Flow induced by potentials, `g_uv = x_u - x_v`.
    pub fn induced_flow(&self, x: &[f64]) -> Result<FlowState, GraphError> {
        self.check_len(x.len(), self.n)?;
        Ok(FlowState::from(
            self.edges.iter().map(|e| x[e.u] - x[e.v]).collect::<Vec<_>>(),
        ))
    }

    pub fn validate_instance(&self, b: &[f64]) -> InstanceReport {
        let mut failures = Vec::new();
        if !self.is_connected() {
            failures.push(GraphError::Disconnected);
        }
        for (idx, e) in self.edges.iter().enumerate() {
            if !(e.weight.is_finite() && e.weight > 0.0) {
                failures.push(GraphError::BadWeight { edge: idx, weight: e.weight });
            }
        }
        if let Err(err) = self.check_demand(b) {
            failures.push(err);
        }
        InstanceReport { failures }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstanceReport {
    pub failures: Vec<GraphError>,
}

impl InstanceReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn into_result(self) -> Result<(), GraphError> {
        match self.failures.into_iter().next() {
            Some(err) => Err(err),
            None => Ok(()),
        }
    }
}

/// Signed flow per canonical edge; `g_vu = -g_uv` is never stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowState(Vec<f64>);

impl FlowState {
    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Flow along `edge` when traversed in direction `sign`.
    #[inline]
    pub fn oriented(&self, edge: usize, sign: i8) -> f64 {
        f64::from(sign) * self.0[edge]
    }
}

impl From<Vec<f64>> for FlowState {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Index<usize> for FlowState {
    type Output = f64;

    fn index(&self, e: usize) -> &f64 {
        &self.0[e]
    }
}

impl IndexMut<usize> for FlowState {
    fn index_mut(&mut self, e: usize) -> &mut f64 {
        &mut self.0[e]
    }
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}
