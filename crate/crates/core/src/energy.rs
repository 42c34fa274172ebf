//! Energy of a flow, its quadratic linearization, the Lagrangian dual and the
//! tree duality gap.

use thiserror::Error;

use crate::graph::{max_abs, FlowState, Graph, GraphError};
use crate::spantree::SpanningTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("flow is not b-feasible: max residual {residual:e} exceeds {tol:e}")]
    Infeasible { residual: f64, tol: f64 },
}

/// Absolute b-feasibility tolerance used by the dual and gap evaluations.
pub fn dual_feasibility_tol(b: &[f64]) -> f64 {
    1e-6 * (1.0 + max_abs(b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    pub total: f64,
    /// `w_e · phi_e(g_e)` per edge.
    pub per_edge: Vec<f64>,
}

/// `Φ(g) = Σ_e w_e phi_e(g_e)`.
pub fn total_energy(graph: &Graph, g: &FlowState) -> EnergyBreakdown {
    let per_edge: Vec<f64> = graph
        .edges()
        .iter()
        .zip(g.as_slice())
        .map(|(e, &ge)| e.weight * e.response.phi(ge))
        .collect();
    EnergyBreakdown {
        total: per_edge.iter().sum(),
        per_edge,
    }
}

pub fn energy(graph: &Graph, g: &FlowState) -> f64 {
    graph
        .edges()
        .iter()
        .zip(g.as_slice())
        .map(|(e, &ge)| e.weight * e.response.phi(ge))
        .sum()
}

/// Edge weights of the Laplacian linearized at a flow `ĝ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedWeights {
    pub w_hat: Vec<f64>,
}

/// `ŵ_e = w_e h_e(ĝ_e) / ĝ_e`, with the limit `w_e h_e'(0)` near zero.
pub fn linearized_weights(graph: &Graph, g_hat: &FlowState) -> LinearizedWeights {
    let w_hat = graph
        .edges()
        .iter()
        .zip(g_hat.as_slice())
        .map(|(e, &gh)| {
            if gh.abs() < 1e-12 {
                e.weight * e.response.h_prime(0.0)
            } else {
                e.weight * e.response.h(gh) / gh
            }
        })
        .collect();
    LinearizedWeights { w_hat }
}

/// Unit-response weights, i.e. the ordinary linear Laplacian of the graph.
pub fn plain_weights(graph: &Graph) -> LinearizedWeights {
    LinearizedWeights {
        w_hat: graph.edges().iter().map(|e| e.weight).collect(),
    }
}

/// `ξ̂(g) = Σ_e ŵ_e g_e² / 2`.
pub fn linearized_energy(weights: &LinearizedWeights, g: &FlowState) -> f64 {
    weights
        .w_hat
        .iter()
        .zip(g.as_slice())
        .map(|(w, ge)| w * ge * ge / 2.0)
        .sum()
}

/// `Σ_e ŵ_e (v_u - v_v)²`.
pub fn laplacian_quadratic_form(
    graph: &Graph,
    weights: &LinearizedWeights,
    v: &[f64],
) -> Result<f64, GraphError> {
    if v.len() != graph.node_count() {
        return Err(GraphError::DimensionMismatch {
            expected: graph.node_count(),
            actual: v.len(),
        });
    }
    Ok(graph
        .edges()
        .iter()
        .zip(&weights.w_hat)
        .map(|(e, w)| {
            let d = v[e.u] - v[e.v];
            w * d * d
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    /// `sqrt(Q(x - x*) / Q(x*))`.
    pub accuracy: f64,
    pub accuracy_sq: f64,
}

/// Relative error of `x` against `x_star` in the quadratic form of `weights`.
/// The form ignores constant shifts, so no alignment is needed. When `x*` is
/// constant the ratio is reported as 0 if `x` is also constant, else infinity.
pub fn accuracy(
    graph: &Graph,
    weights: &LinearizedWeights,
    x: &[f64],
    x_star: &[f64],
) -> Result<Accuracy, GraphError> {
    if x.len() != x_star.len() {
        return Err(GraphError::DimensionMismatch {
            expected: x_star.len(),
            actual: x.len(),
        });
    }
    let diff: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
    let num = laplacian_quadratic_form(graph, weights, &diff)?;
    let den = laplacian_quadratic_form(graph, weights, x_star)?;
    let accuracy_sq = if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(Accuracy {
        accuracy: accuracy_sq.sqrt(),
        accuracy_sq,
    })
}

fn require_feasible(graph: &Graph, g: &FlowState, b: &[f64]) -> Result<(), EnergyError> {
    let residual = max_abs(&graph.b_residual(g, b)?);
    let tol = dual_feasibility_tol(b);
    if residual > tol {
        return Err(EnergyError::Infeasible { residual, tol });
    }
    Ok(())
}

/// Lagrangian dual `Θ(x)` in the form that uses b-feasibility of `g`.
pub fn dual_value(graph: &Graph, x: &[f64], g: &FlowState, b: &[f64]) -> Result<f64, EnergyError> {
    require_feasible(graph, g, b)?;
    if x.len() != graph.node_count() {
        return Err(GraphError::DimensionMismatch {
            expected: graph.node_count(),
            actual: x.len(),
        }
        .into());
    }
    Ok(graph
        .edges()
        .iter()
        .zip(g.as_slice())
        .map(|(e, &ge)| {
            let gt = x[e.u] - x[e.v];
            e.weight * e.response.phi(gt) - e.weight * gt * (e.response.h(gt) - e.response.h(ge))
        })
        .sum())
}

/// Tree duality gap `TGAP(g)`, an upper bound on `Φ(g) - Φ(g*)`.
pub fn tree_gap(graph: &Graph, tree: &SpanningTree, g: &FlowState, b: &[f64]) -> Result<f64, EnergyError> {
    require_feasible(graph, g, b)?;
    Ok(tree_gap_unchecked(graph, tree, g))
}

/// [`tree_gap`] without the feasibility check, for callers that maintain
/// b-feasibility themselves.
pub fn tree_gap_unchecked(graph: &Graph, tree: &SpanningTree, g: &FlowState) -> f64 {
    let x = tree.tree_potentials(g);
    tree.non_tree_edges()
        .iter()
        .map(|&idx| {
            let e = graph.edge(idx);
            let d = x[e.u] - x[e.v];
            let ge = g[idx];
            let h = &e.response;
            // phi(g) - phi(d) evaluated as one increment to avoid cancellation.
            e.weight * (h.phi_increment(d, ge) + d * (h.h(d) - h.h(ge)))
        })
        // Folding from +0 keeps an exactly balanced state from reporting -0.
        .fold(0.0, |acc, term| acc + term)
}
