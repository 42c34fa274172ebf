//! Dense reference solver for small instances.
//!
//! Works in potential space: damped Newton on `F(x) = L(x) - b` with the last
//! node pinned to 0. The Jacobian is the Laplacian with weights
//! `w_e h_e'(x_u - x_v)`, which is nonsingular once a node is pinned.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::energy::energy;
use crate::graph::{max_abs, FlowState, Graph, GraphError};
use crate::spantree::SpanningTree;

pub const MAX_NEWTON_STEPS: usize = 200;
const MAX_HALVINGS: usize = 60;
pub const MAX_ORACLE_NODES: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("instance has {0} nodes; the dense oracle handles at most {MAX_ORACLE_NODES}")]
    TooLarge(usize),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("Newton iteration did not converge: residual {residual:e} after {steps} steps")]
    NoConvergence { steps: usize, residual: f64 },
    #[error("singular Jacobian")]
    Singular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub g_star: FlowState,
    /// Optimal potentials with the last node pinned to 0.
    pub x_star: Vec<f64>,
    pub phi_star: f64,
    /// `max_i |L(x*)_i - b_i|`.
    pub kkt_residual: f64,
    pub newton_steps: usize,
}

fn residual(graph: &Graph, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = graph.apply_laplacian(x).expect("dimension checked");
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri -= bi;
    }
    r
}

fn reduced_jacobian(graph: &Graph, x: &[f64]) -> DMatrix<f64> {
    let pinned = graph.node_count() - 1;
    let mut jac = DMatrix::zeros(pinned, pinned);
    for e in graph.edges() {
        let c = e.weight * e.response.h_prime(x[e.u] - x[e.v]);
        if e.u < pinned {
            jac[(e.u, e.u)] += c;
        }
        if e.v < pinned {
            jac[(e.v, e.v)] += c;
        }
        if e.u < pinned && e.v < pinned {
            jac[(e.u, e.v)] -= c;
            jac[(e.v, e.u)] -= c;
        }
    }
    jac
}

pub fn reference_solve(graph: &Graph, b: &[f64], tol: f64) -> Result<OracleSolution, OracleError> {
    let n = graph.node_count();
    if n > MAX_ORACLE_NODES {
        return Err(OracleError::TooLarge(n));
    }
    if !(tol > 0.0) {
        return Err(OracleError::BadTolerance(tol));
    }
    graph.validate_instance(b).into_result()?;

    let target = tol * (1.0 + max_abs(b));
    let mut x = vec![0.0; n];
    let mut r = residual(graph, &x, b);
    let mut norm = max_abs(&r);
    let mut steps = 0;
    while norm > target {
        if steps == MAX_NEWTON_STEPS {
            return Err(OracleError::NoConvergence { steps, residual: norm });
        }
        steps += 1;
        let jac = reduced_jacobian(graph, &x);
        let rhs = DVector::from_iterator(n - 1, r[..n - 1].iter().map(|v| -v));
        let delta = jac.lu().solve(&rhs).ok_or(OracleError::Singular)?;

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(i, &xi)| if i < n - 1 { xi + scale * delta[i] } else { xi })
                .collect();
            let trial_r = residual(graph, &trial, b);
            let trial_norm = max_abs(&trial_r);
            if trial_norm < norm {
                x = trial;
                r = trial_r;
                norm = trial_norm;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(OracleError::NoConvergence { steps, residual: norm });
        }
    }

    let g_star = graph.induced_flow(&x)?;
    Ok(OracleSolution {
        phi_star: energy(graph, &g_star),
        g_star,
        x_star: x,
        kkt_residual: norm,
        newton_steps: steps,
    })
}

/// True iff every tree cycle carries flow of magnitude at most `tol`, which
/// certifies that `g` has a potential.
pub fn fundamental_cycle_certificate(graph: &Graph, tree: &SpanningTree, g: &FlowState, tol: f64) -> bool {
    tree.non_tree_edges().iter().all(|&e| {
        tree.cycle_flow(graph, g, e)
            .map(|flow| flow.abs() <= tol)
            .unwrap_or(false)
    })
}
