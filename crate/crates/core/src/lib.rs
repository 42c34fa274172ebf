//! Solver for nonlinear graph Laplacian systems `L(x) = b`, where each edge
//! responds to the potential difference through its own monotone function:
//!
//! `(L x)_i = Σ_{j ~ i} w_ij h_ij(x_i - x_j)`.
//!
//! The solver works on edge flows `g`. It starts from a flow that balances
//! every node (supported on a spanning tree) and repeatedly rebalances the
//! fundamental cycles of that tree, chosen at random, each time minimizing
//! the convex energy `Φ(g) = Σ w_e ∫₀^{g_e} s h_e'(s) ds` along the cycle.
//! Once no cycle can lower the energy, the flow is a potential difference and
//! the tree-induced potentials solve the system.
//!
//! ```
//! use nlap::{Graph, Nonlinearity, SolverConfig};
//!
//! let graph = Graph::uniform(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], Nonlinearity::ArctanShift).unwrap();
//! let b = [1.0, -1.0, 0.0];
//! let report = nlap::solve(&graph, &b, &SolverConfig::new(0.1, 2.0, 7)).unwrap();
//! let applied = graph.apply_laplacian(&report.x_final).unwrap();
//! assert!((applied[0] - 1.0).abs() < 1e-3);
//! ```

// `!(x > y)` is used on purpose throughout so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod energy;
pub mod graph;
pub mod instance;
pub mod nonlinearity;
pub mod oracle;
pub mod solver;
pub mod spantree;

pub use energy::{EnergyBreakdown, LinearizedWeights};
pub use graph::{FlowState, Graph, GraphError};
pub use nonlinearity::{Nonlinearity, NonlinearityError};
pub use oracle::{reference_solve, OracleSolution};
pub use solver::{solve, SolveError, SolveReport, SolverConfig};
pub use spantree::{SpanningTree, TreeStrategy};
