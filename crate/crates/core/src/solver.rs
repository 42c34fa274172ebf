//! Randomized cycle-update solver.
//!
//! The solver keeps a b-feasible flow and repeatedly picks a non-tree edge
//! with probability proportional to `w_e / W_{C_e}`, then moves the flow
//! around that edge's tree cycle to (approximately) minimize the energy. A
//! cycle move by `t` shifts the weighted response of every cycle edge by the
//! same amount, which leaves every node balance unchanged.

use std::env;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::energy::{energy, tree_gap_unchecked};
use crate::graph::{max_abs, FlowState, Graph, GraphError};
use crate::nonlinearity::{AdmissibilityReport, Nonlinearity};
use crate::spantree::{OrientedEdge, SpanningTree, TreeError, TreeStrategy};

/// Environment variable that turns on a b-feasibility check after every
/// iteration instead of once per percent of the budget.
pub const CHECK_FEASIBILITY_ENV: &str = "NLAP_CHECK_FEASIBILITY";

// Cycle flows at or below this magnitude are treated as already balanced.
const TINY_CYCLE_FLOW: f64 = 1e-14;
const MAX_ROOT_STEPS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("edge {edge}: response `{response}` is not admissible for k = {k}")]
    Inadmissible {
        edge: usize,
        response: String,
        k: f64,
        report: Option<AdmissibilityReport>,
    },
    #[error("iteration budget {0:e} exceeds 2^63")]
    BudgetOverflow(f64),
    #[error("cycle update on edge {edge}: could not bracket the optimal shift")]
    Bracket { edge: usize },
    #[error("b-feasibility lost at iteration {iteration}: residual {residual:e}")]
    FeasibilityLost { iteration: u64, residual: f64 },
}

impl SolveError {
    /// Internal invariant violations as opposed to bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Self::Bracket { .. } | Self::FeasibilityLost { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub k: f64,
    pub seed: u64,
    pub tree_strategy: TreeStrategy,
    /// Run exactly this many iterations instead of the computed budget.
    pub max_iterations_override: Option<u64>,
    /// Stop once `TGAP / Φ` drops to this threshold (checked at trace points).
    pub gap_early_exit: Option<f64>,
    /// Trace spacing in iterations; defaults to one percent of the run.
    pub trace_every: Option<u64>,
}

impl SolverConfig {
    pub fn new(epsilon: f64, k: f64, seed: u64) -> Self {
        Self {
            epsilon,
            k,
            seed,
            tree_strategy: TreeStrategy::default(),
            max_iterations_override: None,
            gap_early_exit: None,
            trace_every: None,
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(SolveError::Config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.k >= 1.0 && self.k.is_finite()) {
            return Err(SolveError::Config(format!("k must be >= 1, got {}", self.k)));
        }
        if self.max_iterations_override == Some(0) {
            return Err(SolveError::Config("max iterations must be positive".into()));
        }
        if self.trace_every == Some(0) {
            return Err(SolveError::Config("trace spacing must be positive".into()));
        }
        if let Some(gap) = self.gap_early_exit {
            if !(gap >= 0.0) {
                return Err(SolveError::Config(format!("gap threshold must be >= 0, got {gap}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub g_final: FlowState,
    /// Tree-induced potentials with the tree root pinned to 0.
    pub x_final: Vec<f64>,
    pub iterations: u64,
    /// `(iteration, Φ)`; non-increasing.
    pub energy_trace: Vec<(u64, f64)>,
    pub tgap_trace: Vec<(u64, f64)>,
    pub tau: f64,
    pub st: f64,
    pub s_budget: u64,
    pub seed: u64,
    pub tree_strategy: TreeStrategy,
    pub root: usize,
    pub final_energy: f64,
    pub final_tgap: f64,
    pub wall_time: Duration,
}

/// b-feasible flow supported on the tree, by leaf elimination towards the root.
pub fn init_tree_flow(graph: &Graph, tree: &SpanningTree, b: &[f64]) -> Result<FlowState, GraphError> {
    graph.check_demand(b)?;
    let mut demand = b.to_vec();
    let mut g = FlowState::zeros(graph.edge_count());
    for &node in tree.bfs_order()[1..].iter().rev() {
        let e = tree.parent_edge(node).expect("non-root node has a parent edge");
        let edge = graph.edge(e);
        let oriented = edge.response.h_inv(demand[node] / edge.weight);
        g[e] = f64::from(tree.parent_sign(node)) * oriented;
        demand[tree.parent(node)] += demand[node];
    }
    Ok(g)
}

/// When to stop the search for the optimal cycle shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateTolerance {
    /// Stop once `|r(t)| <= |G_C| / (2k²)`.
    Relative { k: f64 },
    /// Stop once `|r(t)| <= tol`, or when the bracket can shrink no further.
    Absolute { k: f64, tol: f64 },
}

impl UpdateTolerance {
    fn k(&self) -> f64 {
        match *self {
            Self::Relative { k } | Self::Absolute { k, .. } => k,
        }
    }

    fn threshold(&self, cycle_flow: f64) -> f64 {
        match *self {
            Self::Relative { k } => cycle_flow.abs() / (2.0 * k * k),
            Self::Absolute { tol, .. } => tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleUpdate {
    /// Shift of the weighted response applied to every cycle edge.
    pub t: f64,
    /// `Φ(before) - Φ(after)`.
    pub energy_drop: f64,
    /// `G_C` before the update.
    pub cycle_flow: f64,
    /// `W_C` of the cycle.
    pub cycle_resistance: f64,
    /// Residual `r(t)`, the cycle flow after the update.
    pub residual: f64,
    /// False when the update was skipped (balanced cycle or no measurable gain).
    pub applied: bool,
}

/// Reusable buffers for cycle updates.
#[derive(Debug, Default)]
pub struct CycleUpdater {
    cycle: Vec<OrientedEdge>,
    base: Vec<f64>,
    shifted_h: Vec<f64>,
    inv_w: Vec<f64>,
    next: Vec<f64>,
}

impl CycleUpdater {
    pub fn new() -> Self {
        Self::default()
    }

    fn load(&mut self, graph: &Graph, tree: &SpanningTree, g: &FlowState, edge: usize) -> Result<(), TreeError> {
        tree.tree_cycle_into(graph, edge, &mut self.cycle)?;
        self.base.clear();
        self.shifted_h.clear();
        self.inv_w.clear();
        for oe in &self.cycle {
            let e = graph.edge(oe.edge);
            let v = g.oriented(oe.edge, oe.sign);
            self.base.push(v);
            self.shifted_h.push(e.response.h(v));
            self.inv_w.push(1.0 / e.weight);
        }
        Ok(())
    }

    // r(t) and r'(t); fills `next` with the shifted oriented flows.
    fn residual(&mut self, graph: &Graph, cycle_flow: f64, t: f64) -> (f64, f64) {
        self.next.clear();
        let mut r = cycle_flow;
        let mut slope = 0.0;
        for (i, oe) in self.cycle.iter().enumerate() {
            let h = &graph.edge(oe.edge).response;
            let moved = h.h_inv(self.shifted_h[i] + t * self.inv_w[i]);
            r += moved - self.base[i];
            slope += self.inv_w[i] / h.h_prime(moved);
            self.next.push(moved);
        }
        (r, slope)
    }

    /// Moves `g` around the tree cycle of `edge` towards the energy minimum
    /// along that cycle.
    pub fn update(
        &mut self,
        graph: &Graph,
        tree: &SpanningTree,
        g: &mut FlowState,
        edge: usize,
        tolerance: UpdateTolerance,
    ) -> Result<CycleUpdate, SolveError> {
        self.load(graph, tree, g, edge)?;
        let cycle_flow: f64 = self.base.iter().sum();
        let cycle_resistance = 1.0 / self.inv_w.iter().sum::<f64>();
        let mut outcome = CycleUpdate {
            t: 0.0,
            energy_drop: 0.0,
            cycle_flow,
            cycle_resistance,
            residual: cycle_flow,
            applied: false,
        };
        if cycle_flow.abs() <= TINY_CYCLE_FLOW {
            return Ok(outcome);
        }

        let tol = tolerance.threshold(cycle_flow);
        let (t, residual) = self.find_shift(graph, edge, cycle_flow, cycle_resistance, tolerance.k(), tol)?;
        // Recompute the moved flows at the accepted shift.
        let (residual_check, _) = self.residual(graph, cycle_flow, t);
        debug_assert!(residual_check == residual);

        let drop: f64 = self
            .cycle
            .iter()
            .enumerate()
            .map(|(i, oe)| {
                let e = graph.edge(oe.edge);
                e.weight * e.response.phi_increment(self.next[i], self.base[i])
            })
            .sum();
        outcome.t = t;
        outcome.residual = residual;
        if !(drop > 0.0) {
            return Ok(outcome);
        }
        for (i, oe) in self.cycle.iter().enumerate() {
            g[oe.edge] = f64::from(oe.sign) * self.next[i];
        }
        outcome.energy_drop = drop;
        outcome.applied = true;
        Ok(outcome)
    }

    /// Safeguarded Newton iteration inside a bisection bracket on the strictly
    /// increasing residual `r(t) = G_C + Σ α_e(t)`.
    fn find_shift(
        &mut self,
        graph: &Graph,
        edge: usize,
        cycle_flow: f64,
        cycle_resistance: f64,
        k: f64,
        tol: f64,
    ) -> Result<(f64, f64), SolveError> {
        // r has slope in [1/(k W_C), k/W_C], so the root lies between 0 and -k W_C G_C.
        let mut far = -k * cycle_resistance * cycle_flow;
        let mut r_far = self.residual(graph, cycle_flow, far).0;
        let mut widen = 0;
        while r_far.signum() == cycle_flow.signum() && r_far.abs() > tol {
            widen += 1;
            if widen > 8 {
                return Err(SolveError::Bracket { edge });
            }
            far *= 2.0;
            r_far = self.residual(graph, cycle_flow, far).0;
        }
        if r_far.abs() <= tol {
            return Ok((far, r_far));
        }
        let (mut lo, mut hi) = if far < 0.0 { (far, 0.0) } else { (0.0, far) };

        let mut best = (0.0, cycle_flow);
        let (_, slope0) = self.residual(graph, cycle_flow, 0.0);
        let mut t = -cycle_flow / slope0;
        if !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }
        for _ in 0..MAX_ROOT_STEPS {
            let (r, slope) = self.residual(graph, cycle_flow, t);
            if r.abs() < best.1.abs() {
                best = (t, r);
            }
            if r.abs() <= tol {
                return Ok((t, r));
            }
            if r < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let newton = t - r / slope;
            t = if newton > lo && newton < hi && newton.is_finite() { newton } else { mid };
        }
        Ok(best)
    }
}

/// One cycle update on a fresh workspace, to relative accuracy `1/(2k²)`.
pub fn cycle_update(
    graph: &Graph,
    tree: &SpanningTree,
    g: &mut FlowState,
    edge: usize,
    k: f64,
) -> Result<CycleUpdate, SolveError> {
    CycleUpdater::new().update(graph, tree, g, edge, UpdateTolerance::Relative { k })
}

/// Applies the cycle move `α(C, t)` for an arbitrary shift `t`.
pub fn shift_cycle(
    graph: &Graph,
    tree: &SpanningTree,
    g: &mut FlowState,
    edge: usize,
    t: f64,
) -> Result<(), TreeError> {
    for oe in tree.tree_cycle(graph, edge)? {
        let e = graph.edge(oe.edge);
        let v = g.oriented(oe.edge, oe.sign);
        let moved = e.response.h_inv(e.response.h(v) + t / e.weight);
        g[oe.edge] = f64::from(oe.sign) * moved;
    }
    Ok(())
}

/// Samples non-tree edges with probability `w_e / (W_{C_e} τ(T))`.
#[derive(Debug, Clone)]
pub struct EdgeSampler {
    edges: Vec<usize>,
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
}

impl EdgeSampler {
    /// `None` when the graph has no non-tree edges.
    pub fn new(graph: &Graph, tree: &SpanningTree) -> Option<Self> {
        let edges = tree.non_tree_edges().to_vec();
        if edges.is_empty() {
            return None;
        }
        let tau = tree.tau();
        let probabilities: Vec<f64> = edges
            .iter()
            .map(|&e| {
                let w_c = tree.cycle_resistance(graph, e).expect("non-tree edge");
                graph.edge(e).weight / (w_c * tau)
            })
            .collect();
        let cumulative = probabilities
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Some(Self {
            edges,
            probabilities,
            cumulative,
        })
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.edges[idx.min(self.edges.len() - 1)]
    }
}

/// `S = ⌈2k²τ ln(k⁶ st τ / ε²)⌉`.
pub fn iteration_budget(k: f64, tau: f64, st: f64, epsilon: f64) -> Result<u64, SolveError> {
    for (name, v) in [("k", k), ("tau", tau), ("st", st)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(SolveError::Config(format!("{name} must be positive, got {v}")));
        }
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SolveError::Config(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let k2 = k * k;
    let log_arg = k2 * k2 * k2 * st * tau / (epsilon * epsilon);
    let s = (2.0 * k2 * tau * log_arg.ln()).ceil().max(0.0);
    if !(s < 2f64.powi(63)) {
        return Err(SolveError::BudgetOverflow(s));
    }
    Ok(s as u64)
}

fn check_admissible(graph: &Graph, k: f64) -> Result<(), SolveError> {
    let mut checked: Vec<&Arc<Nonlinearity>> = Vec::new();
    for (idx, e) in graph.edges().iter().enumerate() {
        if checked.iter().any(|c| Arc::ptr_eq(c, &e.response) || ***c == *e.response) {
            continue;
        }
        let inadmissible = |report| SolveError::Inadmissible {
            edge: idx,
            response: e.response.to_string(),
            k,
            report,
        };
        if e.response.k_bound() > k {
            return Err(inadmissible(None));
        }
        let report = e
            .response
            .validate_admissibility(k, &e.response.default_grid(100.0, 400))
            .map_err(|err| SolveError::Config(err.to_string()))?;
        if !report.passed() {
            return Err(inadmissible(Some(report)));
        }
        checked.push(&e.response);
    }
    Ok(())
}

fn feasibility_residual(graph: &Graph, g: &FlowState, b: &[f64]) -> f64 {
    let net = graph.net_response(g);
    net.iter().zip(b).fold(0.0f64, |acc, (r, bi)| acc.max((r - bi).abs()))
}

/// Runs the full algorithm: tree, tree flow, `S` sampled cycle updates, and
/// tree-induced potentials.
pub fn solve(graph: &Graph, b: &[f64], config: &SolverConfig) -> Result<SolveReport, SolveError> {
    let started = Instant::now();
    config.validate()?;
    graph.validate_instance(b).into_result()?;
    check_admissible(graph, config.k)?;

    let tree = SpanningTree::build(graph, config.tree_strategy)?;
    let mut g = init_tree_flow(graph, &tree, b)?;
    let (tau, st) = (tree.tau(), tree.total_stretch());

    let mut phi = energy(graph, &g);
    let mut energy_trace = vec![(0, phi)];
    let mut tgap_trace = vec![(0, tree_gap_unchecked(graph, &tree, &g))];
    let mut iterations = 0;
    let mut s_budget = 0;

    if let Some(sampler) = EdgeSampler::new(graph, &tree) {
        s_budget = iteration_budget(config.k, tau, st, config.epsilon)?;
        let total = config.max_iterations_override.unwrap_or(s_budget);
        let percent = total.div_ceil(100).max(1);
        let trace_every = config.trace_every.unwrap_or(percent);
        let check_every = if env::var_os(CHECK_FEASIBILITY_ENV).is_some() { 1 } else { percent };
        let feasibility_tol = 1e-9 * (1.0 + max_abs(b));

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut updater = CycleUpdater::new();
        let tolerance = UpdateTolerance::Relative { k: config.k };
        for it in 1..=total {
            let edge = sampler.sample(&mut rng);
            let step = updater.update(graph, &tree, &mut g, edge, tolerance)?;
            phi -= step.energy_drop;
            iterations = it;

            if it % check_every == 0 || it == total {
                let residual = feasibility_residual(graph, &g, b);
                if !(residual <= feasibility_tol) {
                    return Err(SolveError::FeasibilityLost { iteration: it, residual });
                }
            }
            if it % trace_every == 0 || it == total {
                let gap = tree_gap_unchecked(graph, &tree, &g);
                energy_trace.push((it, phi));
                tgap_trace.push((it, gap));
                if config.gap_early_exit.is_some_and(|thr| gap <= thr * phi) {
                    break;
                }
            }
        }
    }

    let x_final = tree.tree_potentials(&g);
    let final_energy = energy(graph, &g);
    let final_tgap = tree_gap_unchecked(graph, &tree, &g);
    Ok(SolveReport {
        g_final: g,
        x_final,
        iterations,
        energy_trace,
        tgap_trace,
        tau,
        st,
        s_budget,
        seed: config.seed,
        tree_strategy: config.tree_strategy,
        root: tree.root(),
        final_energy,
        final_tgap,
        wall_time: started.elapsed(),
    })
}
