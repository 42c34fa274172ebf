//! Instance generators and independent reference computations shared by the
//! integration suites. Nothing here calls into the solver paths it checks.
#![allow(dead_code)]

use std::collections::HashSet;
use std::sync::Arc;

use nlap::{FlowState, Graph, Nonlinearity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Built-in families paired with their smallest admissible k.
pub fn families() -> Vec<(&'static str, Nonlinearity, f64)> {
    vec![
        ("identity", Nonlinearity::Identity, 1.0),
        ("two_slope", Nonlinearity::two_slope(2.0).unwrap(), 2.0),
        ("arctan", Nonlinearity::ArctanShift, 2.0),
        (
            "piecewise",
            Nonlinearity::piecewise(&[(0.0, 0.5), (1.0, 1.0), (3.0, 2.0)]).unwrap(),
            2.0,
        ),
    ]
}

/// Connected simple graph: a random recursive tree plus distinct random chords.
pub fn random_edges<R: Rng>(rng: &mut R, n: usize, m: usize) -> Vec<(usize, usize, f64)> {
    assert!(n >= 2 && m >= n - 1 && m <= n * (n - 1) / 2);
    let mut seen = HashSet::new();
    let mut edges = Vec::with_capacity(m);
    for v in 1..n {
        let u = rng.random_range(0..v);
        seen.insert((u, v));
        edges.push((u, v, rng.random_range(0.5..2.0)));
    }
    while edges.len() < m {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let (u, v) = (a.min(b), a.max(b));
        if u != v && seen.insert((u, v)) {
            edges.push((u, v, rng.random_range(0.5..2.0)));
        }
    }
    edges
}

pub fn random_graph<R: Rng>(rng: &mut R, n: usize, m: usize, nl: &Nonlinearity) -> Graph {
    Graph::uniform(n, &random_edges(rng, n, m), nl.clone()).unwrap()
}

/// Graph whose edges draw their response from all built-in families.
pub fn mixed_graph<R: Rng>(rng: &mut R, n: usize, m: usize) -> Graph {
    let fams: Vec<Arc<Nonlinearity>> = families().into_iter().map(|f| Arc::new(f.1)).collect();
    let edges = random_edges(rng, n, m);
    Graph::new(
        n,
        edges
            .into_iter()
            .map(|(u, v, w)| (u, v, w, Arc::clone(&fams[rng.random_range(0..fams.len())]))),
    )
    .unwrap()
}

/// Zero-sum demand with entries of magnitude up to `scale`.
pub fn random_demand<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    let mut b: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    let mean = b.iter().sum::<f64>() / n as f64;
    for v in &mut b {
        *v -= mean;
    }
    let last = -b[..n - 1].iter().sum::<f64>();
    b[n - 1] = last;
    b
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

pub fn mean_shift(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
        forced: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || (forced == 0 && delta.abs() <= 15.0 * tol) {
            return left + right + delta / 15.0;
        }
        let forced = forced.saturating_sub(1);
        recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1, forced)
            + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1, forced)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    // A few forced levels keep a kink from hiding inside a lucky coarse estimate.
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 50, 6)
}

/// `∫₀^g s h'(s) ds` by quadrature of the derivative oracle.
pub fn phi_by_quadrature(nl: &Nonlinearity, g: f64) -> f64 {
    let integrand = |s: f64| s * nl.h_prime(s);
    adaptive_simpson(&integrand, 0.0, g, 1e-13)
}

/// Inverse of a strictly increasing `h` by plain bisection.
pub fn h_inv_by_bisection(nl: &Nonlinearity, y: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while nl.h(lo) > y {
        lo *= 2.0;
    }
    while nl.h(hi) < y {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if nl.h(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Linear Laplacian `L_ii = Σ w, L_ij = -w` as a dense matrix.
pub fn dense_laplacian(graph: &Graph) -> Vec<Vec<f64>> {
    let n = graph.node_count();
    let mut l = vec![vec![0.0; n]; n];
    for e in graph.edges() {
        l[e.u][e.u] += e.weight;
        l[e.v][e.v] += e.weight;
        l[e.u][e.v] -= e.weight;
        l[e.v][e.u] -= e.weight;
    }
    l
}

/// Solves the identity-response system with the last node pinned, by
/// Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
pub fn dense_linear_solve(graph: &Graph, b: &[f64]) -> Vec<f64> {
    let n = graph.node_count();
    let l = dense_laplacian(graph);
    let k = n - 1;
    let mut a: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut row = l[i][..k].to_vec();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for row in col + 1..k {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for c in col..=k {
                    a[row][c] -= factor * a[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..k).rev() {
        let mut s = a[row][k];
        for c in row + 1..k {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    x
}

/// Tree-path resistance by walking parent pointers one node at a time.
pub fn naive_path_resistance(graph: &Graph, tree: &nlap::SpanningTree, a: usize, b: usize) -> f64 {
    let mut ancestors_a = vec![a];
    let mut node = a;
    while node != tree.root() {
        node = tree.parent(node);
        ancestors_a.push(node);
    }
    let mut node = b;
    let mut res_b = 0.0;
    while !ancestors_a.contains(&node) {
        res_b += 1.0 / graph.edge(tree.parent_edge(node).unwrap()).weight;
        node = tree.parent(node);
    }
    let meet = node;
    let mut res_a = 0.0;
    let mut node = a;
    while node != meet {
        res_a += 1.0 / graph.edge(tree.parent_edge(node).unwrap()).weight;
        node = tree.parent(node);
    }
    res_a + res_b
}

/// Random b-feasible flow: tree flow plus random cycle moves.
pub fn random_feasible_flow<R: Rng>(
    rng: &mut R,
    graph: &Graph,
    tree: &nlap::SpanningTree,
    b: &[f64],
    moves: usize,
) -> FlowState {
    let mut g = nlap::solver::init_tree_flow(graph, tree, b).unwrap();
    let non_tree = tree.non_tree_edges();
    if non_tree.is_empty() {
        return g;
    }
    for _ in 0..moves {
        let e = non_tree[rng.random_range(0..non_tree.len())];
        let t = rng.random_range(-2.0..2.0);
        nlap::solver::shift_cycle(graph, tree, &mut g, e, t).unwrap();
    }
    g
}
