mod common;

use common::{dense_laplacian, mixed_graph, naive_path_resistance, random_graph, rng};
use nlap::{FlowState, Nonlinearity, SpanningTree, TreeStrategy};
use proptest::prelude::*;
use rand::Rng;

const STRATEGIES: [TreeStrategy; 2] = [TreeStrategy::ShortestPathResistance, TreeStrategy::MinResistanceSpanning];

fn sizes() -> impl Strategy<Value = (usize, usize)> {
    (3usize..50).prop_flat_map(|n| (Just(n), (n - 1)..=(4 * n).min(n * (n - 1) / 2)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_output_sums_to_zero(seed in any::<u64>(), (n, m) in sizes()) {
        let mut r = rng(seed);
        let graph = mixed_graph(&mut r, n, m);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
        let lx = graph.apply_laplacian(&x).unwrap();
        let total: f64 = lx.iter().sum();
        let scale: f64 = lx.iter().map(|v| v.abs()).sum();
        prop_assert!(total.abs() <= 1e-10 * scale.max(1e-300));
    }

    #[test]
    fn identity_laplacian_matches_matrix(seed in any::<u64>(), (n, m) in sizes()) {
        let mut r = rng(seed);
        let graph = random_graph(&mut r, n, m, &Nonlinearity::Identity);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
        let lx = graph.apply_laplacian(&x).unwrap();
        let l = dense_laplacian(&graph);
        for i in 0..n {
            let expected: f64 = (0..n).map(|j| l[i][j] * x[j]).sum();
            let scale: f64 = (0..n).map(|j| (l[i][j] * x[j]).abs()).sum();
            prop_assert!((lx[i] - expected).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn induced_flow_balances_its_laplacian(seed in any::<u64>(), (n, m) in sizes()) {
        let mut r = rng(seed);
        let graph = mixed_graph(&mut r, n, m);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let g = graph.induced_flow(&x).unwrap();
        let b = graph.apply_laplacian(&x).unwrap();
        let res = graph.b_residual(&g, &b).unwrap();
        prop_assert!(common::max_abs(&res) <= 1e-10);
    }

    #[test]
    fn condition_number_identity(seed in any::<u64>(), (n, m) in sizes(), s in 0usize..2) {
        let graph = mixed_graph(&mut rng(seed), n, m);
        let tree = SpanningTree::build(&graph, STRATEGIES[s]).unwrap();
        // τ from its own definition, summed independently of the tree's cache.
        let tau: f64 = tree
            .non_tree_edges()
            .iter()
            .map(|&e| {
                let edge = graph.edge(e);
                let path = naive_path_resistance(&graph, &tree, edge.u, edge.v);
                edge.weight * (path + 1.0 / edge.weight)
            })
            .sum();
        let st: f64 = graph
            .edges()
            .iter()
            .map(|e| e.weight * naive_path_resistance(&graph, &tree, e.u, e.v))
            .sum();
        let identity = st + m as f64 - 2.0 * n as f64 + 2.0;
        prop_assert!((tau - identity).abs() <= 1e-9 * identity.abs().max(1.0));
        prop_assert!((tree.tau() - tau).abs() <= 1e-9 * tau.max(1.0));
        prop_assert!((tree.total_stretch() - st).abs() <= 1e-9 * st);
        prop_assert_eq!(tree.tree_edges().count(), n - 1);
    }

    #[test]
    fn lca_resistance_matches_walk(seed in any::<u64>(), n in 2usize..200, extra in 0usize..100, s in 0usize..2) {
        let m = (n - 1 + extra).min(n * (n - 1) / 2);
        let mut r = rng(seed);
        let graph = mixed_graph(&mut r, n, m);
        let tree = SpanningTree::build(&graph, STRATEGIES[s]).unwrap();
        for _ in 0..20 {
            let (a, b) = (r.random_range(0..n), r.random_range(0..n));
            let fast = tree.path_resistance(a, b);
            let slow = naive_path_resistance(&graph, &tree, a, b);
            prop_assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0), "{a}-{b}: {fast} vs {slow}");
        }
    }

    #[test]
    fn tree_cycles_are_simple_closed_walks(seed in any::<u64>(), (n, m) in sizes()) {
        let graph = mixed_graph(&mut rng(seed), n, m);
        let tree = SpanningTree::build(&graph, TreeStrategy::default()).unwrap();
        for &e in tree.non_tree_edges() {
            let cycle = tree.tree_cycle(&graph, e).unwrap();
            prop_assert_eq!(cycle[0].edge, e);
            let mut visited = Vec::new();
            let edge = graph.edge(e);
            let mut at = edge.u;
            for oe in &cycle {
                let ce = graph.edge(oe.edge);
                let (tail, head) = if oe.sign > 0 { (ce.u, ce.v) } else { (ce.v, ce.u) };
                prop_assert_eq!(tail, at);
                visited.push(tail);
                at = head;
            }
            prop_assert_eq!(at, edge.u);
            let mut sorted = visited.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), visited.len());
        }
    }

    #[test]
    fn tree_potentials_explain_tree_edges(seed in any::<u64>(), (n, m) in sizes()) {
        let mut r = rng(seed);
        let graph = mixed_graph(&mut r, n, m);
        let tree = SpanningTree::build(&graph, TreeStrategy::default()).unwrap();
        let g = FlowState::from((0..m).map(|_| r.random_range(-3.0..3.0)).collect::<Vec<_>>());
        let x = tree.tree_potentials(&g);
        prop_assert_eq!(x[tree.root()], 0.0);
        let p = graph.p_residual(&g, &x).unwrap();
        for e in tree.tree_edges() {
            prop_assert!(p[e].abs() <= 1e-12 * (1.0 + common::max_abs(&x)));
        }
    }
}

#[test]
fn stretch_examples() {
    let triangle = nlap::Graph::uniform(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], Nonlinearity::Identity).unwrap();
    let tree = SpanningTree::from_edges(&triangle, &[0, 1], 1).unwrap();
    assert_eq!(tree.stretch(), &[1.0, 1.0, 2.0]);
    assert_eq!(tree.total_stretch(), 4.0);
    assert_eq!(tree.tau(), 3.0);

    let square = nlap::Graph::uniform(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)], Nonlinearity::Identity)
        .unwrap();
    let tree = SpanningTree::from_edges(&square, &[0, 1, 2], 0).unwrap();
    assert_eq!(tree.stretch()[3], 3.0);
    assert_eq!(tree.total_stretch(), 6.0);
    assert_eq!(tree.tau(), 4.0);
}
