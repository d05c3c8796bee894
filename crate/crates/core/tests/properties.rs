use std::collections::BTreeSet;

use proptest::prelude::*;

use clustervis_core::graph::quotient_graph;
use clustervis_core::hierarchy::{ClusterTree, HierarchyConfig};
use clustervis_core::layout::{coarsen_layout, fr_layout, LayoutConfig};
use clustervis_core::modularity::{greedy_maximize, merge_delta, modularity, MaximizerConfig, Partition};
use clustervis_core::{Graph, NullDistribution};

/// Connected graph on `n` nodes: a random tree plus the listed extras.
fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (3..=max_n).prop_flat_map(|n| {
        let parents = (1..n).map(|v| 0..v).collect::<Vec<_>>();
        let extra = prop::collection::vec((0..n, 0..n), 0..2 * n);
        (Just(n), parents, extra).prop_map(|(n, parents, extra)| {
            let mut edges = BTreeSet::new();
            for (v, p) in parents.into_iter().enumerate() {
                edges.insert((p, v + 1));
            }
            for (u, v) in extra {
                if u != v {
                    edges.insert((u.min(v), u.max(v)));
                }
            }
            Graph::from_edges(n, edges).unwrap()
        })
    })
}

fn graph_and_labels(max_n: usize, k: usize) -> impl Strategy<Value = (Graph, Vec<usize>)> {
    graph_strategy(max_n).prop_flat_map(move |g| {
        let n = g.node_count();
        (Just(g), prop::collection::vec(0..k, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn modularity_is_bounded((g, labels) in graph_and_labels(14, 5)) {
        let q = modularity(&g, &labels).unwrap();
        prop_assert!((-0.5..1.0).contains(&q), "Q = {}", q);
        let single = modularity(&g, &vec![0; g.node_count()]).unwrap();
        prop_assert!(single.abs() < 1e-12);
    }

    #[test]
    fn merge_delta_matches_recomputation((g, labels) in graph_and_labels(14, 4)) {
        let p = Partition::new(&g, labels).unwrap();
        if p.cluster_count() >= 2 {
            let delta = merge_delta(&g, &p, 0, 1).unwrap();
            let merged: Vec<usize> = p.assignment().iter().map(|&c| if c == 1 { 0 } else { c }).collect();
            let after = modularity(&g, &merged).unwrap();
            prop_assert!((after - p.modularity() - delta).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_never_loses_to_trivial_partitions(g in graph_strategy(20), seed in any::<u64>()) {
        let best = greedy_maximize(&g, &MaximizerConfig::default().with_seed(seed)).unwrap();
        let singletons = Partition::singletons(&g).unwrap().modularity();
        prop_assert!(best.modularity() >= 0.0);
        prop_assert!(best.modularity() >= singletons);
        prop_assert!((best.modularity() - modularity(&g, best.assignment()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn p_value_is_monotone(samples in prop::collection::vec(-0.2f64..0.8, 1..60), a in -0.3f64..0.9, b in -0.3f64..0.9) {
        let nd = NullDistribution::from_samples(samples.clone(), 0);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(nd.p_value(hi) <= nd.p_value(lo));
        let floor = 1.0 / (samples.len() + 1) as f64;
        prop_assert!(nd.p_value(hi) >= floor && nd.p_value(lo) <= 1.0);
    }

    #[test]
    fn refine_undoes_coarsen((g, labels) in graph_and_labels(16, 5), picks in prop::collection::vec(any::<prop::sample::Index>(), 1..4)) {
        let best = Partition::new(&g, labels).unwrap();
        let mut tree = ClusterTree::from_best(&best, NullDistribution::external(-1.0), HierarchyConfig::default());
        for pick in picks {
            let tops = tree.top_level();
            if tops.len() < 2 {
                break;
            }
            let i = pick.index(tops.len());
            tree.push_merge(tops[i], tops[(i + 1) % tops.len()], 0.0).unwrap();
        }
        let start = tree.initial_view(&g).unwrap();
        for &id in &start.frontier {
            if tree.is_coarsenable(&start, id) {
                let parent = tree.nodes[id].parent.unwrap();
                let up = tree.coarsen_view(&g, &start, id).unwrap();
                let down = tree.refine_view(&g, &up, parent).unwrap();
                prop_assert_eq!(&down.frontier, &start.frontier);
                prop_assert_eq!(&down.assignment, &start.assignment);
            }
        }
    }

    #[test]
    fn coarsen_layout_keeps_others_and_total_size((g, labels) in graph_and_labels(16, 4), seed in any::<u64>()) {
        let p = Partition::new(&g, labels).unwrap();
        if p.cluster_count() >= 2 {
            let qg = quotient_graph(&g, &p).unwrap();
            let l = fr_layout(&qg, &LayoutConfig { seed, iterations: 40, ..LayoutConfig::default() });
            let merged = coarsen_layout(&l, &[0, 1], 1000).unwrap();
            prop_assert_eq!(merged.nodes.len(), l.nodes.len() - 1);
            let total: usize = merged.nodes.iter().map(|n| n.size).sum();
            prop_assert_eq!(total, g.node_count());
            for n in l.nodes.iter().filter(|n| n.id > 1) {
                prop_assert_eq!(merged.node(n.id), Some(n));
            }
        }
    }
}
