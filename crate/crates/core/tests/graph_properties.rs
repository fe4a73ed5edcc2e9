use std::collections::BTreeSet;

use mixobs::graph::{
    is_strongly_connected, link_connectivity, node_connectivity, scc_decompose, survives_removal, DirectedGraph,
};
use proptest::prelude::*;

fn digraph(max_nodes: usize) -> impl Strategy<Value = DirectedGraph> {
    (1..=max_nodes).prop_flat_map(|n| {
        proptest::collection::vec(any::<bool>(), n * n).prop_map(move |bits| {
            let mut g = DirectedGraph::new(n);
            for a in 0..n {
                for b in 0..n {
                    if a != b && bits[a * n + b] {
                        g.add_link(a, b).unwrap();
                    }
                }
            }
            g
        })
    })
}

fn reach(g: &DirectedGraph) -> Vec<Vec<bool>> {
    let n = g.node_count();
    let mut r = vec![vec![false; n]; n];
    for s in 0..n {
        let mut stack = vec![s];
        r[s][s] = true;
        while let Some(v) = stack.pop() {
            for w in g.out_neighbors(v) {
                if !r[s][w] {
                    r[s][w] = true;
                    stack.push(w);
                }
            }
        }
    }
    r
}

fn subsets(items: &[(usize, usize)], k: usize) -> Vec<Vec<(usize, usize)>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        for mut rest in subsets(&items[i + 1..], k - 1) {
            rest.push(x);
            out.push(rest);
        }
    }
    out
}

proptest! {
    #[test]
    fn scc_matches_mutual_reachability(g in digraph(10)) {
        let r = reach(&g);
        let scc = scc_decompose(&g);
        for a in 0..g.node_count() {
            for b in 0..g.node_count() {
                let same = scc.component_of(a) == scc.component_of(b);
                prop_assert_eq!(same, r[a][b] && r[b][a]);
            }
        }
        let total: usize = scc.components().iter().map(Vec::len).sum();
        prop_assert_eq!(total, g.node_count());
    }

    #[test]
    fn condensation_is_acyclic(g in digraph(10)) {
        let scc = scc_decompose(&g);
        prop_assert!(scc.topological_order().is_some());
        for (a, b) in scc.condensation().links() {
            prop_assert_ne!(a, b);
        }
    }

    #[test]
    fn parents_have_no_outgoing_condensation_links(g in digraph(10)) {
        let scc = scc_decompose(&g);
        for c in 0..scc.len() {
            let outgoing = scc.condensation().out_neighbors(c).into_iter().any(|d| d != c);
            prop_assert_eq!(scc.is_parent(c), !outgoing);
        }
    }

    #[test]
    fn link_connectivity_survives_fewer_removals(g in digraph(5)) {
        prop_assume!(g.node_count() >= 2);
        let k = link_connectivity(&g).unwrap();
        prop_assume!(k >= 1);
        let links: Vec<(usize, usize)> = g.links().collect();
        for removed in subsets(&links, k - 1) {
            let removed: BTreeSet<(usize, usize)> = removed.into_iter().collect();
            let sub = survives_removal(&g, &BTreeSet::new(), &removed).unwrap();
            prop_assert!(is_strongly_connected(&sub.graph), "removing {:?} disconnects", removed);
        }
    }

    #[test]
    fn node_connectivity_survives_fewer_removals(g in digraph(6)) {
        prop_assume!(g.node_count() >= 2);
        let k = node_connectivity(&g);
        prop_assume!(k >= 1);
        let nodes: Vec<(usize, usize)> = (0..g.node_count()).map(|v| (v, v)).collect();
        for removed in subsets(&nodes, k - 1) {
            let removed: BTreeSet<usize> = removed.into_iter().map(|(v, _)| v).collect();
            let sub = survives_removal(&g, &removed, &BTreeSet::new()).unwrap();
            prop_assert!(is_strongly_connected(&sub.graph), "removing {:?} disconnects", removed);
        }
    }

    #[test]
    fn connectivity_bounded_by_degree(g in digraph(8)) {
        prop_assume!(g.node_count() >= 2);
        let min_out = (0..g.node_count())
            .map(|v| g.out_neighbors(v).into_iter().filter(|&w| w != v).count())
            .min()
            .unwrap();
        let link = link_connectivity(&g).unwrap();
        prop_assert!(node_connectivity(&g) <= link);
        prop_assert!(link <= min_out);
    }
}
