use std::collections::BTreeSet;

use ivproc::bench::patterns;
use ivproc::var::build_graph;
use ivproc::{check_instrument, CausalGraph, NodeSet, VarParams};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..8).prop_flat_map(|n| {
        let edge = (1..=n, 1..=n).prop_filter("no self loops", |(a, b)| a != b);
        (Just(n), prop::collection::vec(edge, 0..20))
    })
}

fn arb_subset(n: usize) -> impl Strategy<Value = NodeSet> {
    prop::collection::btree_set(1..=n, 1..=n).prop_map(|s| s.into_iter().collect())
}

fn graph_and_set() -> impl Strategy<Value = (CausalGraph, Vec<(usize, usize)>, NodeSet)> {
    arb_graph().prop_flat_map(|(n, edges)| {
        let g = CausalGraph::from_edges(n, edges.clone()).unwrap();
        (Just(g), Just(edges), arb_subset(n))
    })
}

// breadth-first search over the raw edge list
fn bfs(edges: &[(usize, usize)], start: &NodeSet) -> BTreeSet<usize> {
    let mut seen: BTreeSet<usize> = start.iter().collect();
    let mut frontier: Vec<usize> = start.iter().collect();
    while let Some(v) = frontier.pop() {
        for &(a, b) in edges {
            if a == v && seen.insert(b) {
                frontier.push(b);
            }
        }
    }
    seen
}

proptest! {
    #[test]
    fn descendants_match_bfs((g, edges, s) in graph_and_set()) {
        let de: BTreeSet<usize> = g.descendants(&s).unwrap().iter().collect();
        prop_assert_eq!(de, bfs(&edges, &s));
    }

    #[test]
    fn descendants_idempotent_and_extensive((g, _e, s) in graph_and_set()) {
        let de = g.descendants(&s).unwrap();
        prop_assert!(s.is_subset(&de));
        prop_assert_eq!(g.descendants(&de).unwrap(), de);
    }

    #[test]
    fn descendants_monotone((g, _e, s) in graph_and_set(), extra in 1usize..8) {
        let bigger = s.union(&[extra.min(g.n())].into());
        prop_assert!(g.descendants(&s).unwrap().is_subset(&g.descendants(&bigger).unwrap()));
    }

    #[test]
    fn parents_are_children_of_reversed((g, _e, s) in graph_and_set()) {
        prop_assert_eq!(g.parents(&s).unwrap(), g.reversed().children(&s).unwrap().union(&s));
    }

    #[test]
    fn whole_vertex_set_is_exogenous((g, _e, _s) in graph_and_set()) {
        prop_assert!(g.is_exogenous(&g.nodes()).unwrap());
    }

    #[test]
    fn build_graph_round_trips_support((n, edges) in arb_graph(), vals in prop::collection::vec(0.05f64..0.9, 20)) {
        let mut phi = DMatrix::zeros(n, n);
        for (k, &(from, to)) in edges.iter().enumerate() {
            phi[(to - 1, from - 1)] = vals[k % vals.len()];
        }
        let m = VarParams::var1(phi, DMatrix::identity(n, n)).unwrap();
        let g = build_graph(&m);
        let want: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
        let got: BTreeSet<(usize, usize)> = g.edges().collect();
        prop_assert_eq!(got, want);
    }
}

#[test]
fn single_instrument_pattern_is_valid() {
    let g = patterns::single_instrument().graph().unwrap();
    let r = check_instrument(&g, &[1].into(), &[2].into(), &[3].into()).unwrap();
    assert!(r.graph_valid());
    assert_eq!(r.failed_layer(), None);
}

#[test]
fn confounder_as_instrument_fails_descendant_parent() {
    let g = patterns::single_instrument().graph().unwrap();
    // 4 is a parent of both 2 and 3 but has no parents, so it is exogenous;
    // it also feeds 3 directly, which breaks the descendant-parent layer
    let r = check_instrument(&g, &[4].into(), &[2].into(), &[3].into()).unwrap();
    assert!(r.exogenous);
    assert!(!r.descendant_parent);
    assert_eq!(r.failed_layer(), Some("descendant-parent"));
}

#[test]
fn instrument_with_a_parent_is_not_exogenous() {
    let g = CausalGraph::from_edges(4, [(1, 2), (2, 3), (4, 2), (4, 3), (3, 1)]).unwrap();
    let r = check_instrument(&g, &[1].into(), &[2].into(), &[3].into()).unwrap();
    assert!(!r.exogenous);
    assert_eq!(r.failed_layer(), Some("exogeneity"));
}

#[test]
fn feedback_between_outcome_and_treatment_still_valid() {
    let g = patterns::single_instrument_feedback().graph().unwrap();
    let r = check_instrument(&g, &[1].into(), &[2].into(), &[3].into()).unwrap();
    assert!(r.graph_valid());
}

#[test]
fn experiment_patterns_are_valid_for_their_problems() {
    use ivproc::bench::ExperimentId::*;
    let cases = [
        (E1, patterns::single_instrument()),
        (E2, patterns::single_instrument_feedback()),
        (E3, patterns::two_instruments()),
        (E4, patterns::overidentified()),
    ];
    for (id, p) in cases {
        let prob = id.problem();
        let r = check_instrument(&p.graph().unwrap(), &prob.iv, &prob.a, &prob.b).unwrap();
        assert!(r.graph_valid(), "{id}: {r:?}");
    }
}

#[test]
fn overlapping_sets_are_rejected() {
    let g = patterns::single_instrument().graph().unwrap();
    assert!(check_instrument(&g, &[1].into(), &[1, 2].into(), &[3].into()).is_err());
    assert!(check_instrument(&g, &NodeSet::new(), &[2].into(), &[3].into()).is_err());
    assert!(g.descendants(&[9].into()).is_err());
}
