use std::collections::{BTreeMap, BTreeSet, VecDeque};

use kg2ft::encode::encode_triples;
use kg2ft::graph::{ContextSubgraph, Edge, KnowledgeGraph, NodeId};
use kg2ft::partition::{estimate_tokens, fit_to_budget, partition_context, PartitionError, TokenBudget};
use kg2ft::synth::{hub_graph, random_graph};
use kg2ft::templates::TemplateSet;
use proptest::prelude::*;

/// Plain BFS over an adjacency map built straight from the edge list.
fn oracle_distances(edges: &[Edge], start: &NodeId) -> BTreeMap<NodeId, usize> {
    let mut adj: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for e in edges {
        adj.entry(&e.head).or_default().push(&e.tail);
        adj.entry(&e.tail).or_default().push(&e.head);
    }
    let mut dist = BTreeMap::from([(start.clone(), 0)]);
    let mut q = VecDeque::from([start.clone()]);
    while let Some(u) = q.pop_front() {
        let d = dist[&u];
        for w in adj.get(&u).into_iter().flatten() {
            if !dist.contains_key(*w) {
                dist.insert((*w).clone(), d + 1);
                q.push_back((*w).clone());
            }
        }
    }
    dist
}

fn oracle_context(g: &KnowledgeGraph, v: &NodeId, k: usize) -> BTreeSet<Edge> {
    let edges = g.edges_sorted();
    let dist = oracle_distances(&edges, v);
    let d = |n: &NodeId| dist.get(n).copied().unwrap_or(usize::MAX);
    edges
        .into_iter()
        .filter(|e| {
            let (a, b) = (d(&e.head), d(&e.tail));
            a <= k && b <= k && a.min(b) < k
        })
        .collect()
}

#[test]
fn k_hop_matches_bfs_oracle() {
    let g = random_graph(200, 500, 11);
    for node in g.nodes_sorted() {
        let got: BTreeSet<Edge> = g.k_hop_context(&node.id, 2).unwrap().edges.into_iter().collect();
        assert_eq!(got, oracle_context(&g, &node.id, 2), "center {}", node.id);
    }
}

fn assert_disjoint_cover(ctx: &ContextSubgraph, n_max: usize) {
    let parts = partition_context(ctx, n_max).unwrap();
    let mut seen = BTreeSet::new();
    for p in &parts {
        assert!(p.node_count <= n_max, "{} nodes > {n_max}", p.node_count);
        let mut nodes = BTreeSet::from([ctx.center.clone()]);
        for e in &p.edges {
            assert!(seen.insert(e.clone()), "edge in two partitions: {e:?}");
            nodes.insert(e.head.clone());
            nodes.insert(e.tail.clone());
        }
        assert_eq!(nodes.len(), p.node_count);
    }
    assert_eq!(seen, ctx.edges.iter().cloned().collect::<BTreeSet<_>>());
}

#[test]
fn partitions_cover_skewed_contexts() {
    let g = random_graph(150, 700, 5);
    let mut checked = 0;
    for (i, node) in g.nodes_sorted().into_iter().enumerate() {
        for k in [1, 2] {
            let ctx = g.k_hop_context(&node.id, k).unwrap();
            if ctx.is_empty() {
                continue;
            }
            let n_max = 3 + (i * 7 + k) % 40;
            assert_disjoint_cover(&ctx, n_max);
            checked += 1;
        }
    }
    assert!(checked >= 300, "only {checked} contexts");
}

#[test]
fn floor_is_enforced() {
    let g = random_graph(30, 80, 2);
    let v = &g.nodes_sorted()[0].id;
    let ctx = g.k_hop_context(v, 2).unwrap();
    assert!(matches!(
        partition_context(&ctx, 2),
        Err(PartitionError::InvalidBudget(_))
    ));
}

#[test]
fn high_degree_hub_fits_budget() {
    let t = TemplateSet::builtin();
    let g = hub_graph(240, 40, 3);
    let hub = NodeId::new("disease:hub").unwrap();
    let ctx = g.k_hop_context(&hub, 1).unwrap();
    assert!(ctx.edges.len() >= 200);
    let budget = TokenBudget::new(64, 4.0).unwrap();
    let measure = |p: &kg2ft::partition::Partition| -> Result<usize, PartitionError> {
        // the whole partition verbalized as one block
        let text: Vec<String> = encode_triples(&g, p, 0, &t)
            .unwrap()
            .into_iter()
            .map(|c| c.text)
            .collect();
        Ok(estimate_tokens(&text.join(" "), 4.0))
    };
    let fitted = fit_to_budget(&ctx, 30, &budget, measure).unwrap();
    assert!(fitted.rounds >= 1);
    let mut seen = BTreeSet::new();
    for p in &fitted.partitions {
        if !p.oversized {
            assert!(measure(p).unwrap() <= 64);
        }
        for e in &p.edges {
            assert!(seen.insert(e.clone()));
        }
    }
    assert_eq!(seen.len(), ctx.edges.len());
}

#[test]
fn token_estimate_is_char_count_ratio() {
    for (text, cpt, want) in [
        ("", 4.0, 0),
        ("abcd", 4.0, 1),
        ("abcde", 4.0, 2),
        ("ééé", 1.5, 2),
        ("x", 0.5, 2),
    ] {
        assert_eq!(estimate_tokens(text, cpt), want, "{text:?}");
    }
}

proptest! {
    #[test]
    fn contexts_grow_with_k(seed in 0u64..500, pick in 0usize..60) {
        let g = random_graph(60, 120, seed);
        let v = g.nodes_sorted()[pick % g.node_count()].id.clone();
        let mut prev: BTreeSet<Edge> = BTreeSet::new();
        for k in 1..4 {
            let cur: BTreeSet<Edge> = g.k_hop_context(&v, k).unwrap().edges.into_iter().collect();
            prop_assert!(prev.is_subset(&cur));
            prev = cur;
        }
    }

    #[test]
    fn one_hop_is_incident_edges(seed in 0u64..500, pick in 0usize..60) {
        let g = random_graph(60, 150, seed);
        let v = g.nodes_sorted()[pick % g.node_count()].id.clone();
        let ctx: BTreeSet<Edge> = g.k_hop_context(&v, 1).unwrap().edges.into_iter().collect();
        let inc: BTreeSet<Edge> = g.incident_edges(&v).unwrap().into_iter().collect();
        prop_assert_eq!(ctx, inc);
    }

    #[test]
    fn estimate_tokens_matches_chars(s in "\\PC{0,200}", cpt in 1.0f64..8.0) {
        let n = s.chars().count() as f64;
        prop_assert_eq!(estimate_tokens(&s, cpt), (n / cpt).ceil() as usize);
    }

    #[test]
    fn partition_cover_any_budget(seed in 0u64..200, n_max in 3usize..50) {
        let g = random_graph(40, 160, seed);
        for node in g.nodes_sorted().into_iter().take(5) {
            let ctx = g.k_hop_context(&node.id, 2).unwrap();
            if !ctx.is_empty() {
                assert_disjoint_cover(&ctx, n_max);
            }
        }
    }
}
