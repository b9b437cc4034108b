//! Seeded synthetic graphs with the UMLS-style schema, for tests and
//! benchmarks.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Edge, KnowledgeGraph, Node, NodeId};
use crate::templates::TemplateSet;

const SYLLABLES: &[&str] = &[
    "al", "ba", "cor", "da", "en", "fi", "gal", "hex", "ium", "jo", "ka", "lin", "mo", "nex", "or", "pra", "quin",
    "ro", "sul", "ta", "ur", "vi", "xa", "zol",
];

fn word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    (0..syllables)
        .map(|_| *SYLLABLES.choose(rng).expect("non-empty"))
        .collect()
}

fn add_typed(g: &mut KnowledgeGraph, prefix: &str, node_type: &str, n: usize, rng: &mut ChaCha8Rng) -> Vec<NodeId> {
    (0..n)
        .map(|i| {
            let id = NodeId::new(format!("{prefix}:{i:04}")).expect("valid id");
            let label = format!("{} {i}", word(rng, 3));
            g.add_node(Node::new(id.clone(), label, node_type)).expect("fresh id");
            id
        })
        .collect()
}

fn umls_relations(g: &mut KnowledgeGraph, t: &TemplateSet) {
    for r in ["may treat", "may cause", "cause of", "risk factor of"] {
        g.add_relation(t.relation_type(r)).expect("builtin relation");
    }
}

/// Typed drug/disease/symptom graph with exactly `n_edges` distinct edges.
pub fn typed_graph(n_edges: usize, seed: u64) -> KnowledgeGraph {
    let t = TemplateSet::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = KnowledgeGraph::new();
    umls_relations(&mut g, &t);
    let scale = (n_edges / 4).max(8);
    let drugs = add_typed(&mut g, "drug", "drug", scale, &mut rng);
    let diseases = add_typed(&mut g, "disease", "disease", scale, &mut rng);
    let symptoms = add_typed(&mut g, "symptom", "symptom", scale / 2, &mut rng);
    let kinds: [(&str, &[NodeId], &[NodeId]); 4] = [
        ("may treat", &drugs, &diseases),
        ("may cause", &drugs, &symptoms),
        ("cause of", &diseases, &symptoms),
        ("risk factor of", &diseases, &diseases),
    ];
    while g.edge_count() < n_edges {
        let (rel, heads, tails) = kinds[rng.random_range(0..kinds.len())];
        let h = heads.choose(&mut rng).expect("non-empty").clone();
        let tl = tails.choose(&mut rng).expect("non-empty").clone();
        if h != tl {
            g.add_edge(Edge::new(h, rel, tl)).expect("valid edge");
        }
    }
    g
}

/// A disease hub with `degree` treating drugs plus `background` random
/// typed edges elsewhere.
pub fn hub_graph(degree: usize, background: usize, seed: u64) -> KnowledgeGraph {
    let mut g = typed_graph(background.max(8), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let hub = NodeId::new("disease:hub").expect("valid id");
    g.add_node(Node::new(hub.clone(), "Chronic hub syndrome", "disease"))
        .expect("fresh id");
    for i in 0..degree {
        let id = NodeId::new(format!("hubdrug:{i:04}")).expect("valid id");
        let label = format!("{} {} hydrochloride {i}", word(&mut rng, 3), word(&mut rng, 2));
        g.add_node(Node::new(id.clone(), label, "drug")).expect("fresh id");
        g.add_edge(Edge::new(id, "may treat", hub.clone())).expect("valid edge");
    }
    g
}

/// Untyped-looking random graph over the UMLS relations with `n_nodes`
/// nodes and up to `n_edges` edges; a few nodes get very high degree.
pub fn random_graph(n_nodes: usize, n_edges: usize, seed: u64) -> KnowledgeGraph {
    let t = TemplateSet::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = KnowledgeGraph::new();
    umls_relations(&mut g, &t);
    let ids = add_typed(&mut g, "n", "entity", n_nodes.max(2), &mut rng);
    let rels = ["may treat", "may cause", "cause of", "risk factor of"];
    let mut attempts = 0;
    while g.edge_count() < n_edges && attempts < n_edges * 20 {
        attempts += 1;
        // skew: a quarter of endpoints come from the first few nodes
        let pick = |rng: &mut ChaCha8Rng| {
            if rng.random_bool(0.25) {
                ids[rng.random_range(0..ids.len().min(3))].clone()
            } else {
                ids.choose(rng).expect("non-empty").clone()
            }
        };
        let (h, tl) = (pick(&mut rng), pick(&mut rng));
        if h != tl {
            let rel = rels[rng.random_range(0..rels.len())];
            g.add_edge(Edge::new(h, rel, tl)).expect("valid edge");
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typed_graph_has_exact_edge_count() {
        let g = typed_graph(500, 1);
        assert_eq!(g.edge_count(), 500);
        assert_eq!(
            crate::store::content_hash(&g),
            crate::store::content_hash(&typed_graph(500, 1))
        );
    }

    #[test]
    fn hub_degree() {
        let g = hub_graph(300, 50, 2);
        let hub = NodeId::new("disease:hub").unwrap();
        assert_eq!(g.incident_edges(&hub).unwrap().len(), 300);
    }

    #[test]
    fn random_graph_is_bounded() {
        let g = random_graph(200, 600, 3);
        assert_eq!(g.node_count(), 200);
        assert!(g.edge_count() <= 600 && g.edge_count() > 400);
    }
}
