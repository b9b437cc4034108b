use std::path::PathBuf;

use kg2ft::ingest::{load_papers, load_triples, TripleFileSpec, REL_AUTHORED, REL_CITES, REL_PUBLISHED_IN};
use kg2ft::store;
use kg2ft::templates::TemplateSet;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn oracle() -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture("oracle.json")).unwrap()).unwrap()
}

fn n(v: &Value) -> usize {
    v.as_u64().unwrap() as usize
}

#[test]
fn typed_triples_match_oracle() {
    let o = &oracle()["typed_500"];
    let t = TemplateSet::builtin();
    let (g, report) = load_triples(&TripleFileSpec::new(fixture("typed_500.tsv")), &t).unwrap();
    assert_eq!(g.edge_count(), n(&o["edges"]));
    assert_eq!(g.node_count(), n(&o["nodes"]));
    assert_eq!(report.rows_read, n(&o["rows"]));
    assert!(report.is_conserved());
    let types: std::collections::BTreeSet<&str> = g.nodes_sorted().iter().map(|n| n.node_type.as_str()).collect();
    assert_eq!(types, ["disease", "drug", "symptom"].into_iter().collect());
}

#[test]
fn umls_mini_keeps_long_labels() {
    let o = &oracle()["umls_mini"];
    let t = TemplateSet::builtin();
    let (g, _) = load_triples(&TripleFileSpec::new(fixture("umls_mini.tsv")), &t).unwrap();
    assert_eq!(g.edge_count(), n(&o["edges"]));
    assert_eq!(g.node_count(), n(&o["nodes"]));
    assert!(g.nodes_sorted().iter().any(|n| n.label == "Insulin human, rDNA origin"));
}

#[test]
fn papers_match_oracle() {
    let o = &oracle()["dblp_50"];
    let t = TemplateSet::builtin();
    let (g, report) = load_papers(&fixture("dblp_50.jsonl"), 2, false, &t).unwrap();
    assert_eq!(report.rows_read, n(&o["rows"]));
    assert_eq!(report.rows_kept, n(&o["kept"]));
    assert_eq!(report.rows_dropped + report.rows_malformed, n(&o["dropped"]));
    assert!(report.is_conserved());
    assert_eq!(g.node_count(), n(&o["nodes"]));
    assert_eq!(g.edge_count(), n(&o["edges"]));
    let count = |rel: &str| g.edges_sorted().iter().filter(|e| e.relation == rel).count();
    assert_eq!(count(REL_AUTHORED), n(&o["authored"]));
    assert_eq!(count(REL_PUBLISHED_IN), n(&o["published_in"]));
    assert_eq!(count(REL_CITES), n(&o["cites"]));
    let of_type = |ty: &str| g.nodes_sorted().iter().filter(|n| n.node_type == ty).count();
    assert_eq!(of_type("paper"), n(&o["papers"]));
    assert_eq!(of_type("author"), n(&o["authors"]));
    assert_eq!(of_type("venue"), n(&o["venues"]));
}

#[test]
fn stored_graph_round_trips() {
    let t = TemplateSet::builtin();
    let (g, _) = load_papers(&fixture("dblp_50.jsonl"), 2, false, &t).unwrap();
    let bytes = store::to_bytes(&g);
    let back = store::read_graph(&bytes[..]).unwrap();
    assert_eq!(store::to_bytes(&back), bytes);
    assert_eq!(store::content_hash(&back), store::content_hash(&g));
}
