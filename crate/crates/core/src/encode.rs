//! Text encodings of partitions: triples, relational groups, adjacency
//! lists, LLM rewriting and node descriptors.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{group_edges, Direction, Edge, KnowledgeGraph, NodeId, RelationGroup};
use crate::llm::{LlmClient, PromptRequest};
use crate::partition::Partition;
use crate::prompts::PromptSet;
use crate::templates::{fill, TemplateError, TemplateSet};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("node `{0}` has nothing to describe")]
    NoDescribableContent(NodeId),
    #[error("cannot encode an empty partition")]
    EmptyPartition,
}

impl EncodeError {
    pub fn missing_template(relation: &str) -> Self {
        EncodeError::Template(TemplateError::MissingTemplate(relation.to_string()))
    }
}

/// Template-only strategies a summarized encoding can wrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseStrategy {
    Triples,
    RelationalGroups,
    AdjacencyList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EncodingStrategy {
    Triples,
    RelationalGroups,
    AdjacencyList,
    Summarized(BaseStrategy),
    NodeDescriptors,
}

impl BaseStrategy {
    fn name(self) -> &'static str {
        match self {
            BaseStrategy::Triples => "triples",
            BaseStrategy::RelationalGroups => "groups",
            BaseStrategy::AdjacencyList => "adjacency",
        }
    }

    pub fn strategy(self) -> EncodingStrategy {
        match self {
            BaseStrategy::Triples => EncodingStrategy::Triples,
            BaseStrategy::RelationalGroups => EncodingStrategy::RelationalGroups,
            BaseStrategy::AdjacencyList => EncodingStrategy::AdjacencyList,
        }
    }
}

impl FromStr for BaseStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "triples" => Ok(BaseStrategy::Triples),
            "groups" => Ok(BaseStrategy::RelationalGroups),
            "adjacency" => Ok(BaseStrategy::AdjacencyList),
            other => Err(format!("unknown base strategy `{other}` (triples|groups|adjacency)")),
        }
    }
}

impl fmt::Display for EncodingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncodingStrategy::Triples => f.write_str("triples"),
            EncodingStrategy::RelationalGroups => f.write_str("groups"),
            EncodingStrategy::AdjacencyList => f.write_str("adjacency"),
            EncodingStrategy::Summarized(b) => write!(f, "summarized:{}", b.name()),
            EncodingStrategy::NodeDescriptors => f.write_str("descriptors"),
        }
    }
}

impl FromStr for EncodingStrategy {
    type Err = String;
    /// Accepts `triples`, `groups`, `adjacency`, `descriptors`,
    /// `summarized` (over groups) and `summarized:<base>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "descriptors" => Ok(EncodingStrategy::NodeDescriptors),
            "summarized" => Ok(EncodingStrategy::Summarized(BaseStrategy::RelationalGroups)),
            _ => match s.strip_prefix("summarized:") {
                Some(base) => Ok(EncodingStrategy::Summarized(base.parse()?)),
                None => s.parse::<BaseStrategy>().map(BaseStrategy::strategy).map_err(|_| {
                    format!("unknown strategy `{s}` (triples|groups|adjacency|summarized[:base]|descriptors)")
                }),
            },
        }
    }
}

impl Serialize for EncodingStrategy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EncodingStrategy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedContext {
    pub text: String,
    pub strategy: EncodingStrategy,
    pub center: NodeId,
    pub partition_index: usize,
    pub source_edges: Vec<Edge>,
    pub llm_cache_key: Option<String>,
    /// Set when an LLM step failed and the template text was kept.
    pub fallback: bool,
}

/// Joins labels as "A", "A and B", "A, B and C".
pub fn join_labels<S: AsRef<str>>(labels: &[S]) -> String {
    match labels {
        [] => String::new(),
        [one] => one.as_ref().to_string(),
        [init @ .., last] => {
            let head: Vec<&str> = init.iter().map(AsRef::as_ref).collect();
            format!("{} and {}", head.join(", "), last.as_ref())
        }
    }
}

/// Upper-cases the first character when it is a lower-case letter.
pub fn sentence_case(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if c.is_lowercase() => c.to_uppercase().chain(chars).collect(),
        _ => text.to_string(),
    }
}

fn terminate(mut text: String) -> String {
    if !text.ends_with(['.', '!', '?']) {
        text.push('.');
    }
    text
}

fn label<'g>(graph: &'g KnowledgeGraph, id: &NodeId) -> Result<&'g str, EncodeError> {
    graph.label(id).ok_or_else(|| EncodeError::UnknownNode(id.clone()))
}

pub fn triple_sentence(graph: &KnowledgeGraph, edge: &Edge, templates: &TemplateSet) -> Result<String, EncodeError> {
    let t = templates.get(&edge.relation)?;
    let text = fill(
        &t.relation.forward_phrase,
        &[("head", label(graph, &edge.head)?), ("tail", label(graph, &edge.tail)?)],
    );
    Ok(terminate(sentence_case(&text)))
}

pub fn group_sentence(
    graph: &KnowledgeGraph,
    group: &RelationGroup,
    templates: &TemplateSet,
) -> Result<String, EncodeError> {
    let t = templates.get(&group.relation)?;
    let members = group
        .members
        .iter()
        .map(|m| label(graph, m))
        .collect::<Result<Vec<_>, _>>()?;
    let joined = join_labels(&members);
    let anchor = label(graph, &group.anchor)?;
    let text = match group.direction {
        Direction::Outgoing => fill(&t.relation.forward_phrase, &[("head", anchor), ("tail", &joined)]),
        Direction::Incoming => fill(&t.relation.inverse_phrase, &[("head", &joined), ("tail", anchor)]),
    };
    Ok(terminate(sentence_case(&text)))
}

fn context(p: &Partition, index: usize, strategy: EncodingStrategy, text: String, edges: Vec<Edge>) -> EncodedContext {
    EncodedContext {
        text,
        strategy,
        center: p.center.clone(),
        partition_index: index,
        source_edges: edges,
        llm_cache_key: None,
        fallback: false,
    }
}

/// One context per edge, in partition edge order.
pub fn encode_triples(
    graph: &KnowledgeGraph,
    p: &Partition,
    index: usize,
    templates: &TemplateSet,
) -> Result<Vec<EncodedContext>, EncodeError> {
    if p.edges.is_empty() {
        return Err(EncodeError::EmptyPartition);
    }
    p.edges
        .iter()
        .map(|e| {
            let text = triple_sentence(graph, e, templates)?;
            Ok(context(p, index, EncodingStrategy::Triples, text, vec![e.clone()]))
        })
        .collect()
}

/// One context per relation group of the partition.
pub fn encode_relational_groups(
    graph: &KnowledgeGraph,
    p: &Partition,
    index: usize,
    templates: &TemplateSet,
) -> Result<Vec<EncodedContext>, EncodeError> {
    if p.edges.is_empty() {
        return Err(EncodeError::EmptyPartition);
    }
    group_edges(&p.center, &p.edges)
        .into_iter()
        .map(|g| {
            let text = group_sentence(graph, &g, templates)?;
            Ok(context(p, index, EncodingStrategy::RelationalGroups, text, g.edges))
        })
        .collect()
}

/// All group sentences of the partition as one paragraph.
pub fn encode_adjacency_list(
    graph: &KnowledgeGraph,
    p: &Partition,
    index: usize,
    templates: &TemplateSet,
) -> Result<EncodedContext, EncodeError> {
    let groups = encode_relational_groups(graph, p, index, templates)?;
    let text = groups.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join(" ");
    let edges = groups.into_iter().flat_map(|c| c.source_edges).collect();
    Ok(context(p, index, EncodingStrategy::AdjacencyList, text, edges))
}

pub fn encode_base(
    graph: &KnowledgeGraph,
    p: &Partition,
    index: usize,
    base: BaseStrategy,
    templates: &TemplateSet,
) -> Result<Vec<EncodedContext>, EncodeError> {
    match base {
        BaseStrategy::Triples => encode_triples(graph, p, index, templates),
        BaseStrategy::RelationalGroups => encode_relational_groups(graph, p, index, templates),
        BaseStrategy::AdjacencyList => Ok(vec![encode_adjacency_list(graph, p, index, templates)?]),
    }
}

/// Rewrites a template encoding through the LLM.
///
/// Only the text changes; provenance is copied from `base`. If the backend
/// fails (after its retries) or returns nothing, the base text is kept and
/// `fallback` is set.
pub fn encode_summarized(base: &EncodedContext, llm: &LlmClient, prompts: &PromptSet) -> EncodedContext {
    let strategy = match base.strategy {
        EncodingStrategy::Triples => EncodingStrategy::Summarized(BaseStrategy::Triples),
        EncodingStrategy::RelationalGroups => EncodingStrategy::Summarized(BaseStrategy::RelationalGroups),
        EncodingStrategy::AdjacencyList => EncodingStrategy::Summarized(BaseStrategy::AdjacencyList),
        other => other,
    };
    let request = PromptRequest::new(prompts.rewrite.clone(), base.text.clone());
    let mut out = EncodedContext {
        strategy,
        ..base.clone()
    };
    match llm.complete(&request) {
        Ok(c) if !c.text.trim().is_empty() => {
            out.text = c.text.trim().to_string();
            out.llm_cache_key = Some(c.cache_key);
        }
        Ok(_) => {
            tracing::warn!(center = %base.center, "empty rewrite, keeping template text");
            out.fallback = true;
        }
        Err(e) => {
            tracing::warn!(center = %base.center, error = %e, "rewrite failed, keeping template text");
            out.fallback = true;
        }
    }
    out
}

/// Splits an LLM topic answer into phrases.
pub fn parse_topics(answer: &str) -> Vec<String> {
    answer
        .split([',', ';', '\n'])
        .map(|t| {
            t.trim()
                .trim_start_matches(|c: char| c == '-' || c == '*' || c == '•' || c.is_ascii_digit() || c == ')')
                .trim_start_matches('.')
                .trim()
                .trim_end_matches('.')
                .trim()
                .to_string()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Describes `v` from its neighbors' abstracts or, failing that, from its
/// own attributes.
///
/// For a node adjacent to abstract-bearing nodes (an author and their
/// papers), each abstract is sent to the LLM for topic phrases; topics are
/// deduplicated case-insensitively and listed in case-insensitive order.
/// A failed topic request falls back to the paper node's label.
pub fn encode_node_descriptors(
    graph: &KnowledgeGraph,
    v: &NodeId,
    index: usize,
    llm: Option<&LlmClient>,
    prompts: &PromptSet,
) -> Result<EncodedContext, EncodeError> {
    let node = graph.node(v).ok_or_else(|| EncodeError::UnknownNode(v.clone()))?;
    let incident = graph
        .incident_edges(v)
        .map_err(|_| EncodeError::UnknownNode(v.clone()))?;
    let mut papers: BTreeMap<NodeId, Vec<Edge>> = BTreeMap::new();
    for e in incident {
        let other = if &e.head == v { &e.tail } else { &e.head };
        if graph.node(other).is_some_and(|n| n.attributes.contains_key("abstract")) {
            papers.entry(other.clone()).or_default().push(e);
        }
    }

    let mut out = EncodedContext {
        text: String::new(),
        strategy: EncodingStrategy::NodeDescriptors,
        center: v.clone(),
        partition_index: index,
        source_edges: Vec::new(),
        llm_cache_key: None,
        fallback: false,
    };

    if !papers.is_empty() {
        let mut topics: BTreeMap<String, String> = BTreeMap::new();
        let mut keys = Vec::new();
        for (paper_id, edges) in papers {
            let paper = graph.node(&paper_id).expect("neighbor exists");
            let abstract_text = &paper.attributes["abstract"];
            let request = PromptRequest::new(prompts.topics.clone(), abstract_text.clone()).with_max_output_tokens(128);
            let found = match llm.map(|c| c.complete(&request)) {
                Some(Ok(c)) => {
                    keys.push(c.cache_key);
                    parse_topics(&c.text)
                }
                Some(Err(e)) => {
                    tracing::warn!(node = %v, paper = %paper_id, error = %e, "topic extraction failed");
                    out.fallback = true;
                    vec![paper.label.clone()]
                }
                None => {
                    out.fallback = true;
                    vec![paper.label.clone()]
                }
            };
            for t in found {
                topics.entry(t.to_lowercase()).or_insert(t);
            }
            out.source_edges.extend(edges);
        }
        out.source_edges.sort();
        let list: Vec<String> = topics.into_values().collect();
        out.text = terminate(format!("{} has published on: {}", node.label, list.join(", ")));
        if !keys.is_empty() {
            out.llm_cache_key = Some(crate::store::sha256_hex(keys.join(",")));
        }
        return Ok(out);
    }

    if node.attributes.is_empty() {
        return Err(EncodeError::NoDescribableContent(v.clone()));
    }
    let fields: Vec<String> = node.attributes.iter().map(|(k, val)| format!("{k}: {val}")).collect();
    out.text = terminate(format!(
        "{} ({}). {}",
        sentence_case(&node.label),
        node.node_type,
        fields.join("; ")
    ));
    Ok(out)
}

/// Candidate `(head, relation, tail)` readings of a sentence produced by the
/// triples encoding, one per way the sentence matches a forward phrase.
///
/// The first character is matched case-insensitively because encoding
/// upper-cases it.
pub fn parse_triple_sentence(sentence: &str, templates: &TemplateSet) -> Vec<(String, String, String)> {
    let body = sentence.strip_suffix('.').unwrap_or(sentence);
    let mut variants = vec![body.to_string()];
    let lowered = {
        let mut c = body.chars();
        c.next()
            .map(|f| f.to_lowercase().chain(c).collect::<String>())
            .unwrap_or_default()
    };
    if lowered != body {
        variants.push(lowered);
    }
    let mut out = Vec::new();
    for t in templates.iter() {
        let phrase = &t.relation.forward_phrase;
        let (hp, tp) = (phrase.find("{head}").unwrap(), phrase.find("{tail}").unwrap());
        let head_first = hp < tp;
        let (first, second) = if head_first { (hp, tp) } else { (tp, hp) };
        let prefix = &phrase[..first];
        let middle = &phrase[first + 6..second];
        let suffix = &phrase[second + 6..];
        for v in &variants {
            let Some(rest) = v.strip_prefix(prefix).and_then(|r| r.strip_suffix(suffix)) else {
                continue;
            };
            for (pos, _) in rest.match_indices(middle) {
                let a = &rest[..pos];
                let b = &rest[pos + middle.len()..];
                if a.is_empty() || b.is_empty() {
                    continue;
                }
                let (h, tl) = if head_first { (a, b) } else { (b, a) };
                out.push((h.to_string(), t.relation.name.clone(), tl.to_string()));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Node, NodeId};
    use crate::llm::StubBackend;
    use std::sync::Arc;

    fn id(s: &str) -> NodeId {
        NodeId::new(s).unwrap()
    }

    fn umls() -> (KnowledgeGraph, TemplateSet) {
        let t = TemplateSet::builtin();
        let mut g = KnowledgeGraph::new();
        g.add_relation(t.relation_type("may treat")).unwrap();
        g.add_relation(t.relation_type("may cause")).unwrap();
        for (n, ty) in [
            ("insulin", "drug"),
            ("metformin", "drug"),
            ("diabetes", "disease"),
            ("hyperglycemia", "disease"),
            ("nausea", "symptom"),
        ] {
            g.add_node(Node::new(id(n), n, ty)).unwrap();
        }
        for (h, r, tl) in [
            ("insulin", "may treat", "diabetes"),
            ("metformin", "may treat", "diabetes"),
            ("insulin", "may treat", "hyperglycemia"),
            ("metformin", "may cause", "nausea"),
        ] {
            g.add_edge(Edge::new(id(h), r, id(tl))).unwrap();
        }
        (g, t)
    }

    fn partition_of(g: &KnowledgeGraph, center: &str) -> Partition {
        let ctx = g.k_hop_context(&id(center), 1).unwrap();
        crate::partition::partition_context(&ctx, 30).unwrap().remove(0)
    }

    #[test]
    fn joins() {
        assert_eq!(join_labels::<&str>(&[]), "");
        assert_eq!(join_labels(&["a"]), "a");
        assert_eq!(join_labels(&["a", "b"]), "a and b");
        assert_eq!(join_labels(&["a", "b", "c"]), "a, b and c");
    }

    #[test]
    fn triple_text() {
        let (g, t) = umls();
        let s = triple_sentence(&g, &Edge::new(id("insulin"), "may treat", id("diabetes")), &t).unwrap();
        assert_eq!(s, "Insulin may treat diabetes.");
    }

    #[test]
    fn triples_one_per_edge() {
        let (g, t) = umls();
        let p = partition_of(&g, "metformin");
        let out = encode_triples(&g, &p, 0, &t).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].source_edges, vec![p.edges[0].clone()]);
    }

    #[test]
    fn missing_template() {
        let (mut g, t) = umls();
        g.add_relation(crate::graph::RelationType::generic("odd")).unwrap();
        g.add_edge(Edge::new(id("insulin"), "odd", id("nausea"))).unwrap();
        let p = partition_of(&g, "nausea");
        assert!(matches!(
            encode_triples(&g, &p, 0, &t),
            Err(EncodeError::Template(TemplateError::MissingTemplate(r))) if r == "odd"
        ));
    }

    #[test]
    fn incoming_group_uses_inverse_phrase() {
        let (g, t) = umls();
        let p = partition_of(&g, "diabetes");
        let out = encode_relational_groups(&g, &p, 0, &t).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].text, "Diabetes is treated with insulin and metformin.");
    }

    #[test]
    fn groups_sorted_by_relation() {
        let (g, t) = umls();
        let p = partition_of(&g, "metformin");
        let out = encode_relational_groups(&g, &p, 0, &t).unwrap();
        let texts: Vec<&str> = out.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(
            texts,
            vec!["Metformin may cause nausea.", "Metformin may treat diabetes."]
        );
        let adj = encode_adjacency_list(&g, &p, 0, &t).unwrap();
        assert_eq!(adj.text, "Metformin may cause nausea. Metformin may treat diabetes.");
        assert_eq!(adj.source_edges.len(), 2);
    }

    #[test]
    fn one_edge_adjacency_matches_triple() {
        let (g, t) = umls();
        let p = partition_of(&g, "insulin");
        let one = Partition {
            edges: vec![p.edges[0].clone()],
            node_count: 2,
            ..p
        };
        let adj = encode_adjacency_list(&g, &one, 0, &t).unwrap();
        let tri = encode_triples(&g, &one, 0, &t).unwrap();
        assert_eq!(adj.text, tri[0].text);
    }

    #[test]
    fn summarized_replays_fixture_and_falls_back() {
        let stub = Arc::new(StubBackend::new());
        stub.register(
            "Hypoinsulinaemia",
            "Metformin may help with low insulin levels (hypoinsulinaemia).",
        );
        let client = LlmClient::new(stub);
        let base = EncodedContext {
            text: "Metformin may treat Hypoinsulinaemia.".into(),
            strategy: EncodingStrategy::Triples,
            center: id("metformin"),
            partition_index: 3,
            source_edges: vec![Edge::new(id("metformin"), "may treat", id("Hypoinsulinaemia"))],
            llm_cache_key: None,
            fallback: false,
        };
        let out = encode_summarized(&base, &client, &PromptSet::default());
        assert!(out.text.contains("low insulin levels (hypoinsulinaemia)"));
        assert_eq!(out.source_edges, base.source_edges);
        assert_eq!(out.partition_index, 3);
        assert!(out.llm_cache_key.is_some());
        assert_eq!(out.strategy, EncodingStrategy::Summarized(BaseStrategy::Triples));

        let down = LlmClient::new(Arc::new(StubBackend::disabled()));
        let fb = encode_summarized(&base, &down, &PromptSet::default());
        assert!(fb.fallback);
        assert_eq!(fb.text, base.text);
    }

    fn dblp() -> KnowledgeGraph {
        let t = TemplateSet::builtin();
        let mut g = KnowledgeGraph::new();
        g.add_relation(t.relation_type("authored")).unwrap();
        g.add_node(Node::new(id("author:ann"), "Ann Lee", "author")).unwrap();
        g.add_node(Node::new(id("author:bo"), "Bo", "author")).unwrap();
        g.add_node(Node::new(id("paper:1"), "Mining graphs", "paper").with_attribute("abstract", "ABSTRACT-ONE"))
            .unwrap();
        g.add_node(Node::new(id("paper:2"), "Graph stores", "paper").with_attribute("abstract", "ABSTRACT-TWO"))
            .unwrap();
        g.add_node(
            Node::new(id("diabetes"), "diabetes", "disease")
                .with_attribute("definition", "A chronic metabolic disease."),
        )
        .unwrap();
        g.add_edge(Edge::new(id("author:ann"), "authored", id("paper:1")))
            .unwrap();
        g.add_edge(Edge::new(id("author:ann"), "authored", id("paper:2")))
            .unwrap();
        g
    }

    #[test]
    fn descriptor_topics_sorted_and_deduped() {
        let g = dblp();
        let stub = Arc::new(StubBackend::new());
        stub.register("ABSTRACT-ONE", "graph mining");
        stub.register("ABSTRACT-TWO", "Graph Mining, databases");
        let client = LlmClient::new(stub);
        let d = encode_node_descriptors(&g, &id("author:ann"), 0, Some(&client), &PromptSet::default()).unwrap();
        assert_eq!(d.text, "Ann Lee has published on: databases, graph mining.");
        assert_eq!(d.source_edges.len(), 2);
    }

    #[test]
    fn descriptor_from_attributes_and_nothing() {
        let g = dblp();
        let d = encode_node_descriptors(&g, &id("diabetes"), 0, None, &PromptSet::default()).unwrap();
        assert!(d.text.contains("A chronic metabolic disease."));
        assert!(d.source_edges.is_empty());
        assert!(matches!(
            encode_node_descriptors(&g, &id("author:bo"), 0, None, &PromptSet::default()),
            Err(EncodeError::NoDescribableContent(_))
        ));
    }

    #[test]
    fn topic_parsing() {
        assert_eq!(
            parse_topics("- graph mining\n- databases."),
            vec!["graph mining", "databases"]
        );
        assert_eq!(parse_topics("1. a; 2. b"), vec!["a", "b"]);
    }

    #[test]
    fn parse_back_triples() {
        let (g, t) = umls();
        for e in g.edges_sorted() {
            let s = triple_sentence(&g, &e, &t).unwrap();
            let parsed = parse_triple_sentence(&s, &t);
            let want = (
                g.label(&e.head).unwrap().to_string(),
                e.relation.clone(),
                g.label(&e.tail).unwrap().to_string(),
            );
            assert!(parsed.contains(&want), "{s} -> {parsed:?}");
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            "triples",
            "groups",
            "adjacency",
            "descriptors",
            "summarized:triples",
            "summarized:adjacency",
        ] {
            assert_eq!(s.parse::<EncodingStrategy>().unwrap().to_string(), s);
        }
        assert_eq!(
            "summarized".parse::<EncodingStrategy>().unwrap(),
            EncodingStrategy::Summarized(BaseStrategy::RelationalGroups)
        );
        assert!("nope".parse::<EncodingStrategy>().is_err());
    }
}
