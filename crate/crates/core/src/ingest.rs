//! Corpus readers: delimited triple files (UMLS-shaped) and line-delimited
//! JSON paper records (DBLP-shaped).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, GraphError, KnowledgeGraph, Node, NodeId};
use crate::templates::TemplateSet;

pub const DEFAULT_NODE_TYPE: &str = "entity";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: malformed row: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("no data rows in {0}")]
    EmptyFile(PathBuf),
    #[error("invalid file spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Row accounting for one ingested file.
///
/// `rows_read == rows_kept + rows_dropped + rows_malformed` always holds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rows_dropped: usize,
    pub rows_malformed: usize,
    /// Dropped because the relation is outside the allow-list.
    pub filtered_relation: usize,
    pub duplicates: usize,
    pub self_loops: usize,
    /// Paper records dropped for missing fields or too few authors.
    pub incomplete: usize,
    /// Nodes given conflicting types by different rows (first wins).
    pub type_conflicts: usize,
    pub nodes: usize,
    pub edges: usize,
}

impl IngestReport {
    pub fn is_conserved(&self) -> bool {
        self.rows_read == self.rows_kept + self.rows_dropped + self.rows_malformed
    }
}

#[derive(Debug, Clone)]
pub struct TripleFileSpec {
    pub path: PathBuf,
    pub delimiter: char,
    /// Column indices of (head, relation, tail).
    pub columns: [usize; 3],
    /// Optional columns carrying the head and tail node types.
    pub type_columns: Option<[usize; 2]>,
    pub relations: Option<BTreeSet<String>>,
    /// Fail on the first malformed row instead of counting it.
    pub strict: bool,
}

impl TripleFileSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            delimiter: '\t',
            columns: [0, 1, 2],
            type_columns: Some([3, 4]),
            relations: None,
            strict: true,
        }
    }

    pub fn with_relations<I, S>(mut self, relations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.relations = Some(relations.into_iter().map(Into::into).collect());
        self
    }

    fn validate(&self) -> Result<(), IngestError> {
        let [h, r, t] = self.columns;
        if h == r || h == t || r == t {
            return Err(IngestError::InvalidSpec("columns must be distinct".into()));
        }
        if let Some([a, b]) = self.type_columns {
            if a == b || self.columns.contains(&a) || self.columns.contains(&b) {
                return Err(IngestError::InvalidSpec(
                    "type columns must be distinct from each other and from the triple columns".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Whitespace-collapsed, trimmed form of a label, used as its node id.
pub fn normalize_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path).map(BufReader::new).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct PendingNode {
    label: String,
    node_type: Option<String>,
}

/// Accumulates nodes so that types can be resolved before the graph is built.
#[derive(Default)]
struct NodeTable {
    nodes: BTreeMap<NodeId, PendingNode>,
    conflicts: usize,
}

impl NodeTable {
    fn touch(&mut self, id: &NodeId, label: &str, node_type: Option<&str>) {
        let entry = self.nodes.entry(id.clone()).or_insert_with(|| PendingNode {
            label: label.to_string(),
            node_type: None,
        });
        match (&entry.node_type, node_type) {
            (None, Some(t)) => entry.node_type = Some(t.to_string()),
            (Some(existing), Some(t)) if existing != t => self.conflicts += 1,
            _ => {}
        }
    }

    fn into_graph(self, graph: &mut KnowledgeGraph) -> Result<usize, GraphError> {
        for (id, pending) in self.nodes {
            let t = pending.node_type.unwrap_or_else(|| DEFAULT_NODE_TYPE.to_string());
            graph.add_node(Node::new(id, pending.label, t))?;
        }
        Ok(self.conflicts)
    }
}

/// Reads a delimited triple file.
pub fn load_triples(
    spec: &TripleFileSpec,
    templates: &TemplateSet,
) -> Result<(KnowledgeGraph, IngestReport), IngestError> {
    spec.validate()?;
    let reader = open(&spec.path)?;
    let mut report = IngestReport::default();
    let mut nodes = NodeTable::default();
    let mut triples: Vec<Edge> = Vec::new();
    let mut seen: BTreeSet<(NodeId, String, NodeId)> = BTreeSet::new();
    let mut relations: BTreeSet<String> = BTreeSet::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| IngestError::Io {
            path: spec.path.clone(),
            source,
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        report.rows_read += 1;
        let cols: Vec<&str> = line.split(spec.delimiter).collect();
        let parsed = parse_row(&cols, spec).map_err(|message| IngestError::MalformedRow { line: line_no, message });
        let row = match parsed {
            Ok(row) => row,
            Err(e) if spec.strict => return Err(e),
            Err(_) => {
                report.rows_malformed += 1;
                continue;
            }
        };
        if let Some(allow) = &spec.relations {
            if !allow.contains(&row.relation) {
                report.rows_dropped += 1;
                report.filtered_relation += 1;
                continue;
            }
        }
        if row.head_id == row.tail_id {
            report.rows_dropped += 1;
            report.self_loops += 1;
            continue;
        }
        if !seen.insert((row.head_id.clone(), row.relation.clone(), row.tail_id.clone())) {
            report.rows_dropped += 1;
            report.duplicates += 1;
            continue;
        }
        let template = templates.get(&row.relation).ok();
        let head_type = row.head_type.or_else(|| template.and_then(|t| t.head_type.clone()));
        let tail_type = row.tail_type.or_else(|| template.and_then(|t| t.tail_type.clone()));
        nodes.touch(&row.head_id, &row.head_label, head_type.as_deref());
        nodes.touch(&row.tail_id, &row.tail_label, tail_type.as_deref());
        relations.insert(row.relation.clone());
        triples.push(Edge::new(row.head_id, row.relation, row.tail_id));
        report.rows_kept += 1;
    }

    if report.rows_read == 0 {
        return Err(IngestError::EmptyFile(spec.path.clone()));
    }

    let mut graph = KnowledgeGraph::new();
    for r in &relations {
        graph.add_relation(templates.relation_type(r))?;
    }
    report.type_conflicts = nodes.into_graph(&mut graph)?;
    for e in triples {
        graph.add_edge(e)?;
    }
    report.nodes = graph.node_count();
    report.edges = graph.edge_count();
    Ok((graph, report))
}

struct Row {
    head_id: NodeId,
    head_label: String,
    relation: String,
    tail_id: NodeId,
    tail_label: String,
    head_type: Option<String>,
    tail_type: Option<String>,
}

fn parse_row(cols: &[&str], spec: &TripleFileSpec) -> Result<Row, String> {
    let [h, r, t] = spec.columns;
    let need = h.max(r).max(t) + 1;
    if cols.len() < need {
        return Err(format!("expected at least {need} columns, found {}", cols.len()));
    }
    let endpoint = |raw: &str| -> Result<(NodeId, String), String> {
        let label = raw.trim();
        let id = NodeId::new(normalize_label(label)).map_err(|e| e.to_string())?;
        Ok((id, label.to_string()))
    };
    let (head_id, head_label) = endpoint(cols[h])?;
    let (tail_id, tail_label) = endpoint(cols[t])?;
    let relation = cols[r].trim().to_string();
    if relation.is_empty() {
        return Err("empty relation".into());
    }
    let typed = |ix: usize| {
        cols.get(ix)
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(str::to_string)
    };
    let (head_type, tail_type) = match spec.type_columns {
        Some([a, b]) => (typed(a), typed(b)),
        None => (None, None),
    };
    Ok(Row {
        head_id,
        head_label,
        relation,
        tail_id,
        tail_label,
        head_type,
        tail_type,
    })
}

/// Paper ids may be written as strings or integers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecordId {
    Text(String),
    Number(i64),
}

impl std::fmt::Display for RecordId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RecordId::Text(s) => f.write_str(s),
            RecordId::Number(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub id: RecordId,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default, rename = "abstract")]
    pub abstract_text: Option<String>,
    #[serde(default)]
    pub venue: Option<String>,
    #[serde(default)]
    pub year: Option<serde_json::Value>,
    #[serde(default)]
    pub authors: Vec<String>,
    #[serde(default)]
    pub references: Vec<RecordId>,
}

pub const PAPER_NODE_TYPE: &str = "paper";
pub const AUTHOR_NODE_TYPE: &str = "author";
pub const VENUE_NODE_TYPE: &str = "venue";
pub const REL_AUTHORED: &str = "authored";
pub const REL_PUBLISHED_IN: &str = "published_in";
pub const REL_CITES: &str = "cites";

pub fn paper_node_id(id: &RecordId) -> Result<NodeId, GraphError> {
    NodeId::new(format!("paper:{}", normalize_label(&id.to_string())))
}

fn non_empty(s: &Option<String>) -> Option<&str> {
    s.as_deref().map(str::trim).filter(|s| !s.is_empty())
}

/// Reads line-delimited paper records.
///
/// Papers missing a title, abstract or venue, or with fewer than
/// `min_authors` distinct authors, are dropped. Citations are kept only when
/// both papers survive the filter.
pub fn load_papers(
    path: &Path,
    min_authors: usize,
    strict: bool,
    templates: &TemplateSet,
) -> Result<(KnowledgeGraph, IngestReport), IngestError> {
    let reader = open(path)?;
    let mut report = IngestReport::default();
    let mut kept: Vec<(NodeId, PaperRecord, Vec<String>)> = Vec::new();
    let mut paper_ids: BTreeSet<NodeId> = BTreeSet::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        report.rows_read += 1;
        let parsed = serde_json::from_str::<PaperRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|rec| paper_node_id(&rec.id).map(|id| (id, rec)).map_err(|e| e.to_string()));
        let (id, rec) = match parsed {
            Ok(v) => v,
            Err(message) if strict => return Err(IngestError::MalformedRecord { line: line_no, message }),
            Err(_) => {
                report.rows_malformed += 1;
                continue;
            }
        };
        let mut authors: Vec<String> = Vec::new();
        for a in &rec.authors {
            let a = a.trim();
            if !a.is_empty() && !authors.iter().any(|x| normalize_label(x) == normalize_label(a)) {
                authors.push(a.to_string());
            }
        }
        let complete = non_empty(&rec.title).is_some()
            && non_empty(&rec.abstract_text).is_some()
            && non_empty(&rec.venue).is_some()
            && authors.len() >= min_authors;
        if !complete {
            report.rows_dropped += 1;
            report.incomplete += 1;
            continue;
        }
        if !paper_ids.insert(id.clone()) {
            report.rows_dropped += 1;
            report.duplicates += 1;
            continue;
        }
        report.rows_kept += 1;
        kept.push((id, rec, authors));
    }

    let mut graph = KnowledgeGraph::new();
    for r in [REL_AUTHORED, REL_CITES, REL_PUBLISHED_IN] {
        graph.add_relation(templates.relation_type(r))?;
    }
    let mut people: BTreeMap<NodeId, String> = BTreeMap::new();
    let mut venues: BTreeMap<NodeId, String> = BTreeMap::new();
    let mut edges: Vec<Edge> = Vec::new();

    for (pid, rec, authors) in &kept {
        let title = non_empty(&rec.title).unwrap_or_default();
        let mut node = Node::new(pid.clone(), title, PAPER_NODE_TYPE);
        if let Some(abs) = non_empty(&rec.abstract_text) {
            node = node.with_attribute("abstract", abs);
        }
        match &rec.year {
            Some(serde_json::Value::Number(n)) => node = node.with_attribute("year", n.to_string()),
            Some(serde_json::Value::String(s)) if !s.trim().is_empty() => node = node.with_attribute("year", s.trim()),
            _ => {}
        }
        graph.add_node(node)?;

        let venue = non_empty(&rec.venue).unwrap_or_default();
        let vid = NodeId::new(format!("venue:{}", normalize_label(venue)))?;
        venues.entry(vid.clone()).or_insert_with(|| venue.to_string());
        edges.push(Edge::new(pid.clone(), REL_PUBLISHED_IN, vid));

        for a in authors {
            let aid = NodeId::new(format!("author:{}", normalize_label(a)))?;
            people.entry(aid.clone()).or_insert_with(|| a.clone());
            edges.push(Edge::new(aid, REL_AUTHORED, pid.clone()));
        }
        for r in &rec.references {
            let target = paper_node_id(r)?;
            if &target != pid && paper_ids.contains(&target) {
                edges.push(Edge::new(pid.clone(), REL_CITES, target));
            }
        }
    }
    for (id, label) in people {
        graph.add_node(Node::new(id, label, AUTHOR_NODE_TYPE))?;
    }
    for (id, label) in venues {
        graph.add_node(Node::new(id, label, VENUE_NODE_TYPE))?;
    }
    for e in edges {
        graph.add_edge(e)?;
    }
    report.nodes = graph.node_count();
    report.edges = graph.edge_count();
    Ok((graph, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn allow_list_drops_other_relations() {
        let f = write_tmp("insulin\tmay treat\tdiabetes\nA\tcites\tB\nmetformin\tmay treat\tdiabetes\n");
        let spec = TripleFileSpec::new(f.path()).with_relations(["may treat"]);
        let (g, report) = load_triples(&spec, &TemplateSet::builtin()).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(report.rows_read, 3);
        assert_eq!(report.rows_dropped, 1);
        assert_eq!(report.filtered_relation, 1);
        assert!(report.is_conserved());
        let diabetes = g.node(&NodeId::new("diabetes").unwrap()).unwrap();
        assert_eq!(diabetes.node_type, "disease");
    }

    #[test]
    fn two_column_row_is_malformed_with_line_number() {
        let f = write_tmp("# header comment\na\tr\tb\nonly\ttwo\n");
        let err = load_triples(&TripleFileSpec::new(f.path()), &TemplateSet::builtin()).unwrap_err();
        assert!(matches!(err, IngestError::MalformedRow { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn lenient_mode_counts_malformed() {
        let f = write_tmp("a\tr\tb\nonly\ttwo\nb\tr\tc\n");
        let mut spec = TripleFileSpec::new(f.path());
        spec.strict = false;
        let (_, report) = load_triples(&spec, &TemplateSet::builtin()).unwrap();
        assert_eq!(report.rows_malformed, 1);
        assert_eq!(report.rows_kept, 2);
        assert!(report.is_conserved());
    }

    #[test]
    fn empty_file() {
        let f = write_tmp("# nothing here\n\n");
        assert!(matches!(
            load_triples(&TripleFileSpec::new(f.path()), &TemplateSet::builtin()),
            Err(IngestError::EmptyFile(_))
        ));
    }

    #[test]
    fn labels_normalized_into_ids_and_duplicates_collapse() {
        let f = write_tmp(
            "Insulin human,  rDNA origin\tmay treat\tdiabetes\nInsulin human, rDNA origin\tmay treat\tdiabetes\nx\tmay treat\tx\n",
        );
        let (g, report) = load_triples(&TripleFileSpec::new(f.path()), &TemplateSet::builtin()).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(report.duplicates, 1);
        assert_eq!(report.self_loops, 1);
        let n = g.node(&NodeId::new("Insulin human, rDNA origin").unwrap()).unwrap();
        assert_eq!(n.label, "Insulin human,  rDNA origin");
    }

    #[test]
    fn explicit_type_columns_win() {
        let f = write_tmp("a\tmay treat\tb\tcompound\tcondition\n");
        let (g, _) = load_triples(&TripleFileSpec::new(f.path()), &TemplateSet::builtin()).unwrap();
        assert_eq!(g.node(&NodeId::new("a").unwrap()).unwrap().node_type, "compound");
        assert_eq!(g.node(&NodeId::new("b").unwrap()).unwrap().node_type, "condition");
    }

    #[test]
    fn single_paper_mapping() {
        let f = write_tmp(r#"{"id":"p1","title":"T","authors":["A","B"],"venue":"V","abstract":"X"}"#);
        let (g, report) = load_papers(f.path(), 2, true, &TemplateSet::builtin()).unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edge_count(), 3);
        assert_eq!(report.rows_kept, 1);
        let e = g.edges_sorted();
        assert!(e.contains(&Edge::new(
            NodeId::new("author:A").unwrap(),
            REL_AUTHORED,
            NodeId::new("paper:p1").unwrap()
        )));
        assert!(e.contains(&Edge::new(
            NodeId::new("paper:p1").unwrap(),
            REL_PUBLISHED_IN,
            NodeId::new("venue:V").unwrap()
        )));
    }

    #[test]
    fn single_author_paper_dropped() {
        let f = write_tmp(
            "{\"id\":1,\"title\":\"T\",\"authors\":[\"A\"],\"venue\":\"V\",\"abstract\":\"X\"}\n{\"id\":2,\"title\":\"U\",\"authors\":[\"A\",\"B\"],\"venue\":\"V\",\"abstract\":\"Y\",\"references\":[1,2]}\n",
        );
        let (g, report) = load_papers(f.path(), 2, true, &TemplateSet::builtin()).unwrap();
        assert_eq!(report.rows_dropped, 1);
        assert_eq!(report.incomplete, 1);
        // the citation to the dropped paper and the self-citation are discarded
        assert!(g.edges_sorted().iter().all(|e| e.relation != REL_CITES));
    }

    #[test]
    fn malformed_paper_record() {
        let f = write_tmp("{\"id\":1,\"title\":\"T\"}\nnot json\n");
        assert!(matches!(
            load_papers(f.path(), 2, true, &TemplateSet::builtin()),
            Err(IngestError::MalformedRecord { line: 2, .. })
        ));
    }
}
