//! Canonical on-disk graph format (`graph.kgz`).
//!
//! Layout, UTF-8, `\n` line endings:
//!
//! ```text
//! kg2ft-graph 1
//! {"type":"relation","name":..,"forward_phrase":..,"inverse_phrase":..}   (sorted by name)
//! {"type":"node","id":..,"label":..,"node_type":..,"attributes":{..}}     (sorted by id)
//! {"type":"edge","head":..,"relation":..,"tail":..}                       (sorted by relation, head, tail)
//! ```
//!
//! Records are compact JSON with a fixed key order, so two graphs with the
//! same content always serialize to the same bytes regardless of how they
//! were built.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{Edge, GraphError, KnowledgeGraph, Node, RelationType};

pub const FORMAT_HEADER: &str = "kg2ft-graph";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad header {0:?}: expected `{FORMAT_HEADER} {FORMAT_VERSION}`")]
    BadHeader(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {source}")]
    Graph { line: usize, source: GraphError },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Relation(RelationType),
    Node(Node),
    Edge(Edge),
}

pub fn write_graph<W: Write>(graph: &KnowledgeGraph, mut out: W) -> Result<(), StoreError> {
    writeln!(out, "{FORMAT_HEADER} {FORMAT_VERSION}")?;
    for rel in graph.relations() {
        write_record(&mut out, &Record::Relation(rel.clone()))?;
    }
    for node in graph.nodes_sorted() {
        write_record(&mut out, &Record::Node(node.clone()))?;
    }
    for edge in graph.edges_sorted() {
        write_record(&mut out, &Record::Edge(edge))?;
    }
    out.flush()?;
    Ok(())
}

fn write_record<W: Write>(out: &mut W, record: &Record) -> Result<(), StoreError> {
    serde_json::to_writer(&mut *out, record).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn to_bytes(graph: &KnowledgeGraph) -> Vec<u8> {
    let mut buf = Vec::new();
    write_graph(graph, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn read_graph<R: BufRead>(input: R) -> Result<KnowledgeGraph, StoreError> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end() != format!("{FORMAT_HEADER} {FORMAT_VERSION}") {
        return Err(StoreError::BadHeader(header));
    }
    let mut graph = KnowledgeGraph::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let res = match record {
            Record::Relation(r) => graph.add_relation(r),
            Record::Node(n) => graph.add_node(n),
            Record::Edge(e) => graph.add_edge(e).map(|_| ()),
        };
        res.map_err(|source| StoreError::Graph { line: line_no, source })?;
    }
    Ok(graph)
}

pub fn from_bytes(bytes: &[u8]) -> Result<KnowledgeGraph, StoreError> {
    read_graph(bytes)
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Content hash of a graph: SHA-256 of its canonical serialization.
pub fn content_hash(graph: &KnowledgeGraph) -> String {
    sha256_hex(to_bytes(graph))
}
