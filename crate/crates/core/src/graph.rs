//! Typed property graph with deterministic k-hop neighborhood extraction.
//!
//! The graph is built once (single writer) and then shared read-only across
//! workers. Every ordering it exposes is lexicographic over canonical
//! identifiers, so downstream output never depends on insertion order.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("duplicate node `{0}`")]
    DuplicateNode(NodeId),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("self-loop on `{0}` rejected")]
    SelfLoop(NodeId),
    #[error("invalid node id {0:?}: must be non-empty and free of control characters")]
    InvalidNodeId(String),
    #[error("node `{0}` has an empty label")]
    EmptyLabel(NodeId),
    #[error("relation `{name}`: template {template:?} must contain {{head}} and {{tail}} exactly once")]
    InvalidPhrase { name: String, template: String },
    #[error("relation `{0}` already registered with different phrases")]
    ConflictingRelation(String),
}

/// Stable, totally ordered node identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    pub fn new(value: impl Into<String>) -> Result<Self, GraphError> {
        let value = value.into();
        if value.is_empty() || value.chars().any(char::is_control) {
            return Err(GraphError::InvalidNodeId(value));
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for NodeId {
    type Error = GraphError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> Self {
        id.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub label: String,
    pub node_type: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

impl Node {
    pub fn new(id: NodeId, label: impl Into<String>, node_type: impl Into<String>) -> Self {
        Self {
            id,
            label: label.into(),
            node_type: node_type.into(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attribute(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }
}

/// Number of occurrences of `{slot}` in a template.
pub fn slot_count(template: &str, slot: &str) -> usize {
    template.matches(&format!("{{{slot}}}")).count()
}

/// A relation name with its forward and inverse verbalization templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationType {
    pub name: String,
    pub forward_phrase: String,
    pub inverse_phrase: String,
}

impl RelationType {
    pub fn new(
        name: impl Into<String>,
        forward_phrase: impl Into<String>,
        inverse_phrase: impl Into<String>,
    ) -> Result<Self, GraphError> {
        let rel = Self {
            name: name.into(),
            forward_phrase: forward_phrase.into(),
            inverse_phrase: inverse_phrase.into(),
        };
        rel.validate()?;
        Ok(rel)
    }

    /// Phrases used when no template is configured for a relation.
    pub fn generic(name: impl Into<String>) -> Self {
        let name = name.into();
        let words = name.replace('_', " ");
        Self {
            forward_phrase: format!("{{head}} {words} {{tail}}"),
            inverse_phrase: format!("{{tail}} is the target of \"{words}\" from {{head}}"),
            name,
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for template in [&self.forward_phrase, &self.inverse_phrase] {
            if slot_count(template, "head") != 1 || slot_count(template, "tail") != 1 {
                return Err(GraphError::InvalidPhrase {
                    name: self.name.clone(),
                    template: template.clone(),
                });
            }
        }
        Ok(())
    }
}

/// A directed labeled edge. Ordered by `(relation, head, tail)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub head: NodeId,
    pub relation: String,
    pub tail: NodeId,
}

impl Edge {
    pub fn new(head: NodeId, relation: impl Into<String>, tail: NodeId) -> Self {
        Self {
            head,
            relation: relation.into(),
            tail,
        }
    }

    pub fn touches(&self, v: &NodeId) -> bool {
        &self.head == v || &self.tail == v
    }
}

impl Ord for Edge {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (&self.relation, &self.head, &self.tail).cmp(&(&other.relation, &other.head, &other.tail))
    }
}

impl PartialOrd for Edge {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Direction of an edge relative to the node a group is anchored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Outgoing,
    Incoming,
}

/// The k-hop neighborhood around `center`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSubgraph {
    pub center: NodeId,
    pub k: usize,
    pub edges: Vec<Edge>,
    pub nodes: BTreeSet<NodeId>,
}

impl ContextSubgraph {
    /// Builds a context from an arbitrary edge list, restoring the canonical
    /// edge order and the node set.
    pub fn from_edges(center: NodeId, k: usize, mut edges: Vec<Edge>) -> Self {
        edges.sort();
        edges.dedup();
        let mut nodes = BTreeSet::new();
        nodes.insert(center.clone());
        for e in &edges {
            nodes.insert(e.head.clone());
            nodes.insert(e.tail.clone());
        }
        Self {
            center,
            k,
            edges,
            nodes,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Edges sharing a relation and a fixed endpoint (`anchor`).
///
/// For outgoing groups the anchor is the head of every edge and `members`
/// are the tails; for incoming groups the anchor is the tail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationGroup {
    pub anchor: NodeId,
    pub direction: Direction,
    pub relation: String,
    pub members: Vec<NodeId>,
    pub edges: Vec<Edge>,
}

impl RelationGroup {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Groups the center-incident edges of `ctx` by (relation, direction).
///
/// Groups are sorted by relation name then direction (outgoing first) and
/// member lists by node id. Edges not touching the center are ignored.
pub fn relation_groups(ctx: &ContextSubgraph) -> Vec<RelationGroup> {
    let incident: Vec<Edge> = ctx.edges.iter().filter(|e| e.touches(&ctx.center)).cloned().collect();
    group_edges(&ctx.center, &incident)
}

/// Groups any edge list relative to `center`.
///
/// Center-incident edges come first, ordered as in [`relation_groups`].
/// The remaining edges follow as outgoing groups anchored on their head,
/// ordered by (relation, head).
pub fn group_edges(center: &NodeId, edges: &[Edge]) -> Vec<RelationGroup> {
    type Key = (String, Direction, NodeId);
    let mut central: BTreeMap<Key, Vec<Edge>> = BTreeMap::new();
    let mut peripheral: BTreeMap<(String, NodeId), Vec<Edge>> = BTreeMap::new();
    for e in edges {
        if &e.head == center {
            central
                .entry((e.relation.clone(), Direction::Outgoing, center.clone()))
                .or_default()
                .push(e.clone());
        } else if &e.tail == center {
            central
                .entry((e.relation.clone(), Direction::Incoming, center.clone()))
                .or_default()
                .push(e.clone());
        } else {
            peripheral
                .entry((e.relation.clone(), e.head.clone()))
                .or_default()
                .push(e.clone());
        }
    }

    let build = |anchor: NodeId, direction: Direction, relation: String, mut es: Vec<Edge>| {
        es.sort_by(|a, b| member_of(a, direction).cmp(member_of(b, direction)));
        es.dedup();
        RelationGroup {
            members: es.iter().map(|e| member_of(e, direction).clone()).collect(),
            anchor,
            direction,
            relation,
            edges: es,
        }
    };

    let mut out: Vec<RelationGroup> = central
        .into_iter()
        .map(|((rel, dir, anchor), es)| build(anchor, dir, rel, es))
        .collect();
    out.extend(
        peripheral
            .into_iter()
            .map(|((rel, head), es)| build(head, Direction::Outgoing, rel, es)),
    );
    out
}

fn member_of(e: &Edge, direction: Direction) -> &NodeId {
    match direction {
        Direction::Outgoing => &e.tail,
        Direction::Incoming => &e.head,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct EdgeKey {
    head: u32,
    relation: u32,
    tail: u32,
}

/// In-memory knowledge graph.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    nodes: Vec<Node>,
    index: HashMap<NodeId, u32>,
    relations: BTreeMap<String, RelationType>,
    relation_names: Vec<String>,
    relation_index: HashMap<String, u32>,
    edges: Vec<EdgeKey>,
    edge_set: HashSet<EdgeKey>,
    incident: Vec<Vec<u32>>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a relation. Re-registering an identical relation is a no-op.
    pub fn add_relation(&mut self, relation: RelationType) -> Result<(), GraphError> {
        relation.validate()?;
        if let Some(existing) = self.relations.get(&relation.name) {
            if existing == &relation {
                return Ok(());
            }
            return Err(GraphError::ConflictingRelation(relation.name));
        }
        self.relation_index
            .insert(relation.name.clone(), self.relation_names.len() as u32);
        self.relation_names.push(relation.name.clone());
        self.relations.insert(relation.name.clone(), relation);
        Ok(())
    }

    pub fn relation(&self, name: &str) -> Option<&RelationType> {
        self.relations.get(name)
    }

    /// Registered relations in name order.
    pub fn relations(&self) -> impl Iterator<Item = &RelationType> {
        self.relations.values()
    }

    pub fn add_node(&mut self, node: Node) -> Result<(), GraphError> {
        if node.label.trim().is_empty() {
            return Err(GraphError::EmptyLabel(node.id));
        }
        if self.index.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        self.index.insert(node.id.clone(), self.nodes.len() as u32);
        self.nodes.push(node);
        self.incident.push(Vec::new());
        Ok(())
    }

    /// Adds an edge. Returns `false` when the identical triple already exists.
    pub fn add_edge(&mut self, edge: Edge) -> Result<bool, GraphError> {
        let head = self.idx(&edge.head)?;
        let tail = self.idx(&edge.tail)?;
        let relation = *self
            .relation_index
            .get(&edge.relation)
            .ok_or_else(|| GraphError::UnknownRelation(edge.relation.clone()))?;
        if head == tail {
            return Err(GraphError::SelfLoop(edge.head));
        }
        let key = EdgeKey { head, relation, tail };
        if !self.edge_set.insert(key) {
            return Ok(false);
        }
        let ix = self.edges.len() as u32;
        self.edges.push(key);
        self.incident[head as usize].push(ix);
        self.incident[tail as usize].push(ix);
        Ok(true)
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.index.get(id).map(|&i| &self.nodes[i as usize])
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.index.contains_key(id)
    }

    pub fn label(&self, id: &NodeId) -> Option<&str> {
        self.node(id).map(|n| n.label.as_str())
    }

    pub fn contains_edge(&self, edge: &Edge) -> bool {
        self.key_of(edge).is_some_and(|k| self.edge_set.contains(&k))
    }

    /// Nodes in canonical id order.
    pub fn nodes_sorted(&self) -> Vec<&Node> {
        let mut out: Vec<&Node> = self.nodes.iter().collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// All edges in canonical `(relation, head, tail)` order.
    pub fn edges_sorted(&self) -> Vec<Edge> {
        let mut out: Vec<Edge> = self.edges.iter().map(|k| self.materialize(*k)).collect();
        out.sort();
        out
    }

    /// Edges incident to `v`, in canonical order.
    pub fn incident_edges(&self, v: &NodeId) -> Result<Vec<Edge>, GraphError> {
        let i = self.idx(v)?;
        let mut out: Vec<Edge> = self.incident[i as usize]
            .iter()
            .map(|&e| self.materialize(self.edges[e as usize]))
            .collect();
        out.sort();
        Ok(out)
    }

    /// Undirected neighbors of `v`.
    pub fn neighbors(&self, v: &NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
        let i = self.idx(v)?;
        Ok(self.incident[i as usize]
            .iter()
            .map(|&e| {
                let k = self.edges[e as usize];
                let other = if k.head == i { k.tail } else { k.head };
                self.nodes[other as usize].id.clone()
            })
            .collect())
    }

    /// Heads `h` with `(h, relation, tail)` in the graph.
    pub fn heads_of(&self, relation: &str, tail: &NodeId) -> BTreeSet<NodeId> {
        self.incident_edges(tail)
            .unwrap_or_default()
            .into_iter()
            .filter(|e| e.relation == relation && &e.tail == tail)
            .map(|e| e.head)
            .collect()
    }

    /// Tails `t` with `(head, relation, t)` in the graph.
    pub fn tails_of(&self, head: &NodeId, relation: &str) -> BTreeSet<NodeId> {
        self.incident_edges(head)
            .unwrap_or_default()
            .into_iter()
            .filter(|e| e.relation == relation && &e.head == head)
            .map(|e| e.tail)
            .collect()
    }

    /// Undirected BFS distances from `v`, truncated at `max_depth`.
    pub fn distances(&self, v: &NodeId, max_depth: usize) -> Result<HashMap<NodeId, usize>, GraphError> {
        let start = self.idx(v)?;
        Ok(self
            .bfs(start, max_depth)
            .into_iter()
            .map(|(i, d)| (self.nodes[i as usize].id.clone(), d))
            .collect())
    }

    fn bfs(&self, start: u32, max_depth: usize) -> HashMap<u32, usize> {
        let mut dist = HashMap::new();
        dist.insert(start, 0usize);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            if d == max_depth {
                continue;
            }
            for &e in &self.incident[u as usize] {
                let k = self.edges[e as usize];
                let w = if k.head == u { k.tail } else { k.head };
                if let std::collections::hash_map::Entry::Vacant(slot) = dist.entry(w) {
                    slot.insert(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// k-hop context of `v` on the undirected view.
    ///
    /// An edge is included iff both endpoints lie within distance `k` and at
    /// least one lies strictly inside (`< k`), so frontier-to-frontier edges
    /// are excluded.
    pub fn k_hop_context(&self, v: &NodeId, k: usize) -> Result<ContextSubgraph, GraphError> {
        let start = self.idx(v)?;
        let dist = self.bfs(start, k);
        let mut picked: HashSet<u32> = HashSet::new();
        for (&u, &d) in &dist {
            if d < k {
                // every neighbor of u sits at distance <= d + 1 <= k
                picked.extend(self.incident[u as usize].iter().copied());
            }
        }
        let edges = picked
            .into_iter()
            .map(|e| self.materialize(self.edges[e as usize]))
            .collect();
        Ok(ContextSubgraph::from_edges(v.clone(), k, edges))
    }

    /// Copy of the graph keeping every node and relation but only the edges
    /// accepted by `keep`.
    pub fn filter_edges(&self, mut keep: impl FnMut(&Edge) -> bool) -> KnowledgeGraph {
        let mut out = KnowledgeGraph {
            nodes: self.nodes.clone(),
            index: self.index.clone(),
            relations: self.relations.clone(),
            relation_names: self.relation_names.clone(),
            relation_index: self.relation_index.clone(),
            incident: vec![Vec::new(); self.nodes.len()],
            ..Default::default()
        };
        for &key in &self.edges {
            if keep(&self.materialize(key)) {
                let ix = out.edges.len() as u32;
                out.edges.push(key);
                out.edge_set.insert(key);
                out.incident[key.head as usize].push(ix);
                out.incident[key.tail as usize].push(ix);
            }
        }
        out
    }

    fn idx(&self, v: &NodeId) -> Result<u32, GraphError> {
        self.index
            .get(v)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(v.clone()))
    }

    fn key_of(&self, edge: &Edge) -> Option<EdgeKey> {
        Some(EdgeKey {
            head: *self.index.get(&edge.head)?,
            relation: *self.relation_index.get(&edge.relation)?,
            tail: *self.index.get(&edge.tail)?,
        })
    }

    fn materialize(&self, key: EdgeKey) -> Edge {
        Edge {
            head: self.nodes[key.head as usize].id.clone(),
            relation: self.relation_names[key.relation as usize].clone(),
            tail: self.nodes[key.tail as usize].id.clone(),
        }
    }
}
