//! Question-answer generation: fact recall, inverse fact recall and
//! multi-hop link prediction, in open-ended and multiple-choice form.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encode::join_labels;
use crate::graph::{Edge, KnowledgeGraph, NodeId};
use crate::ingest::normalize_label;
use crate::llm::{LlmClient, PromptRequest};
use crate::templates::{fill, lookup_slots, MultihopAnswer, TemplateError, TemplateSet};

pub const DEFAULT_SPLIT_RATIO: f64 = 0.7;
pub const DEFAULT_DISTRACTORS: usize = 4;

#[derive(Debug, Error)]
pub enum QaError {
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("only {available} distractors available for `{answer}`, need {needed}")]
    InsufficientDistractorPool {
        answer: NodeId,
        available: usize,
        needed: usize,
    },
    #[error("sample is already multiple choice")]
    AlreadyMultipleChoice,
    #[error("sample has no answer node")]
    NoAnswer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "fact")]
    FactRecall,
    #[serde(rename = "inverse")]
    InverseFactRecall,
    #[serde(rename = "multihop")]
    MultiHop,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::FactRecall, TaskKind::InverseFactRecall, TaskKind::MultiHop];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::FactRecall => "fact",
            TaskKind::InverseFactRecall => "inverse",
            TaskKind::MultiHop => "multihop",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fact" => Ok(TaskKind::FactRecall),
            "inverse" => Ok(TaskKind::InverseFactRecall),
            "multihop" => Ok(TaskKind::MultiHop),
            other => Err(format!("unknown task `{other}` (fact|inverse|multihop)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnswerFormat {
    #[serde(rename = "open")]
    OpenEnded,
    #[serde(rename = "mc")]
    MultipleChoice,
}

impl AnswerFormat {
    pub const ALL: [AnswerFormat; 2] = [AnswerFormat::OpenEnded, AnswerFormat::MultipleChoice];

    pub fn as_str(self) -> &'static str {
        match self {
            AnswerFormat::OpenEnded => "open",
            AnswerFormat::MultipleChoice => "mc",
        }
    }
}

impl fmt::Display for AnswerFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnswerFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(AnswerFormat::OpenEnded),
            "mc" => Ok(AnswerFormat::MultipleChoice),
            other => Err(format!("unknown format `{other}` (open|mc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTrace {
    pub base: u64,
    pub derived: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QASample {
    pub task: TaskKind,
    pub format: AnswerFormat,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_index: Option<usize>,
    /// The endpoint the question is asked about.
    pub query: NodeId,
    pub relation: String,
    /// Answer nodes in canonical order.
    pub answer_nodes: Vec<NodeId>,
    /// For collaborator questions, the node whose other heads are the answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub co_head_of: Option<NodeId>,
    pub source_edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_trace: Option<SeedTrace>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub paraphrased: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSplit {
    pub train_edges: BTreeSet<Edge>,
    pub test_edges: BTreeSet<Edge>,
    pub ratio: f64,
    pub seed: u64,
}

impl EdgeSplit {
    /// Every edge goes to training.
    pub fn all_train(graph: &KnowledgeGraph) -> Self {
        Self {
            train_edges: graph.edges_sorted().into_iter().collect(),
            test_edges: BTreeSet::new(),
            ratio: 1.0,
            seed: 0,
        }
    }

    pub fn is_train(&self, e: &Edge) -> bool {
        self.train_edges.contains(e)
    }
}

/// Number of training edges for `n` edges at `ratio`.
pub fn train_count(n: usize, ratio: f64) -> usize {
    // the epsilon keeps 0.7 * 100 from rounding down to 69
    ((ratio * n as f64) + 1e-9).floor() as usize
}

/// Shuffles the canonically ordered edges with ChaCha8 seeded by `seed` and
/// takes the first `floor(ratio * |E|)` as training edges.
pub fn split_edges(graph: &KnowledgeGraph, ratio: f64, seed: u64) -> Result<EdgeSplit, QaError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(QaError::InvalidRatio(ratio));
    }
    let mut edges = graph.edges_sorted();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    edges.shuffle(&mut rng);
    let n_train = train_count(edges.len(), ratio);
    let test: BTreeSet<Edge> = edges.split_off(n_train).into_iter().collect();
    Ok(EdgeSplit {
        train_edges: edges.into_iter().collect(),
        test_edges: test,
        ratio,
        seed,
    })
}

/// Per-sample seed: the first 8 bytes of SHA-256 over the base seed and
/// the given parts.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn labels(graph: &KnowledgeGraph, ids: &[NodeId]) -> Result<Vec<String>, QaError> {
    ids.iter()
        .map(|id| {
            graph
                .label(id)
                .map(str::to_string)
                .ok_or_else(|| QaError::UnknownNode(id.clone()))
        })
        .collect()
}

fn open_sample(task: TaskKind, question: String, answer: String, query: NodeId, relation: String) -> QASample {
    QASample {
        task,
        format: AnswerFormat::OpenEnded,
        question,
        answer,
        options: Vec::new(),
        correct_index: None,
        query,
        relation,
        answer_nodes: Vec::new(),
        co_head_of: None,
        source_edges: Vec::new(),
        seed_trace: None,
        paraphrased: false,
        fallback: false,
    }
}

/// Fact recall over `edges`: one question per (relation, tail) asking for
/// the heads. With `anchor` set, only groups whose tail is the anchor.
pub fn gen_fact_qa(
    graph: &KnowledgeGraph,
    edges: &[Edge],
    templates: &TemplateSet,
    anchor: Option<&NodeId>,
) -> Result<Vec<QASample>, QaError> {
    let mut groups: BTreeMap<(&str, &NodeId), Vec<&Edge>> = BTreeMap::new();
    for e in edges {
        if anchor.is_none_or(|a| a == &e.tail) {
            groups.entry((e.relation.as_str(), &e.tail)).or_default().push(e);
        }
    }
    groups
        .into_iter()
        .map(|((relation, tail), es)| {
            let t = templates.get(relation)?;
            let tail_label = graph.label(tail).ok_or_else(|| QaError::UnknownNode(tail.clone()))?;
            let mut heads: Vec<NodeId> = es.iter().map(|e| e.head.clone()).collect();
            heads.sort();
            heads.dedup();
            let question = fill(&t.question_forward, &[("tail", tail_label)]);
            let answer = join_labels(&labels(graph, &heads)?);
            let mut s = open_sample(
                TaskKind::FactRecall,
                question,
                answer,
                tail.clone(),
                relation.to_string(),
            );
            s.answer_nodes = heads;
            s.source_edges = sorted(es);
            Ok(s)
        })
        .collect()
}

/// Inverse fact recall over `edges`: one question per (relation, head)
/// asking for the tails. With `anchor` set, only groups whose head is the
/// anchor.
pub fn gen_inverse_qa(
    graph: &KnowledgeGraph,
    edges: &[Edge],
    templates: &TemplateSet,
    anchor: Option<&NodeId>,
) -> Result<Vec<QASample>, QaError> {
    let mut groups: BTreeMap<(&str, &NodeId), Vec<&Edge>> = BTreeMap::new();
    for e in edges {
        if anchor.is_none_or(|a| a == &e.head) {
            groups.entry((e.relation.as_str(), &e.head)).or_default().push(e);
        }
    }
    groups
        .into_iter()
        .map(|((relation, head), es)| {
            let t = templates.get(relation)?;
            let head_label = graph.label(head).ok_or_else(|| QaError::UnknownNode(head.clone()))?;
            let mut tails: Vec<NodeId> = es.iter().map(|e| e.tail.clone()).collect();
            tails.sort();
            tails.dedup();
            let question = fill(&t.question_inverse, &[("head", head_label)]);
            let answer = join_labels(&labels(graph, &tails)?);
            let mut s = open_sample(
                TaskKind::InverseFactRecall,
                question,
                answer,
                head.clone(),
                relation.to_string(),
            );
            s.answer_nodes = tails;
            s.source_edges = sorted(es);
            Ok(s)
        })
        .collect()
}

fn sorted(es: Vec<&Edge>) -> Vec<Edge> {
    let mut out: Vec<Edge> = es.into_iter().cloned().collect();
    out.sort();
    out.dedup();
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultihopReport {
    pub test_edges: usize,
    pub eligible: usize,
    pub skipped_disconnected: usize,
    /// Eligible edges whose question could not be filled or answered from
    /// the training graph (no lookup value, no co-heads).
    pub skipped_unanswerable: usize,
    pub skipped_missing_template: usize,
    pub questions: usize,
}

/// True iff `a` and `b` are joined by an undirected path of at most two
/// edges in `train`.
pub fn within_two_hops(train: &KnowledgeGraph, a: &NodeId, b: &NodeId) -> bool {
    let (Ok(na), Ok(nb)) = (train.neighbors(a), train.neighbors(b)) else {
        return false;
    };
    na.contains(b) || na.intersection(&nb).next().is_some()
}

fn lookup_values(train: &KnowledgeGraph, node: &NodeId, relation: &str) -> Result<Vec<String>, QaError> {
    let ids: Vec<NodeId> = train.tails_of(node, relation).into_iter().collect();
    labels(train, &ids)
}

/// Fills `{head}`, `{tail}` and lookup slots; `None` when a lookup slot has
/// no value in the training graph.
fn fill_multihop(
    train: &KnowledgeGraph,
    template: &str,
    head: &NodeId,
    tail: Option<&NodeId>,
) -> Result<Option<String>, QaError> {
    let mut owned: Vec<(String, String)> = Vec::new();
    owned.push((
        "head".into(),
        train
            .label(head)
            .ok_or_else(|| QaError::UnknownNode(head.clone()))?
            .into(),
    ));
    if let Some(t) = tail {
        owned.push((
            "tail".into(),
            train.label(t).ok_or_else(|| QaError::UnknownNode(t.clone()))?.into(),
        ));
    }
    for (endpoint, relation) in lookup_slots(template) {
        let node = match (endpoint.as_str(), tail) {
            ("head", _) => head,
            ("tail", Some(t)) => t,
            _ => return Ok(None),
        };
        let values = lookup_values(train, node, &relation)?;
        if values.is_empty() {
            return Ok(None);
        }
        owned.push((format!("{endpoint}.{relation}"), join_labels(&values)));
    }
    let slots: Vec<(&str, &str)> = owned.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    Ok(Some(fill(template, &slots)))
}

/// Multi-hop questions over the held-out edges of `split`.
///
/// `train` must be `graph` restricted to the training edges. A test edge is
/// eligible when its endpoints are at most two hops apart in `train`.
pub fn gen_multihop_qa(
    train: &KnowledgeGraph,
    split: &EdgeSplit,
    templates: &TemplateSet,
) -> Result<(Vec<QASample>, MultihopReport), QaError> {
    let mut report = MultihopReport {
        test_edges: split.test_edges.len(),
        ..Default::default()
    };
    let mut tail_groups: BTreeMap<(&NodeId, &str), Vec<&Edge>> = BTreeMap::new();
    let mut out = Vec::new();

    for e in &split.test_edges {
        if !within_two_hops(train, &e.head, &e.tail) {
            report.skipped_disconnected += 1;
            continue;
        }
        report.eligible += 1;
        let Ok(t) = templates.get(&e.relation) else {
            report.skipped_missing_template += 1;
            continue;
        };
        match t.multihop_answer {
            MultihopAnswer::Tail => tail_groups.entry((&e.head, e.relation.as_str())).or_default().push(e),
            MultihopAnswer::CoHeads => {
                let mut co: Vec<NodeId> = train.heads_of(&e.relation, &e.tail).into_iter().collect();
                co.retain(|h| h != &e.head);
                let Some(question) = fill_multihop(train, &t.question_multihop, &e.head, Some(&e.tail))? else {
                    report.skipped_unanswerable += 1;
                    continue;
                };
                if co.is_empty() {
                    report.skipped_unanswerable += 1;
                    continue;
                }
                let answer = join_labels(&labels(train, &co)?);
                let mut s = open_sample(TaskKind::MultiHop, question, answer, e.head.clone(), e.relation.clone());
                s.answer_nodes = co;
                s.co_head_of = Some(e.tail.clone());
                s.source_edges = vec![e.clone()];
                out.push(s);
            }
        }
    }

    for ((head, relation), es) in tail_groups {
        let t = templates.get(relation)?;
        let Some(question) = fill_multihop(train, &t.question_multihop, head, None)? else {
            report.skipped_unanswerable += es.len();
            continue;
        };
        let tails: Vec<NodeId> = es.iter().map(|e| e.tail.clone()).collect();
        let answer = join_labels(&labels(train, &tails)?);
        let mut s = open_sample(TaskKind::MultiHop, question, answer, head.clone(), relation.to_string());
        s.answer_nodes = tails;
        s.source_edges = sorted(es);
        out.push(s);
    }

    out.sort_by(|a, b| (&a.query, &a.relation, &a.source_edges).cmp(&(&b.query, &b.relation, &b.source_edges)));
    report.questions = out.len();
    Ok((out, report))
}

/// Every node that correctly answers `sample`'s question in `graph`.
pub fn valid_answers(sample: &QASample, graph: &KnowledgeGraph) -> BTreeSet<NodeId> {
    let mut out = match (sample.task, &sample.co_head_of) {
        (_, Some(pivot)) => {
            let mut s = graph.heads_of(&sample.relation, pivot);
            s.remove(&sample.query);
            s
        }
        (TaskKind::FactRecall, None) => graph.heads_of(&sample.relation, &sample.query),
        (TaskKind::InverseFactRecall | TaskKind::MultiHop, None) => graph.tails_of(&sample.query, &sample.relation),
    };
    // answers recorded on the sample count even if absent from `graph`
    out.extend(sample.answer_nodes.iter().cloned());
    out
}

#[derive(Debug, Clone)]
struct LabelEntry {
    key: String,
    label: String,
    nodes: Vec<NodeId>,
}

/// Distractor candidates per node type, one entry per distinct normalized
/// label, in label order.
#[derive(Debug, Clone, Default)]
pub struct DistractorIndex {
    by_type: HashMap<String, Vec<LabelEntry>>,
}

fn label_key(label: &str) -> String {
    normalize_label(label).to_lowercase()
}

impl DistractorIndex {
    pub fn new(graph: &KnowledgeGraph) -> Self {
        let mut grouped: HashMap<String, BTreeMap<String, LabelEntry>> = HashMap::new();
        for n in graph.nodes_sorted() {
            let key = label_key(&n.label);
            grouped
                .entry(n.node_type.clone())
                .or_default()
                .entry(key.clone())
                .or_insert_with(|| LabelEntry {
                    key,
                    label: n.label.clone(),
                    nodes: Vec::new(),
                })
                .nodes
                .push(n.id.clone());
        }
        Self {
            by_type: grouped
                .into_iter()
                .map(|(t, m)| (t, m.into_values().collect()))
                .collect(),
        }
    }

    pub fn pool_size(&self, node_type: &str) -> usize {
        self.by_type.get(node_type).map_or(0, Vec::len)
    }
}

/// Converts an open-ended sample into a five-way (by default) multiple
/// choice question.
///
/// The canonically first answer node is the correct option and the answer
/// text becomes its label. Distractors share its node type, are never a
/// valid answer in `graph` (nor the queried node), and have pairwise
/// distinct normalized labels.
pub fn to_multiple_choice(
    sample: &QASample,
    graph: &KnowledgeGraph,
    index: &DistractorIndex,
    n_distractors: usize,
    base_seed: u64,
) -> Result<QASample, QaError> {
    if sample.format == AnswerFormat::MultipleChoice {
        return Err(QaError::AlreadyMultipleChoice);
    }
    let answer_id = sample.answer_nodes.first().ok_or(QaError::NoAnswer)?;
    let answer_node = graph
        .node(answer_id)
        .ok_or_else(|| QaError::UnknownNode(answer_id.clone()))?;

    let mut excluded: BTreeSet<NodeId> = valid_answers(sample, graph);
    excluded.insert(sample.query.clone());
    let excluded_keys: BTreeSet<String> = excluded
        .iter()
        .filter_map(|id| graph.label(id))
        .map(label_key)
        .collect();

    let pool: &[LabelEntry] = index.by_type.get(&answer_node.node_type).map_or(&[], Vec::as_slice);
    let is_excluded = |e: &LabelEntry| excluded_keys.contains(&e.key) || e.nodes.iter().any(|n| excluded.contains(n));
    let available = pool.iter().filter(|e| !is_excluded(e)).count();
    if available < n_distractors {
        return Err(QaError::InsufficientDistractorPool {
            answer: answer_id.clone(),
            available,
            needed: n_distractors,
        });
    }

    let derived = derive_seed(
        base_seed,
        &[
            "mc",
            sample.task.as_str(),
            sample.query.as_str(),
            &sample.relation,
            answer_id.as_str(),
            &sample.question,
        ],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(derived);
    let mut chosen: Vec<usize> = Vec::with_capacity(n_distractors);
    // rejection sampling is fast unless most of the pool is excluded
    let mut tries = 0;
    while chosen.len() < n_distractors && tries < 64 * (n_distractors + 1) {
        tries += 1;
        let i = rng.random_range(0..pool.len());
        if !chosen.contains(&i) && !is_excluded(&pool[i]) {
            chosen.push(i);
        }
    }
    if chosen.len() < n_distractors {
        let eligible: Vec<usize> = (0..pool.len())
            .filter(|i| !chosen.contains(i) && !is_excluded(&pool[*i]))
            .collect();
        let extra: Vec<usize> = eligible
            .choose_multiple(&mut rng, n_distractors - chosen.len())
            .copied()
            .collect();
        chosen.extend(extra);
    }

    let mut options: Vec<String> = Vec::with_capacity(n_distractors + 1);
    options.push(answer_node.label.clone());
    options.extend(chosen.iter().map(|&i| pool[i].label.clone()));
    let mut order: Vec<usize> = (0..options.len()).collect();
    order.shuffle(&mut rng);
    let correct_index = order.iter().position(|&i| i == 0).expect("answer present");
    let options: Vec<String> = order.into_iter().map(|i| options[i].clone()).collect();

    Ok(QASample {
        format: AnswerFormat::MultipleChoice,
        answer: answer_node.label.clone(),
        options,
        correct_index: Some(correct_index),
        seed_trace: Some(SeedTrace {
            base: base_seed,
            derived,
        }),
        ..sample.clone()
    })
}

/// Rewrites the question text through the LLM, keeping the original on
/// failure.
pub fn paraphrase_question(sample: &QASample, llm: &LlmClient, prompt: &str) -> QASample {
    let request = PromptRequest::new(prompt.to_string(), sample.question.clone()).with_max_output_tokens(128);
    let mut out = sample.clone();
    match llm.complete(&request) {
        Ok(c) if !c.text.trim().is_empty() => {
            out.question = c.text.trim().to_string();
            out.paraphrased = true;
        }
        Ok(_) => out.fallback = true,
        Err(e) => {
            tracing::warn!(query = %sample.query, error = %e, "paraphrase failed, keeping question");
            out.fallback = true;
        }
    }
    out
}
