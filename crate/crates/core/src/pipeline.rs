//! Dataset driver: per-node context extraction, partitioning, encoding and
//! question generation, followed by the eval sets and the manifest.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::encode::{
    encode_adjacency_list, encode_base, encode_node_descriptors, encode_summarized, EncodeError, EncodedContext,
    EncodingStrategy,
};
use crate::graph::{Edge, GraphError, KnowledgeGraph, NodeId};
use crate::llm::LlmClient;
use crate::partition::{estimate_tokens, fit_to_budget, partition_context, Partition, PartitionError};
use crate::prompts::PromptSet;
use crate::qa::{
    gen_fact_qa, gen_inverse_qa, gen_multihop_qa, paraphrase_question, split_edges, to_multiple_choice, AnswerFormat,
    DistractorIndex, EdgeSplit, MultihopReport, QASample, QaError, SeedTrace, TaskKind, DEFAULT_DISTRACTORS,
};
use crate::store::sha256_hex;
use crate::templates::TemplateSet;

pub const TRAIN_FILE: &str = "train.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONTEXT_SEPARATOR: &str = "\n\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("graph has no edges")]
    EmptyGraph,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Qa(#[from] QaError),
    #[error("node `{node}`{}: {source}", partition.map(|p| format!(" partition {p}")).unwrap_or_default())]
    AtNode {
        node: NodeId,
        partition: Option<usize>,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file} line {line}: {message}")]
    MalformedSample { file: String, line: usize, message: String },
}

impl PipelineError {
    fn at(self, node: &NodeId, partition: Option<usize>) -> Self {
        match self {
            e @ PipelineError::AtNode { .. } => e,
            e => PipelineError::AtNode {
                node: node.clone(),
                partition,
                source: Box::new(e),
            },
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Name of the eval file for a (task, format) pair.
pub fn eval_file_name(task: TaskKind, format: AnswerFormat) -> String {
    format!("eval_{}_{}.jsonl", task.as_str(), format.as_str())
}

/// All data files of a dataset directory, manifest excluded, in write order.
pub fn data_file_names() -> Vec<String> {
    let mut out = vec![TRAIN_FILE.to_string()];
    for task in TaskKind::ALL {
        for format in AnswerFormat::ALL {
            out.push(eval_file_name(task, format));
        }
    }
    out
}

/// `(head, relation, tail)` as written in output records.
pub type Triple = (NodeId, String, NodeId);

fn triples(edges: &[Edge]) -> Vec<Triple> {
    edges
        .iter()
        .map(|e| (e.head.clone(), e.relation.clone(), e.tail.clone()))
        .collect()
}

pub fn triple_edge(t: &Triple) -> Edge {
    Edge::new(t.0.clone(), t.1.clone(), t.2.clone())
}

/// One training sample: a context and one question with its answer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub context: EncodedContext,
    pub qa: QASample,
    pub combined_text: String,
    pub token_estimate: usize,
    pub oversized: bool,
}

impl TrainingSample {
    pub fn new(context: EncodedContext, qa: QASample, chars_per_token: f64) -> Self {
        let combined_text = format!("{}{CONTEXT_SEPARATOR}{}\n{}", context.text, qa.question, qa.answer);
        let token_estimate = estimate_tokens(&combined_text, chars_per_token);
        Self {
            context,
            qa,
            combined_text,
            token_estimate,
            oversized: false,
        }
    }

    pub fn record(&self) -> TrainRecord {
        TrainRecord {
            text: self.combined_text.clone(),
            meta: TrainMeta {
                center: self.context.center.clone(),
                strategy: self.context.strategy,
                partition_index: self.context.partition_index,
                task: self.qa.task,
                question: self.qa.question.clone(),
                answer: self.qa.answer.clone(),
                source_edges: triples(&self.context.source_edges),
                qa_edges: triples(&self.qa.source_edges),
                token_estimate: self.token_estimate,
                oversized: self.oversized,
                fallback: self.context.fallback || self.qa.fallback,
                llm_cache_key: self.context.llm_cache_key.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub center: NodeId,
    pub strategy: EncodingStrategy,
    pub partition_index: usize,
    pub task: TaskKind,
    pub question: String,
    pub answer: String,
    /// Edges verbalized in the context.
    pub source_edges: Vec<Triple>,
    /// Edges the question is about.
    pub qa_edges: Vec<Triple>,
    pub token_estimate: usize,
    pub oversized: bool,
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_cache_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub text: String,
    pub meta: TrainMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMeta {
    pub query: NodeId,
    pub relation: String,
    pub answer_nodes: Vec<NodeId>,
    pub source_edges: Vec<Triple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<SeedTrace>,
    #[serde(default)]
    pub paraphrased: bool,
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Line index within its file; responses refer to it as `sample_id`.
    pub id: usize,
    pub task: TaskKind,
    pub format: AnswerFormat,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub meta: EvalMeta,
}

impl EvalRecord {
    fn from_sample(id: usize, s: &QASample, context: Option<String>) -> Self {
        Self {
            id,
            task: s.task,
            format: s.format,
            question: s.question.clone(),
            answer: s.answer.clone(),
            options: s.options.clone(),
            correct_index: s.correct_index,
            context,
            meta: EvalMeta {
                query: s.query.clone(),
                relation: s.relation.clone(),
                answer_nodes: s.answer_nodes.clone(),
                source_edges: triples(&s.source_edges),
                seed: s.seed_trace,
                paraphrased: s.paraphrased,
                fallback: s.fallback,
            },
        }
    }

    /// Checks the structural invariants of a record.
    pub fn check(&self) -> Result<(), String> {
        match self.format {
            AnswerFormat::MultipleChoice => {
                if self.options.len() != DEFAULT_DISTRACTORS + 1 {
                    return Err(format!("expected 5 options, found {}", self.options.len()));
                }
                let ci = self.correct_index.ok_or("missing correct_index")?;
                if ci >= self.options.len() {
                    return Err(format!("correct_index {ci} out of range"));
                }
                if self.options[ci] != self.answer {
                    return Err("options[correct_index] differs from answer".into());
                }
                let mut seen = std::collections::BTreeSet::new();
                if !self.options.iter().all(|o| seen.insert(o)) {
                    return Err("duplicate options".into());
                }
            }
            AnswerFormat::OpenEnded => {
                if !self.options.is_empty() || self.correct_index.is_some() {
                    return Err("open-ended record carries options".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub hash: String,
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    /// False when every edge is a training edge (no multi-hop task).
    pub applied: bool,
    pub ratio: f64,
    pub seed: u64,
    pub train_edges: usize,
    pub test_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountEntry {
    pub task: TaskKind,
    pub format: AnswerFormat,
    pub split: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub lines: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub centers: usize,
    pub partitions: usize,
    pub max_repartition_rounds: usize,
    pub oversized_samples: usize,
    pub fallback_samples: usize,
    /// Encoded contexts that yielded no question at their center.
    pub contexts_without_questions: usize,
    /// MC conversions skipped for lack of distractors, per task.
    pub mc_skipped: BTreeMap<TaskKind, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub tool: String,
    pub version: String,
    pub format_version: u32,
    pub graph: GraphSummary,
    pub config: RunConfig,
    pub templates_hash: String,
    pub prompt_hashes: BTreeMap<String, String>,
    /// `builtin` for the shipped prompt texts, otherwise `custom`.
    pub prompt_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_backend: Option<String>,
    pub split: SplitSummary,
    pub counts: Vec<CountEntry>,
    pub files: BTreeMap<String, FileEntry>,
    pub stats: BuildStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multihop: Option<MultihopReport>,
}

/// Everything besides the graph and config that a build reads.
pub struct BuildContext<'a> {
    pub templates: &'a TemplateSet,
    pub prompts: &'a PromptSet,
    pub prompts_builtin: bool,
    pub llm: Option<&'a LlmClient>,
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<TrainingSample>,
    pub evals: BTreeMap<(TaskKind, AnswerFormat), Vec<EvalRecord>>,
    pub manifest: DatasetManifest,
    pub split: EdgeSplit,
}

struct NodeState<'a> {
    train: &'a KnowledgeGraph,
    config: &'a RunConfig,
    cx: &'a BuildContext<'a>,
    center: NodeId,
    descriptor: Option<EncodedContext>,
}

impl NodeState<'_> {
    fn encode(&self, p: &Partition) -> Result<Vec<EncodedContext>, PipelineError> {
        let (g, t) = (self.train, self.cx.templates);
        Ok(match self.config.strategy {
            EncodingStrategy::Triples => encode_base(g, p, 0, crate::encode::BaseStrategy::Triples, t)?,
            EncodingStrategy::RelationalGroups => {
                encode_base(g, p, 0, crate::encode::BaseStrategy::RelationalGroups, t)?
            }
            EncodingStrategy::AdjacencyList => encode_base(g, p, 0, crate::encode::BaseStrategy::AdjacencyList, t)?,
            EncodingStrategy::Summarized(base) => {
                let llm = self.llm()?;
                encode_base(g, p, 0, base, t)?
                    .iter()
                    .map(|c| encode_summarized(c, llm, self.cx.prompts))
                    .collect()
            }
            EncodingStrategy::NodeDescriptors => {
                let mut adj = encode_adjacency_list(g, p, 0, t)?;
                adj.strategy = EncodingStrategy::NodeDescriptors;
                if let Some(d) = &self.descriptor {
                    adj.text = format!("{} {}", d.text, adj.text);
                    adj.fallback = d.fallback;
                    adj.llm_cache_key = d.llm_cache_key.clone();
                }
                vec![adj]
            }
        })
    }

    fn llm(&self) -> Result<&LlmClient, PipelineError> {
        self.cx.llm.ok_or_else(|| {
            PipelineError::Config(ConfigError::Invalid(format!(
                "strategy {} needs an LLM backend",
                self.config.strategy
            )))
        })
    }

    fn questions(&self, ctx: &EncodedContext) -> Result<Vec<QASample>, PipelineError> {
        let (g, t) = (self.train, self.cx.templates);
        let mut qs = gen_fact_qa(g, &ctx.source_edges, t, Some(&self.center))?;
        if self.config.inverse_in_train && self.config.has_task(TaskKind::InverseFactRecall) {
            qs.extend(gen_inverse_qa(g, &ctx.source_edges, t, Some(&self.center))?);
        }
        if self.config.paraphrase_questions {
            let llm = self.llm()?;
            qs = qs
                .iter()
                .map(|q| paraphrase_question(q, llm, &self.cx.prompts.paraphrase))
                .collect();
        }
        Ok(qs)
    }

    /// Renders a partition; the second value counts contexts without questions.
    fn render(&self, p: &Partition) -> Result<(Vec<TrainingSample>, usize), PipelineError> {
        let mut out = Vec::new();
        let mut empty = 0;
        for ctx in self.encode(p)? {
            let qs = self.questions(&ctx)?;
            if qs.is_empty() {
                empty += 1;
            }
            for q in qs {
                out.push(TrainingSample::new(ctx.clone(), q, self.config.chars_per_token));
            }
        }
        Ok((out, empty))
    }
}

#[derive(Default)]
struct NodeOutput {
    samples: Vec<TrainingSample>,
    partitions: usize,
    rounds: usize,
    empty_contexts: usize,
}

fn process_node(state: &NodeState<'_>) -> Result<NodeOutput, PipelineError> {
    let ctx = state.train.k_hop_context(&state.center, state.config.k)?;
    if ctx.is_empty() {
        return Ok(NodeOutput::default());
    }
    let budget = state.config.budget();
    let mut rendered: HashMap<Vec<Edge>, (Vec<TrainingSample>, usize)> = HashMap::new();
    let fitted = fit_to_budget(&ctx, state.config.n_max, &budget, |p: &Partition| {
        if let Some((samples, _)) = rendered.get(&p.edges) {
            return Ok(max_tokens(samples));
        }
        let r = state.render(p)?;
        let m = max_tokens(&r.0);
        rendered.insert(p.edges.clone(), r);
        Ok::<usize, PipelineError>(m)
    })?;

    let mut out = NodeOutput {
        partitions: fitted.partitions.len(),
        rounds: fitted.rounds,
        ..Default::default()
    };
    for (index, p) in fitted.partitions.iter().enumerate() {
        let (samples, empty) = match rendered.remove(&p.edges) {
            Some(r) => r,
            None => state.render(p).map_err(|e| e.at(&state.center, Some(index)))?,
        };
        out.empty_contexts += empty;
        for mut s in samples {
            s.context.partition_index = index;
            s.oversized = p.oversized;
            out.samples.push(s);
        }
    }
    Ok(out)
}

fn max_tokens(samples: &[TrainingSample]) -> usize {
    samples.iter().map(|s| s.token_estimate).max().unwrap_or(0)
}

/// Adjacency-list text of `v`'s context, used as eval context when enabled.
fn eval_context(
    train: &KnowledgeGraph,
    v: &NodeId,
    config: &RunConfig,
    templates: &TemplateSet,
) -> Result<Option<String>, PipelineError> {
    let ctx = train.k_hop_context(v, config.k)?;
    if ctx.is_empty() {
        return Ok(None);
    }
    let mut parts = Vec::new();
    for (i, p) in partition_context(&ctx, config.n_max.max(3))?.iter().enumerate() {
        parts.push(encode_adjacency_list(train, p, i, templates)?.text);
    }
    Ok(Some(parts.join(" ")))
}

/// Runs the whole build in memory.
pub fn build_dataset(
    graph: &KnowledgeGraph,
    config: &RunConfig,
    cx: &BuildContext<'_>,
) -> Result<Dataset, PipelineError> {
    config.validate()?;
    if graph.edge_count() == 0 {
        return Err(PipelineError::EmptyGraph);
    }
    let multihop = config.has_task(TaskKind::MultiHop);
    let split = if multihop {
        split_edges(graph, config.split, config.seed)?
    } else {
        EdgeSplit::all_train(graph)
    };
    let train = if multihop {
        graph.filter_edges(|e| split.is_train(e))
    } else {
        graph.clone()
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cx.jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Config(ConfigError::Invalid(format!("worker pool: {e}"))))?;

    let centers: Vec<NodeId> = train.nodes_sorted().into_iter().map(|n| n.id.clone()).collect();
    let outputs: Vec<NodeOutput> = pool.install(|| {
        centers
            .par_iter()
            .map(|v| {
                let descriptor = if config.strategy == EncodingStrategy::NodeDescriptors {
                    match encode_node_descriptors(&train, v, 0, cx.llm, cx.prompts) {
                        Ok(d) => Some(d),
                        Err(EncodeError::NoDescribableContent(_)) => None,
                        Err(e) => return Err(PipelineError::from(e).at(v, None)),
                    }
                } else {
                    None
                };
                let state = NodeState {
                    train: &train,
                    config,
                    cx,
                    center: v.clone(),
                    descriptor,
                };
                process_node(&state).map_err(|e| e.at(v, None))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut stats = BuildStats::default();
    let mut samples = Vec::new();
    for o in outputs {
        if o.partitions > 0 {
            stats.centers += 1;
        }
        stats.partitions += o.partitions;
        stats.max_repartition_rounds = stats.max_repartition_rounds.max(o.rounds);
        stats.contexts_without_questions += o.empty_contexts;
        samples.extend(o.samples);
    }
    stats.oversized_samples = samples.iter().filter(|s| s.oversized).count();
    stats.fallback_samples = samples.iter().filter(|s| s.context.fallback || s.qa.fallback).count();

    // eval sets
    let train_edges: Vec<Edge> = split.train_edges.iter().cloned().collect();
    let mut open: BTreeMap<TaskKind, Vec<QASample>> = BTreeMap::new();
    if config.has_task(TaskKind::FactRecall) {
        open.insert(
            TaskKind::FactRecall,
            gen_fact_qa(&train, &train_edges, cx.templates, None)?,
        );
    }
    if config.has_task(TaskKind::InverseFactRecall) {
        open.insert(
            TaskKind::InverseFactRecall,
            gen_inverse_qa(&train, &train_edges, cx.templates, None)?,
        );
    }
    let mut multihop_report = None;
    if multihop {
        let (qs, report) = gen_multihop_qa(&train, &split, cx.templates)?;
        open.insert(TaskKind::MultiHop, qs);
        multihop_report = Some(report);
    }
    if config.paraphrase_questions {
        let llm = cx
            .llm
            .ok_or_else(|| ConfigError::Invalid("question paraphrasing needs an LLM backend".into()))?;
        let prompt = &cx.prompts.paraphrase;
        pool.install(|| {
            for qs in open.values_mut() {
                *qs = qs.par_iter().map(|q| paraphrase_question(q, llm, prompt)).collect();
            }
        });
    }

    let index = DistractorIndex::new(graph);
    let mut evals: BTreeMap<(TaskKind, AnswerFormat), Vec<EvalRecord>> = BTreeMap::new();
    for (task, qs) in &open {
        let contexts: Vec<Option<String>> = if config.eval_include_context {
            pool.install(|| {
                qs.par_iter()
                    .map(|q| eval_context(&train, &q.query, config, cx.templates))
                    .collect::<Result<_, _>>()
            })?
        } else {
            vec![None; qs.len()]
        };
        if config.has_format(AnswerFormat::OpenEnded) {
            let recs = qs
                .iter()
                .zip(&contexts)
                .enumerate()
                .map(|(i, (q, c))| EvalRecord::from_sample(i, q, c.clone()))
                .collect();
            evals.insert((*task, AnswerFormat::OpenEnded), recs);
        }
        if config.has_format(AnswerFormat::MultipleChoice) {
            let converted: Vec<Result<QASample, QaError>> = pool.install(|| {
                qs.par_iter()
                    .map(|q| to_multiple_choice(q, graph, &index, DEFAULT_DISTRACTORS, config.seed))
                    .collect()
            });
            let mut recs = Vec::new();
            for (r, c) in converted.into_iter().zip(&contexts) {
                match r {
                    Ok(mc) => recs.push(EvalRecord::from_sample(recs.len(), &mc, c.clone())),
                    Err(QaError::InsufficientDistractorPool { .. }) => {
                        *stats.mc_skipped.entry(*task).or_default() += 1;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            evals.insert((*task, AnswerFormat::MultipleChoice), recs);
        }
    }

    let mut counts = Vec::new();
    let mut train_counts: BTreeMap<TaskKind, usize> = BTreeMap::new();
    for s in &samples {
        *train_counts.entry(s.qa.task).or_default() += 1;
    }
    for (task, n) in train_counts {
        counts.push(CountEntry {
            task,
            format: AnswerFormat::OpenEnded,
            split: "train".into(),
            count: n,
        });
    }
    for ((task, format), recs) in &evals {
        counts.push(CountEntry {
            task: *task,
            format: *format,
            split: "eval".into(),
            count: recs.len(),
        });
    }

    let manifest = DatasetManifest {
        tool: "kg2ft".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        format_version: FORMAT_VERSION,
        graph: GraphSummary {
            hash: crate::store::content_hash(graph),
            nodes: graph.node_count(),
            edges: graph.edge_count(),
        },
        config: config.clone(),
        templates_hash: cx.templates.hash().to_string(),
        prompt_hashes: cx.prompts.hashes(),
        prompt_source: if cx.prompts_builtin { "builtin" } else { "custom" }.into(),
        llm_backend: if config.needs_llm() {
            cx.llm.map(LlmClient::backend_id)
        } else {
            None
        },
        split: SplitSummary {
            applied: multihop,
            ratio: split.ratio,
            seed: if multihop { split.seed } else { config.seed },
            train_edges: split.train_edges.len(),
            test_edges: split.test_edges.len(),
        },
        counts,
        files: BTreeMap::new(),
        stats,
        multihop: multihop_report,
    };

    Ok(Dataset {
        train: samples,
        evals,
        manifest,
        split,
    })
}

fn jsonl<T: Serialize>(records: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, &r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(&path))?;
    tmp.write_all(bytes).map_err(io_err(&path))?;
    tmp.as_file().sync_all().map_err(io_err(&path))?;
    tmp.persist(&path).map_err(|e| PipelineError::Io {
        path: path.clone(),
        source: e.error,
    })?;
    Ok(())
}

/// Writes the data files and then the manifest into `out`.
///
/// Any existing manifest is removed first, so a directory holds a manifest
/// only after a run completed. All eight data files are always written;
/// disabled tasks and formats produce empty files.
pub fn write_dataset(dataset: &mut Dataset, out: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let manifest_path = out.join(MANIFEST_FILE);
    match std::fs::remove_file(&manifest_path) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(io_err(&manifest_path)(e)),
    }

    let mut files = BTreeMap::new();
    let train_bytes = jsonl(dataset.train.iter().map(TrainingSample::record));
    write_atomic(out, TRAIN_FILE, &train_bytes)?;
    files.insert(
        TRAIN_FILE.to_string(),
        FileEntry {
            lines: dataset.train.len(),
            sha256: sha256_hex(&train_bytes),
        },
    );
    for task in TaskKind::ALL {
        for format in AnswerFormat::ALL {
            let recs = dataset.evals.get(&(task, format)).map(Vec::as_slice).unwrap_or(&[]);
            let bytes = jsonl(recs);
            let name = eval_file_name(task, format);
            write_atomic(out, &name, &bytes)?;
            files.insert(
                name,
                FileEntry {
                    lines: recs.len(),
                    sha256: sha256_hex(&bytes),
                },
            );
        }
    }
    dataset.manifest.files = files;
    let mut bytes = serde_json::to_vec_pretty(&dataset.manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(out, MANIFEST_FILE, &bytes)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::MalformedSample {
        file: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Reads a JSONL file, checking each record.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(
    path: &Path,
    mut check: impl FnMut(&T) -> Result<(), String>,
) -> Result<Vec<T>, PipelineError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| PipelineError::MalformedSample {
            file: path.display().to_string(),
            line: i + 1,
            message,
        };
        let rec: T = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        check(&rec).map_err(malformed)?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_eval_file(path: &Path) -> Result<Vec<EvalRecord>, PipelineError> {
    let mut expected = 0;
    read_jsonl(path, |r: &EvalRecord| {
        if r.id != expected {
            return Err(format!("id {} out of sequence, expected {expected}", r.id));
        }
        expected += 1;
        r.check()
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bucket_width: usize,
    /// Count per bucket; bucket `i` covers `[i * width + 1, (i + 1) * width]`.
    pub buckets: Vec<usize>,
    pub p50: usize,
    pub p90: usize,
    pub p99: usize,
    pub p100: usize,
}

impl Histogram {
    pub fn from_values(mut values: Vec<usize>, bucket_width: usize) -> Self {
        values.sort_unstable();
        let pct = |p: f64| -> usize {
            if values.is_empty() {
                return 0;
            }
            let rank = ((p * values.len() as f64).ceil() as usize).clamp(1, values.len());
            values[rank - 1]
        };
        let mut buckets = Vec::new();
        for &v in &values {
            let b = v.saturating_sub(1) / bucket_width;
            if buckets.len() <= b {
                buckets.resize(b + 1, 0);
            }
            buckets[b] += 1;
        }
        Self {
            bucket_width,
            buckets,
            p50: pct(0.5),
            p90: pct(0.9),
            p99: pct(0.99),
            p100: pct(1.0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub files: BTreeMap<String, usize>,
    pub counts: BTreeMap<String, usize>,
    pub train_count: usize,
    pub open_count: usize,
    pub mc_count: usize,
    pub oversized: usize,
    pub fallback: usize,
    pub t_max: Option<usize>,
    /// Non-flagged training samples whose recomputed estimate exceeds t_max.
    pub over_budget: usize,
    pub token_histogram: Histogram,
}

/// Statistics over a dataset directory or a single JSONL file.
///
/// Token estimates are recomputed from the text using the manifest's
/// `chars_per_token` (4.0 without a manifest).
pub fn dataset_stats(path: &Path) -> Result<StatsReport, PipelineError> {
    let (dir, only) = if path.is_dir() {
        (path.to_path_buf(), None)
    } else {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), name)
    };
    let manifest = {
        let p = dir.join(MANIFEST_FILE);
        if p.is_file() {
            Some(read_manifest(&p)?)
        } else {
            None
        }
    };
    let cpt = manifest.as_ref().map_or(4.0, |m| m.config.chars_per_token);
    let t_max = manifest.as_ref().map(|m| m.config.t_max);

    let mut report = StatsReport {
        t_max,
        ..Default::default()
    };
    let mut tokens = Vec::new();
    let names: Vec<String> = match &only {
        Some(n) => vec![n.clone()],
        None => data_file_names(),
    };
    for name in names {
        let p = dir.join(&name);
        if !p.is_file() {
            continue;
        }
        let is_train = name == TRAIN_FILE || (only.is_some() && looks_like_train(&p)?);
        if is_train {
            let recs: Vec<TrainRecord> = read_jsonl(&p, |_| Ok(()))?;
            for r in &recs {
                let est = estimate_tokens(&r.text, cpt);
                tokens.push(est);
                if r.meta.oversized {
                    report.oversized += 1;
                } else if t_max.is_some_and(|t| est > t) {
                    report.over_budget += 1;
                }
                if r.meta.fallback {
                    report.fallback += 1;
                }
                *report.counts.entry(format!("train/{}", r.meta.task)).or_default() += 1;
            }
            report.train_count += recs.len();
            report.files.insert(name, recs.len());
        } else {
            let recs = read_eval_file(&p)?;
            for r in &recs {
                match r.format {
                    AnswerFormat::MultipleChoice => report.mc_count += 1,
                    AnswerFormat::OpenEnded => report.open_count += 1,
                }
                if r.meta.fallback {
                    report.fallback += 1;
                }
                *report
                    .counts
                    .entry(format!("eval/{}/{}", r.task, r.format))
                    .or_default() += 1;
            }
            report.files.insert(name, recs.len());
        }
    }
    report.token_histogram = Histogram::from_values(tokens, 32);
    Ok(report)
}

fn looks_like_train(path: &Path) -> Result<bool, PipelineError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let first = std::io::BufReader::new(file)
        .lines()
        .next()
        .transpose()
        .map_err(io_err(path))?;
    Ok(first.is_some_and(|l| serde_json::from_str::<serde_json::Value>(&l).is_ok_and(|v| v.get("text").is_some())))
}
