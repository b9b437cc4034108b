//! Command-line front end: ingest, build, stats, eval and respond.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kg2ft::config::{LlmBackendKind, RunConfig};
use kg2ft::encode::EncodingStrategy;
use kg2ft::eval::{self, Metric, ResponderKind};
use kg2ft::ingest::{load_papers, load_triples, TripleFileSpec};
use kg2ft::llm::{LlmClient, RemoteBackend, ResponseCache, StubBackend};
use kg2ft::pipeline::{self, BuildContext};
use kg2ft::prompts::PromptSet;
use kg2ft::qa::{AnswerFormat, TaskKind};
use kg2ft::store;
use kg2ft::templates::TemplateSet;

#[derive(Debug, Parser)]
#[command(
    name = "kg2ft",
    version,
    about = "Compile a knowledge graph into fine-tuning and evaluation datasets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a triple or paper-record file into a canonical graph file.
    Ingest(IngestArgs),
    /// Generate training and eval files from a graph.
    Build(Box<BuildArgs>),
    /// Summarize a dataset directory or file, or print a score report.
    Stats(StatsArgs),
    /// Score a response file against an eval file.
    Eval(EvalArgs),
    /// Write reference responses (gold, random or blank) for an eval file.
    Respond(RespondArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InputFormat {
    Triples,
    Papers,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub format: InputFormat,
    #[arg(long)]
    pub input: PathBuf,
    /// Relation allow-list for triple files (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub relations: Option<Vec<String>>,
    /// Minimum number of authors for a paper to be kept.
    #[arg(long, default_value_t = 2)]
    pub min_authors: usize,
    /// Field delimiter for triple files.
    #[arg(long, default_value_t = '\t')]
    pub delimiter: char,
    /// Count malformed rows instead of failing on the first one.
    #[arg(long)]
    pub lenient: bool,
    /// Template file supplying relation phrases and node types.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// TOML config file, or a dataset manifest to re-run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// triples | groups | adjacency | summarized[:base] | descriptors
    #[arg(long)]
    pub strategy: Option<EncodingStrategy>,
    /// Comma-separated subset of fact,inverse,multihop.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Option<Vec<TaskKind>>,
    /// Comma-separated subset of open,mc.
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<AnswerFormat>>,
    /// Training share of edges when multi-hop questions are generated.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Neighborhood radius.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long)]
    pub chars_per_token: Option<f64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub llm_backend: Option<LlmBackendKind>,
    #[arg(long)]
    pub llm_cache: Option<PathBuf>,
    #[arg(long)]
    pub llm_max_calls: Option<usize>,
    #[arg(long)]
    pub llm_max_in_flight: Option<usize>,
    /// JSON array of {"match", "response"} objects for the stub backend.
    #[arg(long)]
    pub stub_fixtures: Option<PathBuf>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Directory with rewrite.txt, topics.txt and paraphrase.txt.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Include context text in eval records.
    #[arg(long)]
    pub eval_include_context: bool,
    /// Rewrite questions through the LLM.
    #[arg(long)]
    pub paraphrase: bool,
    /// Keep inverse questions out of the training file.
    #[arg(long)]
    pub no_inverse_in_train: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Dataset directory or a single JSONL file.
    #[arg(long, required_unless_present = "report")]
    pub dataset: Option<PathBuf>,
    /// Print a score report file instead.
    #[arg(long, conflicts_with = "dataset")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub responses: PathBuf,
    /// mc | exact | token-f1
    #[arg(long)]
    pub metric: Metric,
    /// Write the full report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Model name recorded in the report.
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Responder {
    Gold,
    Random,
    Blank,
}

#[derive(Debug, Args)]
pub struct RespondArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum)]
    pub kind: Responder,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let record = serde_json::json!({
                "level": "ERROR",
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            let _ = writeln!(std::io::stderr(), "{record}");
            1
        }
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("KG2FT_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Build(a) => build(*a),
        Command::Stats(a) => stats(a),
        Command::Eval(a) => evaluate(a),
        Command::Respond(a) => respond(a),
    }
}

fn load_templates(path: Option<&Path>) -> Result<TemplateSet> {
    match path {
        Some(p) => TemplateSet::load(p).with_context(|| format!("loading templates {}", p.display())),
        None => Ok(TemplateSet::builtin()),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let templates = load_templates(a.templates.as_deref())?;
    let (graph, report) = match a.format {
        InputFormat::Triples => {
            let mut spec = TripleFileSpec::new(&a.input);
            spec.delimiter = a.delimiter;
            spec.strict = !a.lenient;
            if let Some(r) = a.relations {
                spec = spec.with_relations(r);
            }
            load_triples(&spec, &templates)?
        }
        InputFormat::Papers => load_papers(&a.input, a.min_authors, !a.lenient, &templates)?,
    };
    let bytes = store::to_bytes(&graph);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&a.out, &bytes).with_context(|| format!("writing {}", a.out.display()))?;
    tracing::info!(
        nodes = report.nodes,
        edges = report.edges,
        dropped = report.rows_dropped,
        "ingested"
    );
    print_json(&serde_json::json!({
        "graph": a.out,
        "hash": store::sha256_hex(&bytes),
        "report": report,
    }))
}

/// Layers CLI flags over the config file over the defaults.
pub fn resolve_config(a: &BuildArgs) -> Result<RunConfig> {
    let mut c = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = a.$field.clone() {
                c.$field = v;
            }
        };
    }
    set!(strategy);
    set!(tasks);
    set!(formats);
    set!(split);
    set!(seed);
    set!(k);
    set!(n_max);
    set!(t_max);
    set!(chars_per_token);
    if let Some(t) = &a.templates {
        c.templates = Some(t.clone());
    }
    if let Some(p) = &a.prompts {
        c.prompts = Some(p.clone());
    }
    if let Some(b) = a.llm_backend {
        c.llm.backend = b;
    }
    if let Some(d) = &a.llm_cache {
        c.llm.cache_dir = Some(d.clone());
    }
    if let Some(n) = a.llm_max_calls {
        c.llm.max_calls = Some(n);
    }
    if let Some(n) = a.llm_max_in_flight {
        c.llm.max_in_flight = n;
    }
    if let Some(f) = &a.stub_fixtures {
        c.llm.stub_fixtures = Some(f.clone());
    }
    if a.eval_include_context {
        c.eval_include_context = true;
    }
    if a.paraphrase {
        c.paraphrase_questions = true;
    }
    if a.no_inverse_in_train {
        c.inverse_in_train = false;
    }
    let c = c.normalized();
    c.validate()?;
    Ok(c)
}

pub fn llm_client(c: &RunConfig) -> Result<LlmClient> {
    let backend: Arc<dyn kg2ft::llm::CompletionBackend> = match c.llm.backend {
        LlmBackendKind::Stub => {
            let stub = StubBackend::new();
            if let Some(f) = &c.llm.stub_fixtures {
                stub.load_fixtures(f)
                    .with_context(|| format!("loading stub fixtures {}", f.display()))?;
            }
            Arc::new(stub)
        }
        LlmBackendKind::Off => Arc::new(StubBackend::disabled()),
        LlmBackendKind::Remote => {
            let mut remote = RemoteBackend::from_env()?;
            if let Some(m) = &c.llm.model {
                let endpoint = std::env::var(kg2ft::llm::ENV_ENDPOINT)?;
                remote = RemoteBackend::new(endpoint, std::env::var(kg2ft::llm::ENV_API_KEY).ok(), m.clone());
            }
            Arc::new(remote)
        }
    };
    let mut client = LlmClient::new(backend)
        .with_max_calls(c.llm.max_calls)
        .with_max_in_flight(c.llm.max_in_flight);
    if let Some(dir) = &c.llm.cache_dir {
        client = client.with_cache(ResponseCache::new(dir));
    }
    Ok(client)
}

fn build(a: BuildArgs) -> Result<()> {
    let config = resolve_config(&a)?;
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        bail!("--jobs must be positive");
    }
    tracing::info!(config = %config.to_toml_string(), jobs, "resolved configuration");

    let file = std::fs::File::open(&a.graph).with_context(|| format!("opening {}", a.graph.display()))?;
    let graph = store::read_graph(std::io::BufReader::new(file))
        .with_context(|| format!("reading graph {}", a.graph.display()))?;
    let templates = load_templates(config.templates.as_deref())?;
    let prompts = match &config.prompts {
        Some(dir) => PromptSet::load_dir(dir).with_context(|| format!("loading prompts {}", dir.display()))?,
        None => PromptSet::default(),
    };
    let llm = if config.needs_llm() {
        Some(llm_client(&config)?)
    } else {
        None
    };
    let cx = BuildContext {
        templates: &templates,
        prompts: &prompts,
        prompts_builtin: prompts == PromptSet::default(),
        llm: llm.as_ref(),
        jobs,
    };
    let mut dataset = pipeline::build_dataset(&graph, &config, &cx)?;
    pipeline::write_dataset(&mut dataset, &a.out)?;
    let calls = llm.as_ref().map_or(0, LlmClient::backend_calls);
    tracing::info!(
        train = dataset.train.len(),
        llm_backend_calls = calls,
        out = %a.out.display(),
        "dataset written"
    );
    print_json(&serde_json::json!({
        "out": a.out,
        "counts": dataset.manifest.counts,
        "stats": dataset.manifest.stats,
        "llm_backend_calls": calls,
    }))
}

fn stats(a: StatsArgs) -> Result<()> {
    if let Some(r) = a.report {
        let report = eval::read_report(&r)?;
        print!("{}", eval::format_report(&report));
        return Ok(());
    }
    let path = a.dataset.expect("clap enforces --dataset");
    let report = pipeline::dataset_stats(&path)?;
    print_json(&report)
}

fn evaluate(a: EvalArgs) -> Result<()> {
    let mut report = eval::score_files(a.metric, &a.dataset, &a.responses)?;
    report.model = a.model;
    if let Some(p) = &a.report {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    print!("{}", eval::format_report(&report));
    Ok(())
}

fn respond(a: RespondArgs) -> Result<()> {
    let records = pipeline::read_eval_file(&a.dataset)?;
    let kind = match a.kind {
        Responder::Gold => ResponderKind::Gold,
        Responder::Random => ResponderKind::Random(a.seed),
        Responder::Blank => ResponderKind::Blank,
    };
    let responses = eval::reference_responder(kind, &records);
    eval::write_responses(&a.out, &responses)?;
    tracing::info!(n = responses.len(), out = %a.out.display(), "responses written");
    Ok(())
}
