//! Run configuration: file format, defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encode::EncodingStrategy;
use crate::partition::{TokenBudget, DEFAULT_CHARS_PER_TOKEN, DEFAULT_N_MAX, DEFAULT_T_MAX};
use crate::qa::{AnswerFormat, TaskKind, DEFAULT_SPLIT_RATIO};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmBackendKind {
    Remote,
    #[default]
    Stub,
    /// Every request fails; LLM-backed steps fall back.
    Off,
}

impl std::str::FromStr for LlmBackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "remote" => Ok(Self::Remote),
            "stub" => Ok(Self::Stub),
            "off" => Ok(Self::Off),
            other => Err(format!("unknown LLM backend `{other}` (remote|stub|off)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub backend: LlmBackendKind,
    pub cache_dir: Option<PathBuf>,
    pub max_calls: Option<usize>,
    pub max_in_flight: usize,
    pub stub_fixtures: Option<PathBuf>,
    /// Overrides `KG2FT_LLM_MODEL` for the remote backend.
    pub model: Option<String>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            backend: LlmBackendKind::Stub,
            cache_dir: None,
            max_calls: None,
            max_in_flight: 4,
            stub_fixtures: None,
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub k: usize,
    pub n_max: usize,
    pub t_max: usize,
    pub chars_per_token: f64,
    pub strategy: EncodingStrategy,
    pub tasks: Vec<TaskKind>,
    pub formats: Vec<AnswerFormat>,
    /// Training share of edges; used when the multi-hop task is enabled.
    pub split: f64,
    pub seed: u64,
    /// Put inverse questions in the training file, not just the eval sets.
    pub inverse_in_train: bool,
    pub eval_include_context: bool,
    pub paraphrase_questions: bool,
    pub templates: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    pub llm: LlmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: 1,
            n_max: DEFAULT_N_MAX,
            t_max: DEFAULT_T_MAX,
            chars_per_token: DEFAULT_CHARS_PER_TOKEN,
            strategy: EncodingStrategy::Triples,
            tasks: TaskKind::ALL.to_vec(),
            formats: AnswerFormat::ALL.to_vec(),
            split: DEFAULT_SPLIT_RATIO,
            seed: 0,
            inverse_in_train: true,
            eval_include_context: false,
            paraphrase_questions: false,
            templates: None,
            prompts: None,
            llm: LlmConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads a TOML config, or the `config` object of a dataset manifest
    /// when the file is JSON.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_err = |message: String| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        };
        if path.extension().is_some_and(|e| e == "json") {
            let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
            let inner = v.get_mut("config").map(serde_json::Value::take).unwrap_or(v);
            serde_json::from_value(inner).map_err(|e| parse_err(e.to_string()))
        } else {
            Self::from_toml_str(&text).map_err(parse_err)
        }
    }

    pub fn budget(&self) -> TokenBudget {
        TokenBudget {
            t_max: self.t_max,
            chars_per_token: self.chars_per_token,
        }
    }

    pub fn has_task(&self, task: TaskKind) -> bool {
        self.tasks.contains(&task)
    }

    pub fn has_format(&self, format: AnswerFormat) -> bool {
        self.formats.contains(&format)
    }

    pub fn needs_llm(&self) -> bool {
        matches!(
            self.strategy,
            EncodingStrategy::Summarized(_) | EncodingStrategy::NodeDescriptors
        ) || self.paraphrase_questions
    }

    /// Sorts and deduplicates task and format lists so equivalent configs
    /// serialize identically.
    pub fn normalized(mut self) -> Self {
        self.tasks.sort();
        self.tasks.dedup();
        self.formats.sort();
        self.formats.dedup();
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        if self.n_max < 2 {
            return bad(format!("n_max must be at least 2, got {}", self.n_max));
        }
        if let Err(e) = self.budget().validate() {
            return bad(e.to_string());
        }
        if self.tasks.is_empty() {
            return bad("no tasks enabled".into());
        }
        if self.formats.is_empty() {
            return bad("no answer formats enabled".into());
        }
        if self.has_task(TaskKind::MultiHop) && !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!("split must lie strictly between 0 and 1, got {}", self.split));
        }
        if self.llm.max_in_flight == 0 {
            return bad("llm.max_in_flight must be positive".into());
        }
        Ok(())
    }
}
