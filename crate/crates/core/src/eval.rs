//! Scoring of model responses against eval files.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{read_eval_file, read_jsonl, EvalRecord, PipelineError};
use crate::qa::{AnswerFormat, TaskKind};

/// Emitted by the random responder for open-ended questions.
pub const NONSENSE_TOKEN: &str = "xyzzy";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Read(#[from] PipelineError),
    #[error("no response for sample ids {0:?}")]
    MissingResponse(Vec<usize>),
    #[error("response for unknown sample id {0}")]
    UnknownSample(usize),
    #[error("duplicate response for sample id {0}")]
    DuplicateResponse(usize),
    #[error("sample {sample_id}: {message}")]
    FormatMismatch { sample_id: usize, message: String },
    #[error("sample {sample_id}: choice {choice} out of range")]
    ChoiceOutOfRange { sample_id: usize, choice: usize },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub sample_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<usize>,
}

impl ModelResponse {
    pub fn text(sample_id: usize, response: impl Into<String>) -> Self {
        Self {
            sample_id,
            response: Some(response.into()),
            choice: None,
        }
    }

    pub fn choice(sample_id: usize, choice: usize) -> Self {
        Self {
            sample_id,
            response: None,
            choice: Some(choice),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Mc,
    Exact,
    TokenF1,
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mc" => Ok(Metric::Mc),
            "exact" => Ok(Metric::Exact),
            "token-f1" => Ok(Metric::TokenF1),
            other => Err(format!("unknown metric `{other}` (mc|exact|token-f1)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
}

/// Score report. The same layout is used by external scorers (for example
/// semantic similarity), which fill `precision`/`recall`/`f1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<AnswerFormat>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_match: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default)]
    pub samples: Vec<SampleScore>,
}

/// Lowercases, collapses whitespace and strips terminal punctuation.
pub fn normalize_answer(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() && !matches!(c, ')' | ']' | '"' | '\''))
        .trim_end()
        .to_string()
}

/// Whitespace tokens of the normalized text with surrounding punctuation
/// removed from each token.
pub fn tokens(text: &str) -> Vec<String> {
    normalize_answer(text)
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()).to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Bag-of-tokens precision, recall and F1 of `response` against `answer`.
pub fn token_prf(response: &str, answer: &str) -> (f64, f64, f64) {
    let r = tokens(response);
    let a = tokens(answer);
    match (r.is_empty(), a.is_empty()) {
        (true, true) => return (1.0, 1.0, 1.0),
        (true, false) | (false, true) => return (0.0, 0.0, 0.0),
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &a {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &r {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return (0.0, 0.0, 0.0);
    }
    let p = common as f64 / r.len() as f64;
    let rc = common as f64 / a.len() as f64;
    (p, rc, 2.0 * p * rc / (p + rc))
}

pub fn read_responses(path: &Path) -> Result<Vec<ModelResponse>, EvalError> {
    Ok(read_jsonl(path, |r: &ModelResponse| {
        if r.response.is_some() == r.choice.is_some() {
            Err("record needs exactly one of `response` or `choice`".into())
        } else {
            Ok(())
        }
    })?)
}

pub fn write_responses(path: &Path, responses: &[ModelResponse]) -> Result<(), EvalError> {
    let mut out = String::new();
    for r in responses {
        out.push_str(&serde_json::to_string(r).expect("responses serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Pairs every eval record with its response, keyed by sample id.
fn align<'a>(
    records: &'a [EvalRecord],
    responses: &'a [ModelResponse],
) -> Result<Vec<(&'a EvalRecord, &'a ModelResponse)>, EvalError> {
    let mut by_id: BTreeMap<usize, &ModelResponse> = BTreeMap::new();
    for r in responses {
        if r.sample_id >= records.len() {
            return Err(EvalError::UnknownSample(r.sample_id));
        }
        if by_id.insert(r.sample_id, r).is_some() {
            return Err(EvalError::DuplicateResponse(r.sample_id));
        }
    }
    let missing: Vec<usize> = (0..records.len()).filter(|i| !by_id.contains_key(i)).collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingResponse(missing));
    }
    Ok(records.iter().map(|rec| (rec, by_id[&rec.id])).collect())
}

fn common_task_format(records: &[EvalRecord]) -> (Option<TaskKind>, Option<AnswerFormat>) {
    let task = records
        .first()
        .map(|r| r.task)
        .filter(|t| records.iter().all(|r| r.task == *t));
    let format = records
        .first()
        .map(|r| r.format)
        .filter(|f| records.iter().all(|r| r.format == *f));
    (task, format)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn require_format(rec: &EvalRecord, format: AnswerFormat) -> Result<(), EvalError> {
    if rec.format != format {
        return Err(EvalError::FormatMismatch {
            sample_id: rec.id,
            message: format!("record is {}, metric needs {format}", rec.format),
        });
    }
    Ok(())
}

/// Resolves a response to an option index: an explicit choice, or text that
/// equals exactly one option after normalization.
pub fn resolve_choice(rec: &EvalRecord, resp: &ModelResponse) -> Result<Option<usize>, EvalError> {
    if let Some(c) = resp.choice {
        if c >= rec.options.len() {
            return Err(EvalError::ChoiceOutOfRange {
                sample_id: rec.id,
                choice: c,
            });
        }
        return Ok(Some(c));
    }
    let text = normalize_answer(resp.response.as_deref().unwrap_or_default());
    let hits: Vec<usize> = rec
        .options
        .iter()
        .enumerate()
        .filter(|(_, o)| normalize_answer(o) == text)
        .map(|(i, _)| i)
        .collect();
    Ok((hits.len() == 1).then(|| hits[0]))
}

pub fn score_mc(records: &[EvalRecord], responses: &[ModelResponse]) -> Result<ScoreReport, EvalError> {
    let pairs = align(records, responses)?;
    let mut samples = Vec::with_capacity(pairs.len());
    for (rec, resp) in pairs {
        require_format(rec, AnswerFormat::MultipleChoice)?;
        let chosen = resolve_choice(rec, resp)?;
        let correct = chosen.is_some() && chosen == rec.correct_index;
        samples.push(SampleScore {
            sample_id: rec.id,
            score: Some(if correct { 1.0 } else { 0.0 }),
            precision: None,
            recall: None,
            f1: None,
        });
    }
    let (task, format) = common_task_format(records);
    Ok(ScoreReport {
        metric: "mc".into(),
        task,
        format,
        n: samples.len(),
        accuracy: mean(samples.iter().filter_map(|s| s.score)),
        exact_match: None,
        precision: None,
        recall: None,
        f1: None,
        model: None,
        samples,
    })
}

pub fn score_exact(records: &[EvalRecord], responses: &[ModelResponse]) -> Result<ScoreReport, EvalError> {
    let pairs = align(records, responses)?;
    let mut samples = Vec::with_capacity(pairs.len());
    for (rec, resp) in pairs {
        require_format(rec, AnswerFormat::OpenEnded)?;
        let text = open_text(rec, resp)?;
        let hit = normalize_answer(text) == normalize_answer(&rec.answer);
        samples.push(SampleScore {
            sample_id: rec.id,
            score: Some(if hit { 1.0 } else { 0.0 }),
            precision: None,
            recall: None,
            f1: None,
        });
    }
    let (task, format) = common_task_format(records);
    Ok(ScoreReport {
        metric: "exact".into(),
        task,
        format,
        n: samples.len(),
        accuracy: None,
        exact_match: mean(samples.iter().filter_map(|s| s.score)),
        precision: None,
        recall: None,
        f1: None,
        model: None,
        samples,
    })
}

fn open_text<'a>(rec: &EvalRecord, resp: &'a ModelResponse) -> Result<&'a str, EvalError> {
    resp.response.as_deref().ok_or_else(|| EvalError::FormatMismatch {
        sample_id: rec.id,
        message: "open-ended question answered with a choice index".into(),
    })
}

pub fn score_token_f1(records: &[EvalRecord], responses: &[ModelResponse]) -> Result<ScoreReport, EvalError> {
    let pairs = align(records, responses)?;
    let mut samples = Vec::with_capacity(pairs.len());
    for (rec, resp) in pairs {
        require_format(rec, AnswerFormat::OpenEnded)?;
        let (p, r, f) = token_prf(open_text(rec, resp)?, &rec.answer);
        samples.push(SampleScore {
            sample_id: rec.id,
            score: None,
            precision: Some(p),
            recall: Some(r),
            f1: Some(f),
        });
    }
    let (task, format) = common_task_format(records);
    Ok(ScoreReport {
        metric: "token-f1".into(),
        task,
        format,
        n: samples.len(),
        accuracy: None,
        exact_match: None,
        precision: mean(samples.iter().filter_map(|s| s.precision)),
        recall: mean(samples.iter().filter_map(|s| s.recall)),
        f1: mean(samples.iter().filter_map(|s| s.f1)),
        model: None,
        samples,
    })
}

pub fn score(metric: Metric, records: &[EvalRecord], responses: &[ModelResponse]) -> Result<ScoreReport, EvalError> {
    match metric {
        Metric::Mc => score_mc(records, responses),
        Metric::Exact => score_exact(records, responses),
        Metric::TokenF1 => score_token_f1(records, responses),
    }
}

pub fn score_files(metric: Metric, dataset: &Path, responses: &Path) -> Result<ScoreReport, EvalError> {
    let records = read_eval_file(dataset)?;
    let responses = read_responses(responses)?;
    score(metric, &records, &responses)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponderKind {
    Gold,
    Random(u64),
    Blank,
}

/// Calibration responders: `gold` answers correctly, `random` picks an
/// option uniformly (or emits [`NONSENSE_TOKEN`] for open questions),
/// `blank` answers with empty text.
pub fn reference_responder(kind: ResponderKind, records: &[EvalRecord]) -> Vec<ModelResponse> {
    let mut rng = match kind {
        ResponderKind::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    records
        .iter()
        .map(|rec| match (kind, rec.format) {
            (ResponderKind::Gold, AnswerFormat::MultipleChoice) => {
                ModelResponse::choice(rec.id, rec.correct_index.unwrap_or_default())
            }
            (ResponderKind::Gold, AnswerFormat::OpenEnded) => ModelResponse::text(rec.id, rec.answer.clone()),
            (ResponderKind::Random(_), AnswerFormat::MultipleChoice) => {
                let rng = rng.as_mut().expect("seeded");
                ModelResponse::choice(rec.id, rng.random_range(0..rec.options.len().max(1)))
            }
            (ResponderKind::Random(_), AnswerFormat::OpenEnded) => ModelResponse::text(rec.id, NONSENSE_TOKEN),
            (ResponderKind::Blank, _) => ModelResponse::text(rec.id, ""),
        })
        .collect()
}

fn pct(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

/// Human-readable summary of a report.
pub fn format_report(r: &ScoreReport) -> String {
    let mut out = String::new();
    let task = r.task.map_or("mixed".to_string(), |t| t.to_string());
    let format = r.format.map_or("mixed".to_string(), |f| f.to_string());
    let _ = write!(out, "metric={} task={task} format={format} n={}", r.metric, r.n);
    if let Some(m) = &r.model {
        let _ = write!(out, " model={m}");
    }
    out.push('\n');
    if let Some(a) = r.accuracy {
        let _ = writeln!(out, "accuracy  {}", pct(a));
    }
    if let Some(e) = r.exact_match {
        let _ = writeln!(out, "exact     {}", pct(e));
    }
    for (name, v) in [("precision", r.precision), ("recall", r.recall), ("f1", r.f1)] {
        if let Some(v) = v {
            let _ = writeln!(out, "{name:<9} {v:.3}");
        }
    }
    out
}

pub fn read_report(path: &Path) -> Result<ScoreReport, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| {
        EvalError::Read(PipelineError::MalformedSample {
            file: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeId;
    use crate::pipeline::EvalMeta;

    fn rec(id: usize, answer: &str, options: &[&str], correct: Option<usize>) -> EvalRecord {
        EvalRecord {
            id,
            task: TaskKind::FactRecall,
            format: if options.is_empty() {
                AnswerFormat::OpenEnded
            } else {
                AnswerFormat::MultipleChoice
            },
            question: "q?".into(),
            answer: answer.into(),
            options: options.iter().map(|s| s.to_string()).collect(),
            correct_index: correct,
            context: None,
            meta: EvalMeta {
                query: NodeId::new("q").unwrap(),
                relation: "r".into(),
                answer_nodes: vec![],
                source_edges: vec![],
                seed: None,
                paraphrased: false,
                fallback: false,
            },
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("Diabetes."), "diabetes");
        assert_eq!(normalize_answer("  Type  2\tdiabetes!? "), "type 2 diabetes");
        assert_eq!(
            normalize_answer("low insulin (hypoinsulinaemia)"),
            "low insulin (hypoinsulinaemia)"
        );
    }

    #[test]
    fn exact_examples() {
        let recs = vec![rec(0, "diabetes", &[], None), rec(1, "metformin", &[], None)];
        let resp = vec![ModelResponse::text(1, "insulin"), ModelResponse::text(0, "Diabetes.")];
        let r = score_exact(&recs, &resp).unwrap();
        assert_eq!(r.samples[0].score, Some(1.0));
        assert_eq!(r.samples[1].score, Some(0.0));
        assert_eq!(r.exact_match, Some(0.5));
    }

    #[test]
    fn token_f1_examples() {
        assert_eq!(token_prf("insulin metformin", "insulin metformin"), (1.0, 1.0, 1.0));
        let (p, r, f) = token_prf("insulin", "insulin metformin");
        assert_eq!((p, r), (1.0, 0.5));
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(token_prf("a b", "c d"), (0.0, 0.0, 0.0));
        assert_eq!(token_prf("", ""), (1.0, 1.0, 1.0));
        assert_eq!(token_prf("", "x"), (0.0, 0.0, 0.0));
        assert_eq!(token_prf("insulin,", "Insulin"), (1.0, 1.0, 1.0));
    }

    #[test]
    fn mc_text_matching_and_errors() {
        let recs = vec![rec(0, "b", &["a", "b", "c", "d", "e"], Some(1))];
        let r = score_mc(&recs, &[ModelResponse::text(0, " B. ")]).unwrap();
        assert_eq!(r.accuracy, Some(1.0));
        let r = score_mc(&recs, &[ModelResponse::text(0, "zzz")]).unwrap();
        assert_eq!(r.accuracy, Some(0.0));
        assert!(matches!(score_mc(&recs, &[]), Err(EvalError::MissingResponse(ids)) if ids == vec![0]));
        assert!(matches!(
            score_mc(&recs, &[ModelResponse::choice(0, 7)]),
            Err(EvalError::ChoiceOutOfRange { .. })
        ));
        assert!(matches!(
            score_exact(&recs, &[ModelResponse::text(0, "b")]),
            Err(EvalError::FormatMismatch { .. })
        ));
        assert!(matches!(
            score_mc(&recs, &[ModelResponse::choice(0, 1), ModelResponse::choice(3, 1)]),
            Err(EvalError::UnknownSample(3))
        ));
    }

    #[test]
    fn responders() {
        let mc: Vec<EvalRecord> = (0..50)
            .map(|i| rec(i, "b", &["a", "b", "c", "d", "e"], Some(i % 5)))
            .collect();
        let mc: Vec<EvalRecord> = mc
            .into_iter()
            .map(|mut r| {
                r.answer = r.options[r.correct_index.unwrap()].clone();
                r
            })
            .collect();
        assert_eq!(
            score_mc(&mc, &reference_responder(ResponderKind::Gold, &mc))
                .unwrap()
                .accuracy,
            Some(1.0)
        );
        let a = reference_responder(ResponderKind::Random(9), &mc);
        assert_eq!(a, reference_responder(ResponderKind::Random(9), &mc));
        let open = vec![rec(0, "insulin", &[], None)];
        let blank = score_token_f1(&open, &reference_responder(ResponderKind::Blank, &open)).unwrap();
        assert_eq!(blank.f1, Some(0.0));
        let gold = score_token_f1(&open, &reference_responder(ResponderKind::Gold, &open)).unwrap();
        assert_eq!(gold.f1, Some(1.0));
    }

    #[test]
    fn report_round_trip_and_display() {
        let r = ScoreReport {
            metric: "mc".into(),
            task: Some(TaskKind::FactRecall),
            format: Some(AnswerFormat::MultipleChoice),
            n: 7710,
            accuracy: Some(0.6123),
            exact_match: None,
            precision: None,
            recall: None,
            f1: None,
            model: Some("llama-7b".into()),
            samples: vec![],
        };
        let text = serde_json::to_string(&r).unwrap();
        let back: ScoreReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(format_report(&back).contains("accuracy  61.23%"));
    }
}
