//! Corpus records, a lexical context ranker and generation prompts.
//!
//! Records are line-delimited JSON:
//!
//! ```json
//! {"id": "q1", "question": "...", "answers": ["..."], "passages": ["..."],
//!  "examples": [{"question": "...", "answer": "..."}]}
//! ```
//!
//! Only `id` and `question` are required. Passages are expected in retrieval
//! rank order; nothing here retrieves from a document store.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::providers::normalized_words;
use crate::templates::{render, Templates};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub question: String,
    #[serde(default, alias = "reference_answers")]
    pub answers: Vec<String>,
    #[serde(default)]
    pub passages: Vec<String>,
    #[serde(default)]
    pub examples: Vec<FewShotExample>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{} malformed line(s): {}", .0.len(), join_errors(.0))]
    Parse(Vec<LineError>),
}

fn join_errors(errors: &[LineError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Parses line-delimited records. Blank lines are skipped; every bad line is
/// reported, not just the first.
pub fn parse_corpus(text: &str) -> Result<Vec<CorpusRecord>, Vec<LineError>> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                errors.push(LineError { line: line_no, message: e.to_string() });
                continue;
            }
        };
        let problem = if record.id.trim().is_empty() {
            Some("field `id` is empty".to_string())
        } else if record.question.trim().is_empty() {
            Some("field `question` is empty".to_string())
        } else if !seen.insert(record.id.clone()) {
            Some(format!("duplicate id {:?}", record.id))
        } else {
            None
        };
        match problem {
            Some(message) => errors.push(LineError { line: line_no, message }),
            None => records.push(record),
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(errors)
    }
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusRecord>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&text).map_err(CorpusError::Parse)
}

pub fn to_jsonl(records: &[CorpusRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Cosine similarity of the lowercased word sets of `a` and `b`.
pub fn score(a: &str, b: &str) -> f64 {
    let a: BTreeSet<String> = normalized_words(a).into_iter().collect();
    let b: BTreeSet<String> = normalized_words(b).into_iter().collect();
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let shared = a.intersection(&b).count() as f64;
    shared / ((a.len() * b.len()) as f64).sqrt()
}

/// Indices of the top `k` pool entries by [`score`], ties in pool order.
pub fn rank_indices<S: AsRef<str>>(question: &str, pool: &[S], k: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = pool
        .iter()
        .enumerate()
        .map(|(i, p)| (i, score(question, p.as_ref())))
        .collect();
    scored.sort_by(|x, y| y.1.total_cmp(&x.1));
    scored.into_iter().take(k).map(|(i, _)| i).collect()
}

pub fn rank_contexts<S: AsRef<str>>(question: &str, pool: &[S], k: usize) -> Vec<String> {
    rank_indices(question, pool, k)
        .into_iter()
        .map(|i| pool[i].as_ref().to_string())
        .collect()
}

/// Fills each record's few-shot examples with the `k` most similar records of
/// `pool` (gold answer included), skipping entries with the same id or no
/// answer.
pub fn attach_examples(records: &mut [CorpusRecord], pool: &[CorpusRecord], k: usize) {
    for record in records {
        let candidates: Vec<&CorpusRecord> = pool
            .iter()
            .filter(|p| p.id != record.id && !p.answers.is_empty())
            .collect();
        let questions: Vec<&str> = candidates.iter().map(|p| p.question.as_str()).collect();
        record.examples = rank_indices(&record.question, &questions, k)
            .into_iter()
            .map(|i| FewShotExample {
                question: candidates[i].question.clone(),
                answer: candidates[i].answers[0].clone(),
            })
            .collect();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "k")]
pub enum PromptMode {
    ClosedBook,
    OpenBook(usize),
    FewShot(usize),
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptMode::ClosedBook => write!(f, "closed-book"),
            PromptMode::OpenBook(k) => write!(f, "open-book({k})"),
            PromptMode::FewShot(k) => write!(f, "few-shot({k})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltPrompt {
    pub text: String,
    /// The passages or examples block, also handed to the refiner.
    pub context: Option<String>,
    pub warnings: Vec<String>,
}

/// Open-book prompts take the first `k` passages in their supplied order;
/// few-shot prompts take the `k` examples whose questions rank highest
/// against the record's question.
pub fn build_prompt(record: &CorpusRecord, mode: PromptMode, templates: &Templates) -> BuiltPrompt {
    let mut warnings = Vec::new();
    let mut shortfall = |what: &str, k: usize, have: usize| {
        if have < k {
            warnings.push(format!("{}: requested {k} {what}, {have} available", record.id));
        }
    };
    match mode {
        PromptMode::ClosedBook => BuiltPrompt {
            text: render(&templates.generate_closed, &[("question", &record.question)]),
            context: None,
            warnings,
        },
        PromptMode::OpenBook(k) => {
            shortfall("passages", k, record.passages.len());
            let block: String = record
                .passages
                .iter()
                .take(k)
                .enumerate()
                .map(|(i, p)| format!("Passage [{}]: {}\n", i + 1, p.trim()))
                .collect();
            BuiltPrompt {
                text: render(&templates.generate_open, &[("passages", &block), ("question", &record.question)]),
                context: (!block.is_empty()).then(|| block.trim_end().to_string()),
                warnings,
            }
        }
        PromptMode::FewShot(k) => {
            shortfall("examples", k, record.examples.len());
            let questions: Vec<&str> = record.examples.iter().map(|e| e.question.as_str()).collect();
            let block: String = rank_indices(&record.question, &questions, k)
                .into_iter()
                .map(|i| {
                    let e = &record.examples[i];
                    format!("Question: {}\nAnswer: {}\n\n", e.question.trim(), e.answer.trim())
                })
                .collect();
            BuiltPrompt {
                text: render(&templates.generate_fewshot, &[("examples", &block), ("question", &record.question)]),
                context: (!block.is_empty()).then(|| block.trim_end().to_string()),
                warnings,
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unrecognized layout: {0}")]
    Layout(String),
}

fn str_field<'a>(v: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| v.get(*k).and_then(Value::as_str))
}

fn long_answers(v: &Value) -> Vec<String> {
    v.get("annotations")
        .and_then(Value::as_array)
        .map(|a| {
            a.iter()
                .filter_map(|x| x.get("long_answer").and_then(Value::as_str))
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

fn docs(v: &Value) -> Vec<String> {
    v.get("docs")
        .and_then(Value::as_array)
        .map(|a| {
            a.iter()
                .filter_map(|d| {
                    let text = d.get("text").and_then(Value::as_str)?;
                    Some(match d.get("title").and_then(Value::as_str) {
                        Some(t) if !t.is_empty() => format!("{t}: {text}"),
                        _ => text.to_string(),
                    })
                })
                .collect()
        })
        .unwrap_or_default()
}

fn asqa_record(id: String, v: &Value) -> Result<CorpusRecord, ConvertError> {
    let question = str_field(v, &["ambiguous_question", "question"])
        .ok_or_else(|| ConvertError::Layout(format!("{id}: no ambiguous_question or question")))?;
    let mut answers = long_answers(v);
    if answers.is_empty() {
        if let Some(a) = str_field(v, &["answer"]) {
            answers.push(a.to_string());
        }
    }
    Ok(CorpusRecord {
        id,
        question: question.to_string(),
        answers,
        passages: docs(v),
        examples: Vec::new(),
    })
}

/// Converts ASQA-style data. Two layouts are accepted:
///
/// * the original release, `{"<split>": {"<sample_id>": {"ambiguous_question",
///   "annotations": [{"long_answer"}], ...}}}`, where `split` selects the split
///   (default `dev`);
/// * the citation-benchmark evaluation files, a list of `{"sample_id",
///   "question", "annotations", "docs": [{"title", "text"}]}`.
pub fn convert_asqa(json: &str, split: Option<&str>) -> Result<Vec<CorpusRecord>, ConvertError> {
    let root: Value = serde_json::from_str(json)?;
    match &root {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let id = str_field(v, &["sample_id", "id"]).map_or_else(|| format!("asqa-{i}"), str::to_string);
                asqa_record(id, v)
            })
            .collect(),
        Value::Object(map) => {
            let split = split.unwrap_or("dev");
            let samples = map
                .get(split)
                .and_then(Value::as_object)
                .ok_or_else(|| ConvertError::Layout(format!("no split {split:?}")))?;
            samples.iter().map(|(id, v)| asqa_record(id.clone(), v)).collect()
        }
        _ => Err(ConvertError::Layout("expected an object or a list".into())),
    }
}

/// Converts QuoteSum-style rows, given as a JSON list or as JSON lines.
/// Each row has `qid`, `q` (or `question`), `a` (or `answer`, `summary`) and
/// sources `source1`, `source2`, … with optional `title1`, `title2`, ….
pub fn convert_quotesum(text: &str) -> Result<Vec<CorpusRecord>, ConvertError> {
    let rows: Vec<Value> = match serde_json::from_str::<Value>(text) {
        Ok(Value::Array(rows)) => rows,
        Ok(row @ Value::Object(_)) => vec![row],
        _ => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?,
    };
    rows.iter()
        .enumerate()
        .map(|(i, v)| {
            let id = str_field(v, &["qid", "id"]).map_or_else(|| format!("quotesum-{i}"), str::to_string);
            let question = str_field(v, &["q", "question"])
                .ok_or_else(|| ConvertError::Layout(format!("{id}: no q or question")))?;
            let answers = str_field(v, &["a", "answer", "summary"])
                .map(|a| vec![a.to_string()])
                .unwrap_or_default();
            let mut passages = Vec::new();
            for n in 1.. {
                let Some(source) = v.get(format!("source{n}")).and_then(Value::as_str) else {
                    break;
                };
                if source.trim().is_empty() {
                    continue;
                }
                passages.push(match v.get(format!("title{n}")).and_then(Value::as_str) {
                    Some(t) if !t.is_empty() => format!("{t}: {source}"),
                    _ => source.to_string(),
                });
            }
            Ok(CorpusRecord {
                id,
                question: question.to_string(),
                answers,
                passages,
                examples: Vec::new(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str) -> CorpusRecord {
        CorpusRecord {
            id: id.into(),
            question: "Who wrote Hamlet?".into(),
            answers: vec!["Shakespeare wrote it.".into()],
            passages: vec!["Hamlet is a tragedy.".into(), "Shakespeare wrote Hamlet.".into(), "Third.".into()],
            examples: vec![],
        }
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        assert_eq!(parse_corpus("").unwrap(), vec![]);
        assert_eq!(parse_corpus("\n\n").unwrap(), vec![]);
    }

    #[test]
    fn missing_question_names_field() {
        let errs = parse_corpus("{\"id\":\"a\",\"question\":\"q\"}\n{\"id\":\"b\"}\n").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].line, 2);
        assert!(errs[0].message.contains("question"), "{}", errs[0].message);
    }

    #[test]
    fn errors_are_collected_and_duplicates_caught() {
        let text = "not json\n{\"id\":\"a\",\"question\":\"q\"}\n{\"id\":\"a\",\"question\":\"q2\"}\n{\"id\":\"c\",\"question\":\" \"}\n";
        let errs = parse_corpus(text).unwrap_err();
        assert_eq!(errs.iter().map(|e| e.line).collect::<Vec<_>>(), [1, 3, 4]);
        assert!(errs[1].message.contains("duplicate"));
    }

    #[test]
    fn reference_answers_alias() {
        let r = parse_corpus("{\"id\":\"a\",\"question\":\"q\",\"reference_answers\":[\"x\"]}").unwrap();
        assert_eq!(r[0].answers, ["x"]);
    }

    #[test]
    fn round_trip() {
        let records = vec![record("a"), record("b")];
        assert_eq!(parse_corpus(&to_jsonl(&records)).unwrap(), records);
    }

    #[test]
    fn ranking() {
        let pool = ["unrelated text", "who wrote hamlet", "Hamlet"];
        assert!(rank_contexts("Who wrote Hamlet?", &pool, 0).is_empty());
        assert_eq!(rank_contexts("Who wrote Hamlet?", &pool, 1), ["who wrote hamlet"]);
        assert_eq!(rank_contexts("Who wrote Hamlet?", &pool, 10).len(), 3);
        assert_eq!(rank_indices("zzz", &["a", "b", "a"], 3), [0, 1, 2]);
    }

    #[test]
    fn score_values() {
        assert!((score("a b", "a b") - 1.0).abs() < 1e-12);
        assert_eq!(score("a b", "c d"), 0.0);
        assert!((score("a b", "a c d e") - 1.0 / 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(score("", "a"), 0.0);
    }

    #[test]
    fn closed_book_has_no_passages() {
        let p = build_prompt(&record("a"), PromptMode::ClosedBook, &Templates::default());
        assert!(p.text.contains("Who wrote Hamlet?"));
        assert!(!p.text.contains("Passage"));
        assert!(p.context.is_none());
    }

    #[test]
    fn open_book_truncates_with_warning() {
        let p = build_prompt(&record("a"), PromptMode::OpenBook(5), &Templates::default());
        assert_eq!(p.text.matches("Passage [").count(), 3);
        assert_eq!(p.warnings.len(), 1);
        let p = build_prompt(&record("a"), PromptMode::OpenBook(2), &Templates::default());
        assert_eq!(p.text.matches("Passage [").count(), 2);
        assert!(p.warnings.is_empty());
        assert_eq!(p.context.as_deref(), Some("Passage [1]: Hamlet is a tragedy.\nPassage [2]: Shakespeare wrote Hamlet."));
    }

    #[test]
    fn few_shot_orders_by_similarity() {
        let mut r = record("a");
        r.examples = vec![
            FewShotExample { question: "What is rain?".into(), answer: "Water.".into() },
            FewShotExample { question: "Who wrote Macbeth?".into(), answer: "Shakespeare.".into() },
        ];
        let p = build_prompt(&r, PromptMode::FewShot(2), &Templates::default());
        let macbeth = p.text.find("Macbeth").unwrap();
        let rain = p.text.find("rain").unwrap();
        assert!(macbeth < rain);
        assert!(p.text.contains("Answer: Shakespeare."));
    }

    #[test]
    fn attach_examples_excludes_self() {
        let pool = vec![record("a"), CorpusRecord { id: "b".into(), question: "Who wrote Hamlet exactly?".into(), ..record("b") }];
        let mut targets = vec![record("a")];
        attach_examples(&mut targets, &pool, 5);
        assert_eq!(targets[0].examples.len(), 1);
        assert_eq!(targets[0].examples[0].question, "Who wrote Hamlet exactly?");
    }

    #[test]
    fn asqa_layouts() {
        let original = r#"{"dev": {"s1": {"ambiguous_question": "Q?", "annotations": [{"long_answer": "L."}]}}}"#;
        let r = convert_asqa(original, None).unwrap();
        assert_eq!((r[0].id.as_str(), r[0].question.as_str(), r[0].answers[0].as_str()), ("s1", "Q?", "L."));
        let alce = r#"[{"sample_id": "s2", "question": "Q2?", "annotations": [{"long_answer": "A."}], "docs": [{"title": "T", "text": "X."}]}]"#;
        let r = convert_asqa(alce, None).unwrap();
        assert_eq!(r[0].passages, ["T: X."]);
        assert!(convert_asqa(original, Some("train")).is_err());
    }

    #[test]
    fn quotesum_rows() {
        let rows = "{\"qid\": \"1\", \"q\": \"Q?\", \"a\": \"A [1].\", \"title1\": \"T\", \"source1\": \"S1\", \"source2\": \"S2\"}\n";
        let r = convert_quotesum(rows).unwrap();
        assert_eq!(r[0].passages, ["T: S1", "S2"]);
        assert_eq!(r[0].answers, ["A [1]."]);
    }

    proptest! {
        #[test]
        fn score_matches_set_cosine(q in "[a-e ]{0,12}", p in "[a-e ]{0,12}") {
            let words = |s: &str| s.split_whitespace().map(str::to_string).collect::<BTreeSet<_>>();
            let (a, b) = (words(&q), words(&p));
            let expected = if a.is_empty() || b.is_empty() {
                0.0
            } else {
                a.intersection(&b).count() as f64 / ((a.len() * b.len()) as f64).sqrt()
            };
            prop_assert!((score(&q, &p) - expected).abs() < 1e-12);
        }
    }
}
