//! Training data for a streaming verifier.
//!
//! A reference answer is split into sentences and replayed stage by stage:
//! the example for stage `t` is `s_1 … s_{t-1} [SEP] s_t`, labeled true.
//! Extra true examples swap `s_t` for a paraphrase; false examples swap it
//! for a falsified rewrite produced at each configured temperature. Only the
//! sentence after `[SEP]` ever differs from the reference.
//!
//! Output is line-delimited JSON:
//! `{"question", "input", "label", "stage", "provenance", "temperature"}`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LineError;
use crate::providers::{
    call, format_verifier_parts, split_verifier_input, Backend, ModelRequest, ProviderError,
    ProviderRole, SEP,
};
use crate::segmenter::segment;
use crate::templates::{render, Templates};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    True,
    False,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ReferenceTrue,
    Paraphrase,
    Falsified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierExample {
    pub question: String,
    pub input: String,
    pub label: Label,
    pub stage: usize,
    pub provenance: Provenance,
    pub temperature: Option<f64>,
}

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("reference answer has no sentences")]
    EmptyAnswer,
    #[error("model returned no text")]
    EmptyModelOutput,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{} malformed line(s): {}", .0.len(), .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Parse(Vec<LineError>),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One true example per stage of the reference answer.
pub fn build_stages(question: &str, reference_answer: &str) -> Result<Vec<VerifierExample>, DatagenError> {
    let answer = segment(reference_answer);
    if answer.is_empty() {
        return Err(DatagenError::EmptyAnswer);
    }
    let texts = answer.texts();
    Ok((0..texts.len())
        .map(|i| VerifierExample {
            question: question.to_string(),
            input: format_verifier_parts(texts[..i].iter().copied(), texts[i]),
            label: Label::True,
            stage: i + 1,
            provenance: Provenance::ReferenceTrue,
            temperature: None,
        })
        .collect())
}

fn rewrite(
    task: &str,
    template: &str,
    question: &str,
    prefix: &str,
    sentence: &str,
    backend: &dyn Backend,
    temperature: f64,
) -> Result<String, DatagenError> {
    let prompt = render(template, &[("question", question), ("answer", prefix), ("sentence", sentence)]);
    let request = ModelRequest::new(ProviderRole::Generate, prompt)
        .with_subject(sentence)
        .with_task(task)
        .with_temperature(temperature);
    let text = call(&request, backend)?.text;
    let text = text.trim();
    if text.is_empty() {
        return Err(DatagenError::EmptyModelOutput);
    }
    Ok(text.to_string())
}

/// Asks the model to turn `sentence` into a plausible falsehood.
pub fn falsify(
    question: &str,
    prefix: &str,
    sentence: &str,
    backend: &dyn Backend,
    temperature: f64,
    templates: &Templates,
) -> Result<String, DatagenError> {
    rewrite("falsify", &templates.falsify, question, prefix, sentence, backend, temperature)
}

/// Asks the model to reword `sentence` without changing its facts.
pub fn paraphrase(
    question: &str,
    prefix: &str,
    sentence: &str,
    backend: &dyn Backend,
    temperature: f64,
    templates: &Templates,
) -> Result<String, DatagenError> {
    rewrite("paraphrase", &templates.paraphrase, question, prefix, sentence, backend, temperature)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParaphraseCount {
    /// Enough paraphrases per stage that true and false examples balance:
    /// one fewer than the number of temperatures.
    Balanced,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatagenConfig {
    /// One falsification per temperature per stage.
    pub temperatures: Vec<f64>,
    pub paraphrases: ParaphraseCount,
    pub templates: Templates,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            temperatures: vec![0.3, 0.5, 0.7],
            paraphrases: ParaphraseCount::Balanced,
            templates: Templates::default(),
            jobs: 0,
        }
    }
}

impl DatagenConfig {
    fn paraphrase_count(&self) -> usize {
        match self.paraphrases {
            ParaphraseCount::Balanced => self.temperatures.len().saturating_sub(1),
            ParaphraseCount::Fixed(n) => n,
        }
    }

    /// Paraphrase `k` cycles through the temperatures.
    fn paraphrase_temperature(&self, k: usize) -> f64 {
        if self.temperatures.is_empty() {
            0.7
        } else {
            self.temperatures[k % self.temperatures.len()]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub question: String,
    #[serde(alias = "reference_answer")]
    pub answer: String,
}

pub fn parse_sources(text: &str) -> Result<Vec<SourceRecord>, DatagenError> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => records.push(r),
            Err(e) => errors.push(LineError { line: i + 1, message: e.to_string() }),
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(DatagenError::Parse(errors))
    }
}

pub fn load_sources(path: &Path) -> Result<Vec<SourceRecord>, DatagenError> {
    parse_sources(&fs::read_to_string(path)?)
}

/// A model rewrite that was not used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub record: usize,
    pub stage: usize,
    pub provenance: Provenance,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub record: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusBuild {
    pub examples: Vec<VerifierExample>,
    pub failures: Vec<RecordFailure>,
    pub skipped: Vec<Skipped>,
}

/// Why a rewrite of `original` cannot be used as a replacement final
/// sentence, if it cannot.
fn unusable(original: &str, rewritten: &str) -> Option<&'static str> {
    if rewritten.contains(SEP) {
        Some("output contains the separator")
    } else if rewritten == original {
        Some("output unchanged")
    } else if segment(rewritten).len() != 1 {
        Some("output is not a single sentence")
    } else {
        None
    }
}

fn build_record(
    index: usize,
    record: &SourceRecord,
    backend: &dyn Backend,
    config: &DatagenConfig,
) -> Result<(Vec<VerifierExample>, Vec<Skipped>), DatagenError> {
    let stages = build_stages(&record.question, &record.answer)?;
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    for truth in stages {
        let (prefix, sentence) = split_verifier_input(&truth.input).expect("stage input has a separator");
        let (prefix, sentence) = (prefix.to_string(), sentence.to_string());
        let stage = truth.stage;
        let mut variant = |provenance, label, temperature, text: String, examples: &mut Vec<VerifierExample>| {
            match unusable(&sentence, &text) {
                Some(reason) => skipped.push(Skipped {
                    record: index,
                    stage,
                    provenance,
                    reason: reason.to_string(),
                }),
                None => examples.push(VerifierExample {
                    question: record.question.clone(),
                    input: format_verifier_parts((!prefix.is_empty()).then_some(prefix.as_str()), &text),
                    label,
                    stage,
                    provenance,
                    temperature: Some(temperature),
                }),
            }
        };
        examples.push(truth.clone());
        for k in 0..config.paraphrase_count() {
            let t = config.paraphrase_temperature(k);
            let text = paraphrase(&record.question, &prefix, &sentence, backend, t, &config.templates)?;
            variant(Provenance::Paraphrase, Label::True, t, text, &mut examples);
        }
        for &t in &config.temperatures {
            let text = falsify(&record.question, &prefix, &sentence, backend, t, &config.templates)?;
            variant(Provenance::Falsified, Label::False, t, text, &mut examples);
        }
    }
    Ok((examples, skipped))
}

/// Builds examples for every record. A record whose model calls fail is
/// left out entirely and reported; the rest of the corpus is still built.
/// Output order is record, stage, then reference, paraphrases and
/// falsifications in temperature order.
pub fn build_corpus(records: &[SourceRecord], backend: &dyn Backend, config: &DatagenConfig) -> CorpusBuild {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .expect("thread pool");
    let results: Vec<_> = pool.install(|| {
        records
            .par_iter()
            .enumerate()
            .map(|(i, r)| build_record(i, r, backend, config))
            .collect()
    });
    let mut out = CorpusBuild::default();
    for (i, result) in results.into_iter().enumerate() {
        match result {
            Ok((examples, skipped)) => {
                out.examples.extend(examples);
                out.skipped.extend(skipped);
            }
            Err(e) => out.failures.push(RecordFailure { record: i, message: e.to_string() }),
        }
    }
    out
}

pub fn to_jsonl(examples: &[VerifierExample]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&serde_json::to_string(e).expect("examples serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<VerifierExample>, DatagenError> {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(e) => out.push(e),
            Err(e) => errors.push(LineError { line: i + 1, message: e.to_string() }),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(DatagenError::Parse(errors))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusCheck {
    pub examples: usize,
    pub true_examples: usize,
    pub false_examples: usize,
    /// Stage → (true, false) counts.
    pub stages: BTreeMap<usize, (usize, usize)>,
    pub violations: Vec<String>,
}

impl CorpusCheck {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the structural invariants of a generated corpus:
///
/// * every input has exactly one separator, followed by one sentence, and
///   the prefix before it has `stage - 1` sentences;
/// * every false or paraphrased example has a reference example of the same
///   question and stage with a byte-identical prefix and a different final
///   sentence;
/// * every question covers stages `1..=n` with reference examples.
pub fn check_corpus(examples: &[VerifierExample]) -> CorpusCheck {
    let mut check = CorpusCheck {
        examples: examples.len(),
        ..CorpusCheck::default()
    };
    let mut references: HashMap<(&str, usize), &str> = HashMap::new();
    for e in examples {
        if e.provenance == Provenance::ReferenceTrue {
            references.insert((e.question.as_str(), e.stage), e.input.as_str());
        }
    }
    let mut stages_by_question: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        let counts = check.stages.entry(e.stage).or_default();
        match e.label {
            Label::True => {
                check.true_examples += 1;
                counts.0 += 1;
            }
            Label::False => {
                check.false_examples += 1;
                counts.1 += 1;
            }
        }
        let mut fail = |m: String| check.violations.push(format!("example {}: {m}", i + 1));
        if e.input.matches(SEP).count() != 1 {
            fail(format!("{} separators", e.input.matches(SEP).count()));
            continue;
        }
        let Some((prefix, candidate)) = split_verifier_input(&e.input) else {
            fail("separator not followed by a sentence".into());
            continue;
        };
        if segment(candidate).len() != 1 {
            fail("more than one sentence after the separator".into());
        }
        if e.stage == 0 || segment(prefix).len() != e.stage - 1 {
            fail(format!("prefix does not have {} sentence(s)", e.stage.saturating_sub(1)));
        }
        let expected_label = match e.provenance {
            Provenance::Falsified => Label::False,
            _ => Label::True,
        };
        if e.label != expected_label {
            fail(format!("{:?} example labeled {:?}", e.provenance, e.label));
        }
        match e.provenance {
            Provenance::ReferenceTrue => stages_by_question.entry(e.question.as_str()).or_default().push(e.stage),
            _ => match references.get(&(e.question.as_str(), e.stage)) {
                None => fail("no reference example for this stage".into()),
                Some(reference) => {
                    let (ref_prefix, ref_candidate) = split_verifier_input(reference).unwrap_or(("", ""));
                    if ref_prefix != prefix {
                        fail("prefix differs from the reference".into());
                    }
                    if ref_candidate == candidate {
                        fail("final sentence identical to the reference".into());
                    }
                }
            },
        }
    }
    for (question, mut stages) in stages_by_question {
        stages.sort_unstable();
        stages.dedup();
        if stages.iter().enumerate().any(|(i, &s)| s != i + 1) {
            check.violations.push(format!("question {question:?}: stages {stages:?} are not 1..={}", stages.len()));
        }
    }
    check
}
