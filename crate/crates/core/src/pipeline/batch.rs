use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_prompt, CorpusRecord, PromptMode};
use crate::providers::{call, ModelRequest, ProviderRole};
use crate::segmenter::segment;

use super::{
    compare, run_full_vr, run_none, run_streaming_vr, run_streaming_vr_feedback, Backends,
    PipelineConfig, PipelineError, PipelineResult, VerdictSource,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    None,
    Full,
    Streaming,
    /// Streaming and full on one set of sentence verdicts.
    Compare,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptions {
    pub modes: Vec<RunMode>,
    pub prompt_mode: PromptMode,
    /// Verdict source for a standalone full run. Compare always shares the
    /// streaming verdicts.
    pub full_verdict_source: VerdictSource,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    /// Regenerate the continuation after each refinement (streaming only).
    pub feedback: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            modes: vec![RunMode::Compare],
            prompt_mode: PromptMode::ClosedBook,
            full_verdict_source: VerdictSource::FromSentenceVerdicts,
            jobs: 0,
            feedback: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerError {
    /// `generate`, `streaming`, `full` or `compare`.
    pub stage: String,
    pub step: usize,
    /// The verifier output could not be read as a verdict.
    pub unscored: bool,
    pub message: String,
}

impl AnswerError {
    fn new(stage: &str, err: &PipelineError) -> Self {
        Self {
            stage: stage.to_string(),
            step: err.step(),
            unscored: err.is_unscored(),
            message: err.to_string(),
        }
    }
}

/// Everything produced for one corpus record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOutcome {
    pub id: String,
    pub question: String,
    pub references: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompt_warnings: Vec<String>,
    pub generated: String,
    pub t_gen: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub none: Option<PipelineResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub streaming: Option<PipelineResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full: Option<PipelineResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<AnswerError>,
}

/// Generates and post-processes every record. Records run in parallel; an
/// error aborts only its own answer. Output is sorted by record id.
pub fn run_batch(
    records: &[CorpusRecord],
    backends: Backends<'_>,
    config: &PipelineConfig,
    options: &BatchOptions,
) -> Vec<AnswerOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .expect("thread pool");
    let mut outcomes: Vec<AnswerOutcome> = pool.install(|| {
        records
            .par_iter()
            .map(|r| run_record(r, backends, config, options))
            .collect()
    });
    outcomes.sort_by(|a, b| a.id.cmp(&b.id));
    outcomes
}

/// One JSON object per line, in the given order.
pub fn to_jsonl(outcomes: &[AnswerOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        out.push_str(&serde_json::to_string(o).expect("outcomes serialize"));
        out.push('\n');
    }
    out
}

fn run_record(
    record: &CorpusRecord,
    backends: Backends<'_>,
    config: &PipelineConfig,
    options: &BatchOptions,
) -> AnswerOutcome {
    let prompt = build_prompt(record, options.prompt_mode, &config.templates);
    let mut outcome = AnswerOutcome {
        id: record.id.clone(),
        question: record.question.clone(),
        references: record.answers.clone(),
        prompt_warnings: prompt.warnings.clone(),
        generated: String::new(),
        t_gen: 0,
        none: None,
        streaming: None,
        full: None,
        error: None,
    };
    let request = ModelRequest::new(ProviderRole::Generate, prompt.text.as_str())
        .with_subject(record.question.as_str())
        .with_max_tokens(config.max_tokens)
        .with_temperature(config.temperature);
    let response = match call(&request, backends.generator) {
        Ok(r) => r,
        Err(source) => {
            let err = PipelineError::Provider { step: 0, role: ProviderRole::Generate, source };
            outcome.error = Some(AnswerError::new("generate", &err));
            return outcome;
        }
    };
    outcome.generated = response.text.trim().to_string();
    outcome.t_gen = response.tokens_generated;
    let answer = segment(&response.text);
    let question = record.question.as_str();
    let context = prompt.context.as_deref();
    let with_gen = |mut r: PipelineResult| {
        r.ledger.t_gen = response.tokens_generated;
        r
    };

    let mut modes = options.modes.clone();
    modes.sort();
    modes.dedup();
    let comparing = modes.contains(&RunMode::Compare);
    for mode in modes {
        let result = match mode {
            RunMode::None => {
                outcome.none = Some(with_gen(run_none(question, &answer)));
                Ok(())
            }
            RunMode::Streaming if options.feedback => {
                run_streaming_vr_feedback(question, context, &prompt.text, backends, config)
                    .map(|r| outcome.streaming = Some(r))
            }
            RunMode::Streaming if !comparing => {
                run_streaming_vr(question, context, answer.sentences.iter().cloned(), backends, config)
                    .map(|r| outcome.streaming = Some(with_gen(r)))
            }
            RunMode::Full if !comparing => {
                run_full_vr(question, context, &answer, backends, config, options.full_verdict_source)
                    .map(|r| outcome.full = Some(with_gen(r)))
            }
            RunMode::Compare => compare(question, context, &answer, backends, config).map(|(s, f)| {
                if outcome.streaming.is_none() {
                    outcome.streaming = Some(with_gen(s));
                }
                outcome.full = Some(with_gen(f));
            }),
            RunMode::Streaming | RunMode::Full => Ok(()),
        };
        if let Err(err) = result {
            let stage = match mode {
                RunMode::None => "none",
                RunMode::Full => "full",
                RunMode::Streaming => "streaming",
                RunMode::Compare => "compare",
            };
            outcome.error = Some(AnswerError::new(stage, &err));
            break;
        }
    }
    outcome
}
