//! Verification and refinement orchestrators.
//!
//! * Streaming: each sentence is verified against the already finalized
//!   prefix as it arrives; a rejected sentence is rewritten and the rewrite
//!   replaces it in the prefix before the next sentence is verified.
//! * Full: the finished answer gets one verdict; if it is false the refiner
//!   regenerates the whole answer.
//! * None: the generated answer passes through untouched.
//!
//! Within one answer the verify/refine chain is strictly sequential because
//! every verifier input embeds the refined prefix. Segmentation may run
//! ahead of verification (see [`run_streaming_vr_chunks`]) and separate
//! answers may run in parallel (see [`run_batch`]).

mod batch;
mod full;
mod streaming;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{
    Backend, ModelRequest, ProviderError, ProviderRole,
};
use crate::segmenter::{join_sentences, Sentence};
use crate::templates::{render, Templates};

pub use batch::{run_batch, to_jsonl, AnswerError, AnswerOutcome, BatchOptions, RunMode};
pub use full::{compare, full_from_verdicts, run_full_vr, run_none, VerdictSource};
pub use streaming::{
    run_streaming_vr, run_streaming_vr_chunks, run_streaming_vr_feedback, StreamingRun,
};

/// The three model roles a run needs.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub generator: &'a dyn Backend,
    pub verifier: &'a dyn Backend,
    pub refiner: &'a dyn Backend,
}

impl<'a> Backends<'a> {
    /// One backend serving every role.
    pub fn uniform(backend: &'a dyn Backend) -> Self {
        Self {
            generator: backend,
            verifier: backend,
            refiner: backend,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Prepend the question to verifier prompts.
    pub verifier_sees_question: bool,
    /// Verify each refined sentence once more. The second verdict is only
    /// recorded; there is no further refinement. Its tokens count towards
    /// `t_ver`, so the verification-cost identity no longer holds when set.
    pub reverify_refined: bool,
    pub max_tokens: u32,
    pub verify_max_tokens: u32,
    pub temperature: f64,
    /// Upper bound on verified sentences in feedback mode.
    pub max_feedback_steps: usize,
    pub templates: Arc<Templates>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            verifier_sees_question: true,
            reverify_refined: false,
            max_tokens: 512,
            verify_max_tokens: 8,
            temperature: 0.0,
            max_feedback_steps: 64,
            templates: Arc::new(Templates::default()),
        }
    }
}

impl PipelineConfig {
    pub(crate) fn verify_request(&self, question: &str, input: &str, subject: &str) -> ModelRequest {
        let prompt = if self.verifier_sees_question {
            render(&self.templates.verify, &[("question", question), ("input", input)])
        } else {
            input.to_string()
        };
        ModelRequest::new(ProviderRole::Verify, prompt)
            .with_subject(subject)
            .with_max_tokens(self.verify_max_tokens)
            .with_temperature(self.temperature)
    }

    pub(crate) fn refine_sentence_request(
        &self,
        question: &str,
        context: Option<&str>,
        prefix: &IntermediateAnswer,
        sentence: &str,
    ) -> ModelRequest {
        let prefix_text = prefix.joined();
        let prefix_text = if prefix_text.is_empty() { "(empty)".to_string() } else { prefix_text };
        let prompt = render(
            &self.templates.refine_sentence,
            &[
                ("context", &context_block(context)),
                ("question", question),
                ("prefix", &prefix_text),
                ("sentence", sentence),
            ],
        );
        ModelRequest::new(ProviderRole::Refine, prompt)
            .with_subject(sentence)
            .with_max_tokens(self.max_tokens)
            .with_temperature(self.temperature)
    }

    pub(crate) fn refine_full_request(&self, question: &str, context: Option<&str>, answer: &str) -> ModelRequest {
        let prompt = render(
            &self.templates.refine_full,
            &[("context", &context_block(context)), ("question", question), ("answer", answer)],
        );
        ModelRequest::new(ProviderRole::Refine, prompt)
            .with_subject(answer)
            .with_max_tokens(self.max_tokens)
            .with_temperature(self.temperature)
    }
}

/// The generation-time context block, verbatim, or nothing.
fn context_block(context: Option<&str>) -> String {
    match context {
        Some(d) if !d.trim().is_empty() => format!("Context:\n{d}\n\n"),
        _ => String::new(),
    }
}

/// A verifier label with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: bool,
    /// Name of the backend that produced it.
    pub provider: String,
    /// Step index `t` (1-based); 0 for a whole-answer verdict.
    pub stage: usize,
}

/// The finalized prefix `s̃_1 … s̃_t`.
///
/// Offsets of the sentences refer to whatever text produced them: the
/// original answer for accepted sentences, the refiner output for rewrites.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntermediateAnswer {
    pub finalized: Vec<Sentence>,
    pub step: usize,
}

impl IntermediateAnswer {
    pub fn push(&mut self, sentence: Sentence) {
        self.finalized.push(sentence);
        self.step = self.finalized.len();
    }

    pub fn joined(&self) -> String {
        join_sentences(self.finalized.iter().map(|s| s.text.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.finalized.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub original: Sentence,
    /// Exactly what the verifier was asked to judge (`… [SEP] s_t`).
    pub verifier_input: String,
    pub verdict: Verdict,
    /// The refiner output, re-segmented. Present iff the verdict is false.
    pub refined: Option<crate::segmenter::SegmentedAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverdict: Option<Verdict>,
    pub tokens_verified: u64,
    pub tokens_refined: u64,
    pub latency_ms: u64,
}

impl StepRecord {
    /// `s̃_t` as text.
    pub fn output(&self) -> String {
        match &self.refined {
            Some(r) => r.joined(),
            None => self.original.text.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    None,
    FullVR,
    StreamingVR,
}

/// Per-answer token totals by role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    pub t_gen: u64,
    pub t_ver: u64,
    pub t_ref: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub question: String,
    pub mode: Mode,
    pub final_answer: String,
    pub steps: Vec<StepRecord>,
    pub ledger: TokenLedger,
    /// Whole-answer verdict (full mode only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_verdict: Option<Verdict>,
    /// Sentence verdicts the whole-answer verdict was derived from, if any.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sentence_verdicts: Vec<bool>,
    pub latency_ms: u64,
}

impl PipelineResult {
    /// Per-sentence verdicts in order: from the steps in streaming mode, from
    /// `sentence_verdicts` in full mode.
    pub fn verdicts(&self) -> Vec<bool> {
        if self.steps.is_empty() {
            self.sentence_verdicts.clone()
        } else {
            self.steps.iter().map(|s| s.verdict.value).collect()
        }
    }

    pub fn refined(&self) -> bool {
        self.ledger.t_ref > 0 || self.steps.iter().any(|s| s.refined.is_some())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{role} call failed at step {step}: {source}")]
    Provider {
        step: usize,
        role: ProviderRole,
        #[source]
        source: ProviderError,
    },
    #[error("refiner returned no text at step {step}")]
    EmptyRefinement { step: usize },
}

impl PipelineError {
    pub fn step(&self) -> usize {
        match self {
            PipelineError::Provider { step, .. } | PipelineError::EmptyRefinement { step } => *step,
        }
    }

    /// The verifier produced something that is not a verdict; the answer
    /// cannot be scored.
    pub fn is_unscored(&self) -> bool {
        matches!(
            self,
            PipelineError::Provider {
                source: ProviderError::VerdictParse { .. },
                ..
            }
        )
    }
}

pub(crate) fn provider_err(step: usize, role: ProviderRole) -> impl FnOnce(ProviderError) -> PipelineError {
    move |source| PipelineError::Provider { step, role, source }
}

