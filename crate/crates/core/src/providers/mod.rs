//! Model roles and the backends that serve them.
//!
//! Three roles exist: the generator writes answers, the verifier labels a
//! candidate sentence true or false, and the refiner rewrites what the
//! verifier rejected. A [`Backend`] answers raw completion requests; [`call`]
//! wraps it with request validation, verdict parsing and token accounting so
//! every backend behaves the same from the pipeline's point of view.

mod http;
mod recording;
mod scripted;
mod tokens;
mod verdict;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::IntermediateAnswer;

pub use http::{HttpBackend, HttpConfig, RetryPolicy, API_KEY_ENV, BASE_URL_ENV};
pub use recording::RecordingBackend;
pub use scripted::{ScriptRule, ScriptedBackend, ScriptedBehavior, ScriptedReply};
pub use tokens::{count_tokens, normalized_words, tokenize};
pub use verdict::parse_verdict;

/// The literal separator placed before the sentence under verification.
pub const SEP: &str = "[SEP]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderRole {
    Generate,
    Verify,
    Refine,
}

impl std::fmt::Display for ProviderRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProviderRole::Generate => "generate",
            ProviderRole::Verify => "verify",
            ProviderRole::Refine => "refine",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub role: ProviderRole,
    pub prompt: String,
    /// Retrieved passages or few-shot examples. HTTP backends send it as a
    /// system message ahead of the prompt.
    pub context: Option<String>,
    /// What the request is about: the question for generation, the
    /// candidate sentence for verification, the rejected text for
    /// refinement. Scripted backends key their replies on it; it is never
    /// sent over the wire.
    pub subject: Option<String>,
    /// Finer-grained purpose within a role, such as `falsify` or
    /// `paraphrase`. Like the subject, only scripted backends look at it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl ModelRequest {
    pub fn new(role: ProviderRole, prompt: impl Into<String>) -> Self {
        Self {
            role,
            prompt: prompt.into(),
            context: None,
            subject: None,
            task: None,
            max_tokens: 512,
            temperature: 0.0,
        }
    }

    pub fn with_context(mut self, context: Option<&str>) -> Self {
        self.context = context.map(str::to_string);
        self
    }

    pub fn with_subject(mut self, subject: impl Into<String>) -> Self {
        self.subject = Some(subject.into());
        self
    }

    pub fn with_task(mut self, task: impl Into<String>) -> Self {
        self.task = Some(task.into());
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    /// The subject, falling back to the prompt.
    pub fn key(&self) -> &str {
        self.subject.as_deref().unwrap_or(&self.prompt)
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.prompt.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("prompt is empty".into()));
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::InvalidRequest("max_tokens must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub tokens_generated: u64,
    pub tokens_prompt: u64,
    pub latency_ms: u64,
    /// Set for verifier responses only.
    pub verdict: Option<bool>,
}

/// What a backend returns before accounting is applied.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Usage counts reported by the endpoint, preferred over the artifact
    /// tokenizer when present.
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    /// Latency the backend vouches for. When absent, [`call`] measures wall
    /// time.
    pub latency_ms: Option<u64>,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("network error after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("verifier output {text:?} is neither true nor false")]
    VerdictParse { text: String },
    #[error("no scripted {role} reply for {key:?}")]
    ScriptMiss { role: ProviderRole, key: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

/// A model endpoint. Implementations must tolerate concurrent calls.
pub trait Backend: Send + Sync {
    /// Short identifier recorded as verdict provenance.
    fn name(&self) -> &str;

    fn complete(&self, request: &ModelRequest) -> Result<Completion, ProviderError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &ModelRequest) -> Result<Completion, ProviderError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &ModelRequest) -> Result<Completion, ProviderError> {
        (**self).complete(request)
    }
}

/// Sends `request` to `backend` and applies the shared response contract.
pub fn call(request: &ModelRequest, backend: &dyn Backend) -> Result<ModelResponse, ProviderError> {
    request.validate()?;
    let started = Instant::now();
    let completion = backend.complete(request)?;
    let latency_ms = completion
        .latency_ms
        .unwrap_or_else(|| started.elapsed().as_millis() as u64);
    let verdict = match request.role {
        ProviderRole::Verify => Some(parse_verdict(&completion.text).ok_or_else(|| {
            ProviderError::VerdictParse {
                text: completion.text.clone(),
            }
        })?),
        _ => None,
    };
    let tokens_prompt = completion.prompt_tokens.unwrap_or_else(|| {
        count_tokens(&request.prompt) + request.context.as_deref().map_or(0, count_tokens)
    });
    let tokens_generated = completion
        .completion_tokens
        .unwrap_or_else(|| count_tokens(&completion.text));
    Ok(ModelResponse {
        text: completion.text,
        tokens_generated,
        tokens_prompt,
        latency_ms,
        verdict,
    })
}

/// Formats a verifier input: finalized sentences joined by single spaces,
/// then `[SEP]`, then the candidate.
pub fn format_verifier_input(prefix: &IntermediateAnswer, candidate: &str) -> String {
    format_verifier_parts(prefix.finalized.iter().map(|s| s.text.as_str()), candidate)
}

pub fn format_verifier_parts<'a>(prefix: impl IntoIterator<Item = &'a str>, candidate: &str) -> String {
    let mut out = String::new();
    for s in prefix {
        out.push_str(s);
        out.push(' ');
    }
    out.push_str(SEP);
    out.push(' ');
    out.push_str(candidate);
    out
}

/// Inverse of [`format_verifier_input`] on inputs whose sentences contain no
/// literal `[SEP]`: returns the prefix text and the candidate.
pub fn split_verifier_input(input: &str) -> Option<(&str, &str)> {
    let at = input.rfind(SEP)?;
    let prefix = input[..at].strip_suffix(' ').unwrap_or(&input[..at]);
    let candidate = input[at + SEP.len()..].strip_prefix(' ')?;
    Some((prefix, candidate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmenter::Sentence;
    use proptest::prelude::*;

    fn prefix(texts: &[&str]) -> IntermediateAnswer {
        let mut p = IntermediateAnswer::default();
        for t in texts {
            p.push(Sentence::detached(*t));
        }
        p
    }

    #[test]
    fn verifier_input_layout() {
        assert_eq!(format_verifier_input(&prefix(&["A.", "B."]), "C."), "A. B. [SEP] C.");
        assert_eq!(format_verifier_input(&prefix(&[]), "A."), "[SEP] A.");
    }

    #[test]
    fn request_validation() {
        let ok = ModelRequest::new(ProviderRole::Generate, "q");
        assert!(ok.validate().is_ok());
        assert!(ModelRequest::new(ProviderRole::Generate, "  ").validate().is_err());
        assert!(ok.clone().with_max_tokens(0).validate().is_err());
        assert!(ok.clone().with_temperature(2.5).validate().is_err());
        assert!(ok.with_temperature(2.0).validate().is_ok());
    }

    #[test]
    fn call_parses_scripted_false() {
        let backend = ScriptedBackend::new(
            "s",
            ScriptedBehavior::default().rule(ProviderRole::Verify, "C.", "False"),
        );
        let req = ModelRequest::new(ProviderRole::Verify, "[SEP] C.").with_subject("C.");
        let resp = call(&req, &backend).unwrap();
        assert_eq!(resp.verdict, Some(false));
        assert_eq!(resp.latency_ms, 0);
    }

    #[test]
    fn call_counts_generated_tokens_with_artifact_tokenizer() {
        let backend = ScriptedBackend::new(
            "s",
            ScriptedBehavior::default().rule(ProviderRole::Generate, "who?", "Hello, world!"),
        );
        let req = ModelRequest::new(ProviderRole::Generate, "prompt text").with_subject("who?");
        let resp = call(&req, &backend).unwrap();
        assert_eq!(resp.text, "Hello, world!");
        assert_eq!(resp.tokens_generated, 4);
        assert_eq!(resp.tokens_prompt, 2);
        assert_eq!(resp.verdict, None);
    }

    #[test]
    fn call_surfaces_verdict_parse_errors() {
        let backend = ScriptedBackend::new(
            "s",
            ScriptedBehavior::default().rule(ProviderRole::Verify, "x", "unsure"),
        );
        let req = ModelRequest::new(ProviderRole::Verify, "[SEP] x").with_subject("x");
        assert!(matches!(call(&req, &backend), Err(ProviderError::VerdictParse { .. })));
    }

    fn sentence_strategy() -> impl Strategy<Value = String> {
        "[A-Za-z0-9,;' \\[\\]]{1,20}[.!?]".prop_filter("no separator", |s| !s.contains(SEP))
    }

    proptest! {
        #[test]
        fn verifier_input_round_trips(
            prefix_texts in proptest::collection::vec(sentence_strategy(), 0..6),
            candidate in sentence_strategy(),
        ) {
            let refs: Vec<&str> = prefix_texts.iter().map(String::as_str).collect();
            let formatted = format_verifier_input(&prefix(&refs), &candidate);
            prop_assert_eq!(formatted.matches(SEP).count(), 1);
            let (p, c) = split_verifier_input(&formatted).unwrap();
            prop_assert_eq!(p, refs.join(" "));
            prop_assert_eq!(c, candidate.as_str());
        }
    }
}
