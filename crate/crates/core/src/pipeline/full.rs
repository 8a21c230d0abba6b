use serde::{Deserialize, Serialize};

use crate::providers::{call, count_tokens, format_verifier_parts, ProviderRole};
use crate::segmenter::SegmentedAnswer;

use super::{
    provider_err, run_streaming_vr, Backends, Mode, PipelineConfig, PipelineError, PipelineResult,
    TokenLedger, Verdict,
};

/// Where the whole-answer verdict of a full run comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    /// One verifier call on the whole answer (`[SEP] a`).
    Independent,
    /// Verify every sentence against its original prefix; the answer is false
    /// if any sentence is.
    #[default]
    FromSentenceVerdicts,
}

/// Passthrough: the generated answer is the final answer.
pub fn run_none(question: &str, answer: &SegmentedAnswer) -> PipelineResult {
    PipelineResult {
        question: question.to_string(),
        mode: Mode::None,
        final_answer: answer.source.trim().to_string(),
        steps: Vec::new(),
        ledger: TokenLedger {
            t_gen: count_tokens(&answer.source),
            ..TokenLedger::default()
        },
        answer_verdict: None,
        sentence_verdicts: Vec::new(),
        latency_ms: 0,
    }
}

/// Verifies the finished answer and regenerates it entirely if it is false.
pub fn run_full_vr(
    question: &str,
    context: Option<&str>,
    answer: &SegmentedAnswer,
    backends: Backends<'_>,
    config: &PipelineConfig,
    source: VerdictSource,
) -> Result<PipelineResult, PipelineError> {
    match source {
        VerdictSource::Independent => {
            let text = answer.source.trim();
            let input = format_verifier_parts([], text);
            let request = config.verify_request(question, &input, text);
            let response =
                call(&request, backends.verifier).map_err(provider_err(0, ProviderRole::Verify))?;
            let verdict = Verdict {
                value: response.verdict.expect("verify responses carry a verdict"),
                provider: backends.verifier.name().to_string(),
                stage: 0,
            };
            let mut result = finish_full(question, context, answer, verdict, Vec::new(), backends, config)?;
            result.latency_ms += response.latency_ms;
            Ok(result)
        }
        VerdictSource::FromSentenceVerdicts => {
            let mut verdicts = Vec::with_capacity(answer.len());
            let mut latency_ms = 0;
            for (i, sentence) in answer.sentences.iter().enumerate() {
                let input = format_verifier_parts(answer.sentences[..i].iter().map(|s| s.text.as_str()), &sentence.text);
                let request = config.verify_request(question, &input, &sentence.text);
                let response = call(&request, backends.verifier)
                    .map_err(provider_err(i + 1, ProviderRole::Verify))?;
                latency_ms += response.latency_ms;
                verdicts.push(response.verdict.expect("verify responses carry a verdict"));
            }
            let mut result = full_from_verdicts(question, context, answer, &verdicts, backends, config)?;
            result.latency_ms += latency_ms;
            Ok(result)
        }
    }
}

/// Full run driven by sentence verdicts obtained elsewhere. The verifier is
/// not called; the answer is false if any verdict is false.
pub fn full_from_verdicts(
    question: &str,
    context: Option<&str>,
    answer: &SegmentedAnswer,
    verdicts: &[bool],
    backends: Backends<'_>,
    config: &PipelineConfig,
) -> Result<PipelineResult, PipelineError> {
    let verdict = Verdict {
        value: verdicts.iter().all(|&v| v),
        provider: backends.verifier.name().to_string(),
        stage: 0,
    };
    finish_full(question, context, answer, verdict, verdicts.to_vec(), backends, config)
}

fn finish_full(
    question: &str,
    context: Option<&str>,
    answer: &SegmentedAnswer,
    verdict: Verdict,
    sentence_verdicts: Vec<bool>,
    backends: Backends<'_>,
    config: &PipelineConfig,
) -> Result<PipelineResult, PipelineError> {
    let original = answer.source.trim();
    let tokens = count_tokens(&answer.source);
    let mut ledger = TokenLedger {
        t_gen: tokens,
        t_ver: tokens,
        t_ref: 0,
    };
    let mut latency_ms = 0;
    let final_answer = if verdict.value {
        original.to_string()
    } else {
        let request = config.refine_full_request(question, context, original);
        let response = call(&request, backends.refiner).map_err(provider_err(0, ProviderRole::Refine))?;
        let text = response.text.trim();
        if text.is_empty() {
            return Err(PipelineError::EmptyRefinement { step: 0 });
        }
        ledger.t_ref = response.tokens_generated;
        latency_ms = response.latency_ms;
        text.to_string()
    };
    Ok(PipelineResult {
        question: question.to_string(),
        mode: Mode::FullVR,
        final_answer,
        steps: Vec::new(),
        ledger,
        answer_verdict: Some(verdict),
        sentence_verdicts,
        latency_ms,
    })
}

/// Runs streaming and full on the same answer with one set of sentence
/// verdicts: the streaming verdicts are reused for the full run, so the
/// verifier is called once per sentence.
pub fn compare(
    question: &str,
    context: Option<&str>,
    answer: &SegmentedAnswer,
    backends: Backends<'_>,
    config: &PipelineConfig,
) -> Result<(PipelineResult, PipelineResult), PipelineError> {
    let streaming = run_streaming_vr(question, context, answer.sentences.iter().cloned(), backends, config)?;
    let full = full_from_verdicts(question, context, answer, &streaming.verdicts(), backends, config)?;
    Ok((streaming, full))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{RecordingBackend, ScriptedBackend, ScriptedBehavior};
    use crate::segmenter::segment;

    fn backend() -> ScriptedBackend {
        ScriptedBackend::new(
            "s",
            ScriptedBehavior::default()
                .rule(ProviderRole::Verify, "Bob hid.", "False")
                .rule(ProviderRole::Refine, "Bob hid.", "Bob left.")
                .rule(ProviderRole::Refine, "Ann ran. Bob hid. Cal sat.", "Ann ran. Bob left the house. Cal sat."),
        )
    }

    #[test]
    fn one_false_sentence_makes_the_answer_false() {
        let b = backend();
        let answer = segment("Ann ran. Bob hid. Cal sat.");
        let full = full_from_verdicts("q", None, &answer, &[true, false, true], Backends::uniform(&b), &PipelineConfig::default())
            .unwrap();
        assert_eq!(full.answer_verdict.as_ref().map(|v| v.value), Some(false));
        assert_eq!(full.final_answer, "Ann ran. Bob left the house. Cal sat.");
        assert_eq!(full.ledger.t_ref, count_tokens("Ann ran. Bob left the house. Cal sat."));
    }

    #[test]
    fn all_true_leaves_answer_unchanged() {
        let b = backend();
        let answer = segment("Ann ran. Cal sat.");
        let full = run_full_vr("q", None, &answer, Backends::uniform(&b), &PipelineConfig::default(), VerdictSource::FromSentenceVerdicts)
            .unwrap();
        assert_eq!(full.final_answer, "Ann ran. Cal sat.");
        assert_eq!(full.ledger.t_ref, 0);
        assert_eq!(full.verdicts(), [true, true]);
    }

    #[test]
    fn t_ref_uses_reported_completion_tokens() {
        let b = ScriptedBackend::new(
            "s",
            ScriptedBehavior::default()
                .rule(ProviderRole::Verify, "X.", "False")
                .reply(
                    ProviderRole::Refine,
                    "X.",
                    crate::providers::ScriptedReply {
                        text: (0..20).map(|i| format!("w{i}.")).collect::<Vec<_>>().join(" "),
                        completion_tokens: None,
                        latency_ms: 0,
                    },
                ),
        );
        let answer = segment("X.");
        let full = run_full_vr("q", None, &answer, Backends::uniform(&b), &PipelineConfig::default(), VerdictSource::FromSentenceVerdicts)
            .unwrap();
        assert_eq!(full.ledger.t_ref, 40);
    }

    #[test]
    fn independent_verdict_uses_one_call() {
        let b = RecordingBackend::new(ScriptedBackend::new(
            "s",
            ScriptedBehavior::default().rule(ProviderRole::Verify, "Ann ran. Bob hid.", "False"),
        ));
        let answer = segment("Ann ran. Bob hid.");
        let full = run_full_vr("q", None, &answer, Backends::uniform(&b), &PipelineConfig::default(), VerdictSource::Independent)
            .unwrap();
        let verifies = b.requests().iter().filter(|r| r.role == ProviderRole::Verify).count();
        assert_eq!(verifies, 1);
        assert!(!full.answer_verdict.unwrap().value);
        assert!(full.sentence_verdicts.is_empty());
    }

    #[test]
    fn compare_shares_verdicts_and_verification_cost() {
        let b = RecordingBackend::new(backend());
        let answer = segment("Ann ran. Bob hid. Cal sat.");
        let (s, f) = compare("q", None, &answer, Backends::uniform(&b), &PipelineConfig::default()).unwrap();
        let verifies = b.requests().iter().filter(|r| r.role == ProviderRole::Verify).count();
        assert_eq!(verifies, 3);
        assert_eq!(s.ledger.t_ver, f.ledger.t_ver);
        assert_eq!(s.verdicts(), f.verdicts());
        assert!(s.ledger.t_ref < f.ledger.t_ref);
    }

    #[test]
    fn none_mode_only_counts_generation() {
        let r = run_none("q", &segment("One. Two."));
        assert_eq!(r.ledger, TokenLedger { t_gen: 4, t_ver: 0, t_ref: 0 });
        assert_eq!(r.final_answer, "One. Two.");
    }
}
