use std::collections::VecDeque;
use std::sync::mpsc;
use std::thread;

use crate::providers::{call, count_tokens, format_verifier_input, ModelRequest, ProviderRole};
use crate::segmenter::{segment, Segmenter, Sentence};
use crate::templates::render;

use super::{
    provider_err, Backends, IntermediateAnswer, Mode, PipelineConfig, PipelineError,
    PipelineResult, StepRecord, TokenLedger, Verdict,
};

/// Step-by-step streaming state: push sentences in generation order, then
/// [`finish`](StreamingRun::finish).
pub struct StreamingRun<'a> {
    question: &'a str,
    context: Option<&'a str>,
    backends: Backends<'a>,
    config: &'a PipelineConfig,
    prefix: IntermediateAnswer,
    steps: Vec<StepRecord>,
    ledger: TokenLedger,
    latency_ms: u64,
}

impl<'a> StreamingRun<'a> {
    pub fn new(
        question: &'a str,
        context: Option<&'a str>,
        backends: Backends<'a>,
        config: &'a PipelineConfig,
    ) -> Self {
        Self {
            question,
            context,
            backends,
            config,
            prefix: IntermediateAnswer::default(),
            steps: Vec::new(),
            ledger: TokenLedger::default(),
            latency_ms: 0,
        }
    }

    pub fn prefix(&self) -> &IntermediateAnswer {
        &self.prefix
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    /// Verifies `sentence` against the current prefix, refines it if
    /// rejected, and appends `s̃_t` to the prefix.
    pub fn push(&mut self, sentence: Sentence) -> Result<&StepRecord, PipelineError> {
        let step = self.steps.len() + 1;
        let input = format_verifier_input(&self.prefix, &sentence.text);
        let request = self.config.verify_request(self.question, &input, &sentence.text);
        let response = call(&request, self.backends.verifier)
            .map_err(provider_err(step, ProviderRole::Verify))?;
        let verdict = Verdict {
            value: response.verdict.expect("verify responses carry a verdict"),
            provider: self.backends.verifier.name().to_string(),
            stage: step,
        };
        let tokens_verified = count_tokens(&sentence.text);
        let mut latency_ms = response.latency_ms;
        let mut tokens_refined = 0;
        let mut refined = None;
        let mut reverdict = None;

        if verdict.value {
            self.prefix.push(sentence.clone());
        } else {
            let request = self.config.refine_sentence_request(
                self.question,
                self.context,
                &self.prefix,
                &sentence.text,
            );
            let response = call(&request, self.backends.refiner)
                .map_err(provider_err(step, ProviderRole::Refine))?;
            latency_ms += response.latency_ms;
            let rewrite = segment(response.text.trim());
            if rewrite.is_empty() {
                return Err(PipelineError::EmptyRefinement { step });
            }
            tokens_refined = response.tokens_generated;

            if self.config.reverify_refined {
                let input = format_verifier_input(&self.prefix, &rewrite.joined());
                let request = self.config.verify_request(self.question, &input, &rewrite.joined());
                let response = call(&request, self.backends.verifier)
                    .map_err(provider_err(step, ProviderRole::Verify))?;
                latency_ms += response.latency_ms;
                self.ledger.t_ver += count_tokens(&rewrite.joined());
                reverdict = Some(Verdict {
                    value: response.verdict.expect("verify responses carry a verdict"),
                    provider: self.backends.verifier.name().to_string(),
                    stage: step,
                });
            }

            for s in &rewrite.sentences {
                self.prefix.push(s.clone());
            }
            refined = Some(rewrite);
        }

        self.ledger.t_gen += tokens_verified;
        self.ledger.t_ver += tokens_verified;
        self.ledger.t_ref += tokens_refined;
        self.latency_ms += latency_ms;
        self.steps.push(StepRecord {
            step,
            original: sentence,
            verifier_input: input,
            verdict,
            refined,
            reverdict,
            tokens_verified,
            tokens_refined,
            latency_ms,
        });
        Ok(self.steps.last().expect("just pushed"))
    }

    pub fn finish(self) -> PipelineResult {
        PipelineResult {
            question: self.question.to_string(),
            mode: Mode::StreamingVR,
            final_answer: self.prefix.joined(),
            steps: self.steps,
            ledger: self.ledger,
            answer_verdict: None,
            sentence_verdicts: Vec::new(),
            latency_ms: self.latency_ms,
        }
    }
}

/// Streaming verification and refinement over a fixed sentence stream.
///
/// The stream is not re-conditioned on refined sentences (post-hoc mode).
pub fn run_streaming_vr(
    question: &str,
    context: Option<&str>,
    sentences: impl IntoIterator<Item = Sentence>,
    backends: Backends<'_>,
    config: &PipelineConfig,
) -> Result<PipelineResult, PipelineError> {
    let mut run = StreamingRun::new(question, context, backends, config);
    for sentence in sentences {
        run.push(sentence)?;
    }
    Ok(run.finish())
}

/// Like [`run_streaming_vr`], but over raw text chunks. Segmentation runs on
/// its own thread and hands confirmed sentences to the verify/refine chain as
/// soon as their boundary is seen.
pub fn run_streaming_vr_chunks<I>(
    question: &str,
    context: Option<&str>,
    chunks: I,
    backends: Backends<'_>,
    config: &PipelineConfig,
) -> Result<PipelineResult, PipelineError>
where
    I: IntoIterator<Item = String>,
    I::IntoIter: Send,
{
    let chunks = chunks.into_iter();
    thread::scope(|scope| {
        let (tx, rx) = mpsc::sync_channel::<Sentence>(8);
        scope.spawn(move || {
            let mut segmenter = Segmenter::new();
            for chunk in chunks {
                for s in segmenter.feed(&chunk) {
                    if tx.send(s).is_err() {
                        return;
                    }
                }
            }
            for s in segmenter.flush() {
                if tx.send(s).is_err() {
                    return;
                }
            }
        });
        let mut run = StreamingRun::new(question, context, backends, config);
        for sentence in rx {
            run.push(sentence)?;
        }
        Ok(run.finish())
    })
}

/// Streaming with feedback: after every refinement the generator is asked to
/// continue from the refined prefix, and the continuation replaces the rest
/// of the original answer. `t_gen` counts every generated token.
pub fn run_streaming_vr_feedback(
    question: &str,
    context: Option<&str>,
    generation_prompt: &str,
    backends: Backends<'_>,
    config: &PipelineConfig,
) -> Result<PipelineResult, PipelineError> {
    let request = ModelRequest::new(ProviderRole::Generate, generation_prompt)
        .with_subject(question)
        .with_max_tokens(config.max_tokens)
        .with_temperature(config.temperature);
    let response = call(&request, backends.generator).map_err(provider_err(0, ProviderRole::Generate))?;
    let mut t_gen = response.tokens_generated;
    let mut pending: VecDeque<Sentence> = segment(&response.text).sentences.into();

    let mut run = StreamingRun::new(question, context, backends, config);
    while let Some(sentence) = pending.pop_front() {
        if run.steps().len() >= config.max_feedback_steps {
            break;
        }
        let was_refined = run.push(sentence)?.refined.is_some();
        if was_refined && !pending.is_empty() {
            let step = run.steps().len();
            let prefix = run.prefix().joined();
            let prompt = render(
                &config.templates.continuation,
                &[("prompt", generation_prompt), ("prefix", &prefix)],
            );
            let request = ModelRequest::new(ProviderRole::Generate, prompt)
                .with_subject(prefix)
                .with_max_tokens(config.max_tokens)
                .with_temperature(config.temperature);
            let response =
                call(&request, backends.generator).map_err(provider_err(step, ProviderRole::Generate))?;
            t_gen += response.tokens_generated;
            pending = segment(&response.text).sentences.into();
        }
    }
    let mut result = run.finish();
    result.ledger.t_gen = t_gen;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{RecordingBackend, ScriptedBackend, ScriptedBehavior};

    fn sentences(texts: &[&str]) -> Vec<Sentence> {
        texts.iter().map(|t| Sentence::detached(*t)).collect()
    }

    fn flag_b() -> ScriptedBackend {
        ScriptedBackend::new(
            "scripted",
            ScriptedBehavior::default()
                .rule(ProviderRole::Verify, "B.", "False")
                .rule(ProviderRole::Refine, "B.", "B2."),
        )
    }

    #[test]
    fn refines_only_the_flagged_sentence() {
        let backend = flag_b();
        let config = PipelineConfig::default();
        let result = run_streaming_vr(
            "q",
            None,
            sentences(&["A.", "B.", "C."]),
            Backends::uniform(&backend),
            &config,
        )
        .unwrap();
        assert_eq!(result.final_answer, "A. B2. C.");
        let refined: Vec<usize> = result
            .steps
            .iter()
            .filter(|s| s.refined.is_some())
            .map(|s| s.step)
            .collect();
        assert_eq!(refined, [2]);
        assert_eq!(result.ledger.t_ref, 2);
        assert_eq!(result.ledger.t_ver, 6);
    }

    #[test]
    fn verifier_sees_refined_prefix() {
        let backend = RecordingBackend::new(flag_b());
        let config = PipelineConfig::default();
        let result = run_streaming_vr(
            "q",
            None,
            sentences(&["A.", "B.", "C."]),
            Backends::uniform(&backend),
            &config,
        )
        .unwrap();
        assert_eq!(result.steps[2].verifier_input, "A. B2. [SEP] C.");
        let verify_prompts: Vec<String> = backend
            .requests()
            .into_iter()
            .filter(|r| r.role == ProviderRole::Verify)
            .map(|r| r.prompt)
            .collect();
        assert_eq!(verify_prompts.len(), 3);
        assert_eq!(verify_prompts[2], "Question: q\nA. B2. [SEP] C.");
    }

    #[test]
    fn all_true_is_identity() {
        let backend = ScriptedBackend::new("s", ScriptedBehavior::default());
        let config = PipelineConfig::default();
        let result = run_streaming_vr(
            "q",
            None,
            sentences(&["One.", "Two!", "Three?"]),
            Backends::uniform(&backend),
            &config,
        )
        .unwrap();
        assert_eq!(result.final_answer, "One. Two! Three?");
        assert_eq!(result.ledger.t_ref, 0);
        assert!(result.steps.iter().all(|s| s.refined.is_none() && s.tokens_refined == 0));
    }

    #[test]
    fn multi_sentence_rewrite_is_spliced_in() {
        let backend = ScriptedBackend::new(
            "s",
            ScriptedBehavior::default()
                .rule(ProviderRole::Verify, "B.", "False")
                .rule(ProviderRole::Refine, "B.", "B1. B2."),
        );
        let config = PipelineConfig::default();
        let result = run_streaming_vr(
            "q",
            None,
            sentences(&["A.", "B.", "C."]),
            Backends::uniform(&backend),
            &config,
        )
        .unwrap();
        assert_eq!(result.steps[2].verifier_input, "A. B1. B2. [SEP] C.");
        assert_eq!(result.ledger.t_ref, 4);
    }

    #[test]
    fn empty_refinement_aborts_with_step() {
        let backend = ScriptedBackend::new(
            "s",
            ScriptedBehavior::default()
                .rule(ProviderRole::Verify, "B.", "False")
                .rule(ProviderRole::Refine, "B.", "   "),
        );
        let config = PipelineConfig::default();
        let err = run_streaming_vr("q", None, sentences(&["A.", "B."]), Backends::uniform(&backend), &config)
            .unwrap_err();
        assert_eq!(err.step(), 2);
        assert!(!err.is_unscored());
    }

    #[test]
    fn verdict_parse_error_marks_unscored() {
        let backend = ScriptedBackend::new(
            "s",
            ScriptedBehavior::default().rule(ProviderRole::Verify, "B.", "unclear"),
        );
        let config = PipelineConfig::default();
        let err = run_streaming_vr("q", None, sentences(&["A.", "B."]), Backends::uniform(&backend), &config)
            .unwrap_err();
        assert!(err.is_unscored());
        assert_eq!(err.step(), 2);
    }

    #[test]
    fn refiner_receives_context_and_prefix() {
        let backend = RecordingBackend::new(flag_b());
        let config = PipelineConfig::default();
        run_streaming_vr(
            "q",
            Some("Passage one."),
            sentences(&["A.", "B."]),
            Backends::uniform(&backend),
            &config,
        )
        .unwrap();
        let refine = backend
            .requests()
            .into_iter()
            .find(|r| r.role == ProviderRole::Refine)
            .unwrap();
        assert!(refine.prompt.contains("Passage one."));
        assert!(refine.prompt.contains("\nA.\n"));
        assert!(refine.prompt.contains("\nB.\n"));
        assert_eq!(refine.subject.as_deref(), Some("B."));
    }

    #[test]
    fn reverify_records_second_verdict() {
        let backend = flag_b();
        let config = PipelineConfig {
            reverify_refined: true,
            ..PipelineConfig::default()
        };
        let result = run_streaming_vr("q", None, sentences(&["A.", "B."]), Backends::uniform(&backend), &config)
            .unwrap();
        assert_eq!(result.steps[1].reverdict.as_ref().map(|v| v.value), Some(true));
        assert_eq!(result.ledger.t_ver, 4 + 2);
    }

    #[test]
    fn chunked_run_matches_sentence_run() {
        let backend = flag_b();
        let config = PipelineConfig::default();
        let text = "Ann ran. B. Cal sat. Dan left.";
        let chunks: Vec<String> = ["Ann r", "an. B", ". Cal sat. ", "Dan left."].iter().map(|s| s.to_string()).collect();
        let chunked =
            run_streaming_vr_chunks("q", None, chunks, Backends::uniform(&backend), &config).unwrap();
        let direct = run_streaming_vr("q", None, segment(text).sentences, Backends::uniform(&backend), &config)
            .unwrap();
        assert_eq!(chunked, direct);
    }

    #[test]
    fn chunked_run_propagates_errors() {
        let backend = ScriptedBackend::new("s", ScriptedBehavior::default().strict());
        let config = PipelineConfig::default();
        let chunks = (0..100).map(|i| format!("Sentence {i}. "));
        let err = run_streaming_vr_chunks("q", None, chunks, Backends::uniform(&backend), &config).unwrap_err();
        assert_eq!(err.step(), 1);
    }

    #[test]
    fn feedback_mode_regenerates_continuation() {
        let backend = ScriptedBackend::new(
            "s",
            ScriptedBehavior::default()
                .rule(ProviderRole::Generate, "q", "Ann ran. Bob hid. Cal sat.")
                .rule(ProviderRole::Verify, "Bob hid.", "False")
                .rule(ProviderRole::Refine, "Bob hid.", "Bob left.")
                .rule(ProviderRole::Generate, "Ann ran. Bob left.", "Dan sat."),
        );
        let config = PipelineConfig::default();
        let result =
            run_streaming_vr_feedback("q", None, "Answer q.", Backends::uniform(&backend), &config).unwrap();
        assert_eq!(result.final_answer, "Ann ran. Bob left. Dan sat.");
        assert_eq!(result.ledger.t_gen, 9 + 3);
    }
}
