//! Streaming sentence-level verification and refinement of generated text.
//!
//! An answer produced by a generator model is split into sentences as it
//! streams. Each sentence is checked by a verifier against the already
//! finalized prefix, and only sentences judged false are rewritten by a
//! refiner. The crate also provides the whole-answer baseline (verify the
//! finished answer once, regenerate it if wrong), exact per-role token
//! accounting, a latency model with a discrete-event simulator, and a builder
//! for verifier training data.
//!
//! Model roles are reached through the [`providers::Backend`] trait. The
//! [`providers::ScriptedBackend`] gives deterministic canned replies for tests
//! and demos; [`providers::HttpBackend`] talks to any chat-completion
//! endpoint.
//!
//! Numeric code (latency model, efficiency, report means) is generic over
//! [`Scalar`], implemented for `f32`, `f64` and the exact [`Rational`].

pub mod corpus;
pub mod datagen;
pub mod latency_sim;
pub mod metrics;
pub mod pipeline;
pub mod providers;
mod scalar;
pub mod segmenter;
pub mod templates;

pub use scalar::Scalar;

pub use corpus::{CorpusRecord, PromptMode};
pub use datagen::{Label, Provenance, VerifierExample};
pub use metrics::{CorpusReport, DerailedStats};
pub use pipeline::{
    Backends, IntermediateAnswer, Mode, PipelineConfig, PipelineResult, StepRecord, TokenLedger,
    Verdict,
};
pub use providers::{count_tokens, format_verifier_input, Backend, ModelRequest, ModelResponse};
pub use segmenter::{segment, SegmentedAnswer, Segmenter, Sentence};

/// Exact rational scalar.
pub type Rational = num_rational::Rational64;

pub type LatencyParamsF64 = latency_sim::LatencyParams<f64>;
pub type LatencyParamsF32 = latency_sim::LatencyParams<f32>;
pub type LatencyParamsExact = latency_sim::LatencyParams<Rational>;

pub type LatencyReportF64 = latency_sim::LatencyReport<f64>;
pub type LatencyReportExact = latency_sim::LatencyReport<Rational>;

pub type StepEventF64 = latency_sim::StepEvent<f64>;
pub type StepEventExact = latency_sim::StepEvent<Rational>;

pub type EfficiencyReportF64 = metrics::EfficiencyReport<f64>;
