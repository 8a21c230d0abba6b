//! Latency model for full and streaming verification/refinement.
//!
//! With a fixed per-call verifier cost `t_ver`, a per-token refiner cost
//! `t_ref`, `n` sentences per answer and mean refinement budgets `T^S`
//! (streaming) and `T^F` (full):
//!
//! ```text
//! t_F      = t_ver + T^F * t_ref
//! t_S      = n * t_ver + T^S * t_ref
//! t_S_real = max(t_ver, (T^S / n) * t_ref)
//! ```
//!
//! `t_S` is the serial streaming cost. `t_S_real` is what remains after the
//! last sentence is generated when verification and refinement overlap with
//! generation. [`simulate_pipeline`] reproduces all three from per-step
//! events.

mod sim;
mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

pub use sim::{simulate_pipeline, simulate_timeline, uniform_trace, SimConfig, StepEvent, StepTiming, VerifierCost};
pub use sweep::{run_sweep, write_sweep_csv, ParamRange, SweepConfig, SweepKind, SweepRow, SweepSummary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatencyError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("inconsistent trace: {0}")]
    InconsistentTrace(String),
    #[error("invalid sweep: {0}")]
    Sweep(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyParams<T> {
    /// Seconds per verifier call.
    pub t_ver: T,
    /// Seconds per refined token.
    pub t_ref: T,
    /// Sentences per answer.
    pub n: u32,
    /// Mean refinement tokens per answer, streaming.
    pub tokens_ref_streaming: T,
    /// Mean refinement tokens per answer, full.
    pub tokens_ref_full: T,
}

impl<T: Scalar> LatencyParams<T> {
    pub fn new(t_ver: T, t_ref: T, n: u32, tokens_ref_streaming: T, tokens_ref_full: T) -> Self {
        Self {
            t_ver,
            t_ref,
            n,
            tokens_ref_streaming,
            tokens_ref_full,
        }
    }

    pub fn validate(&self) -> Result<(), LatencyError> {
        let bad = |m: &str| Err(LatencyError::InvalidParams(m.to_string()));
        if self.t_ver <= T::zero() {
            return bad("t_ver must be positive");
        }
        if self.t_ref <= T::zero() {
            return bad("t_ref must be positive");
        }
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if self.tokens_ref_streaming.is_negative() || self.tokens_ref_full.is_negative() {
            return bad("token budgets must be non-negative");
        }
        Ok(())
    }

    /// `t_ver < t_ref` and `n + T^S < T^F`, the region where streaming is
    /// guaranteed to beat full.
    pub fn precondition(&self) -> bool {
        self.t_ver < self.t_ref && T::from_count(self.n.into()) + self.tokens_ref_streaming < self.tokens_ref_full
    }

    /// Solves `t_ref` and `T^S` from target latencies `t_full` and
    /// `t_streaming` given `t_ver`, `n` and `T^F`.
    pub fn calibrate(t_full: T, t_streaming: T, t_ver: T, n: u32, tokens_ref_full: T) -> Result<Self, LatencyError> {
        if tokens_ref_full <= T::zero() {
            return Err(LatencyError::InvalidParams("T^F must be positive".into()));
        }
        let t_ref = (t_full - t_ver) / tokens_ref_full;
        let tokens_ref_streaming = (t_streaming - T::from_count(n.into()) * t_ver) / t_ref;
        let p = Self::new(t_ver, t_ref, n, tokens_ref_streaming, tokens_ref_full);
        p.validate()?;
        Ok(p)
    }
}

pub fn latency_full<T: Scalar>(p: &LatencyParams<T>) -> T {
    p.t_ver + p.tokens_ref_full * p.t_ref
}

pub fn latency_streaming_serial<T: Scalar>(p: &LatencyParams<T>) -> T {
    T::from_count(p.n.into()) * p.t_ver + p.tokens_ref_streaming * p.t_ref
}

pub fn latency_streaming_real<T: Scalar>(p: &LatencyParams<T>) -> T {
    p.t_ver.max_of(p.tokens_ref_streaming / T::from_count(p.n.into()) * p.t_ref)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport<T> {
    pub t_full: T,
    pub t_streaming_serial: T,
    pub t_streaming_real: T,
    /// `t_streaming_real <= t_streaming_serial < t_full`.
    pub ordering_holds: bool,
}

impl<T: Scalar> LatencyReport<T> {
    pub fn new(t_full: T, t_streaming_serial: T, t_streaming_real: T) -> Self {
        Self {
            t_full,
            t_streaming_serial,
            t_streaming_real,
            ordering_holds: t_streaming_real <= t_streaming_serial && t_streaming_serial < t_full,
        }
    }

    pub fn closed_form(p: &LatencyParams<T>) -> Self {
        Self::new(latency_full(p), latency_streaming_serial(p), latency_streaming_real(p))
    }

    /// `t_full / t_streaming_serial`.
    pub fn speedup(&self) -> T {
        self.t_full / self.t_streaming_serial
    }
}
