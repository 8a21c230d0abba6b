//! Event-level realization of the latency model.
//!
//! Sentence `t` becomes available at `G_t = t * generation_interval`. Its
//! processing starts once it is available and sentence `t - 1` is final
//! (the verifier input embeds the refined prefix), so
//! `F_t = max(G_t, F_{t-1}) + c_t`.
//!
//! Without overlap `c_t = v_t + r_t`: the refiner starts after a false
//! verdict. With overlap the refiner is launched speculatively alongside the
//! verifier and its result is dropped on a true verdict, so
//! `c_t = max(v_t, r_t)`. The streaming latency seen by the user is
//! `F_n - G_n`. Serial streaming and full costs are accumulated as if run
//! after generation.

use serde::{Deserialize, Serialize};

use super::{LatencyError, LatencyParams, LatencyReport};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEvent<T> {
    pub verified_tokens: u64,
    pub verdict: bool,
    /// Zero iff the verdict is true.
    pub refined_tokens: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VerifierCost<T> {
    /// `t_ver` per call regardless of input length.
    Fixed,
    /// Seconds per verified token.
    PerToken(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<T> {
    pub generation_interval: T,
    pub overlap: bool,
    pub verifier_cost: VerifierCost<T>,
}

impl<T: Scalar> SimConfig<T> {
    /// Overlapped stages and a generator slow enough never to be waited on
    /// by more than one sentence.
    pub fn overlapped(generation_interval: T) -> Self {
        Self {
            generation_interval,
            overlap: true,
            verifier_cost: VerifierCost::Fixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTiming<T> {
    pub available: T,
    pub start: T,
    pub finish: T,
}

fn check_trace<T: Scalar>(p: &LatencyParams<T>, trace: &[StepEvent<T>]) -> Result<(), LatencyError> {
    p.validate()?;
    let bad = |m: String| Err(LatencyError::InconsistentTrace(m));
    if trace.len() != p.n as usize {
        return bad(format!("{} steps for n = {}", trace.len(), p.n));
    }
    let mut total = T::zero();
    for (i, e) in trace.iter().enumerate() {
        if e.refined_tokens.is_negative() {
            return bad(format!("step {}: negative refined tokens", i + 1));
        }
        if e.verdict != (e.refined_tokens == T::zero()) {
            return bad(format!("step {}: verdict {} with {} refined tokens", i + 1, e.verdict, e.refined_tokens));
        }
        total = total + e.refined_tokens;
    }
    let (sum, want) = (total.to_real(), p.tokens_ref_streaming.to_real());
    if (sum - want).abs() > 1e-9 * want.abs().max(1.0) {
        return bad(format!("refined tokens sum to {sum}, expected {want}"));
    }
    Ok(())
}

fn verify_cost<T: Scalar>(p: &LatencyParams<T>, cost: VerifierCost<T>, tokens: u64) -> T {
    match cost {
        VerifierCost::Fixed => p.t_ver,
        VerifierCost::PerToken(per) => per * T::from_count(tokens),
    }
}

/// Per-step availability, start and finish times.
pub fn simulate_timeline<T: Scalar>(
    p: &LatencyParams<T>,
    trace: &[StepEvent<T>],
    config: &SimConfig<T>,
) -> Result<Vec<StepTiming<T>>, LatencyError> {
    check_trace(p, trace)?;
    let mut previous = T::zero();
    let mut available = T::zero();
    let mut timeline = Vec::with_capacity(trace.len());
    for e in trace {
        available = available + config.generation_interval;
        let v = verify_cost(p, config.verifier_cost, e.verified_tokens);
        let r = e.refined_tokens * p.t_ref;
        let cost = if config.overlap { v.max_of(r) } else { v + r };
        let start = available.max_of(previous);
        previous = start + cost;
        timeline.push(StepTiming {
            available,
            start,
            finish: previous,
        });
    }
    Ok(timeline)
}

pub fn simulate_pipeline<T: Scalar>(
    p: &LatencyParams<T>,
    trace: &[StepEvent<T>],
    config: &SimConfig<T>,
) -> Result<LatencyReport<T>, LatencyError> {
    let timeline = simulate_timeline(p, trace, config)?;
    let last = timeline.last().expect("n >= 1");
    let real = last.finish - last.available;
    let mut serial = T::zero();
    let mut verified = 0;
    for e in trace {
        serial = serial + verify_cost(p, config.verifier_cost, e.verified_tokens) + e.refined_tokens * p.t_ref;
        verified += e.verified_tokens;
    }
    let full = verify_cost(p, config.verifier_cost, verified) + p.tokens_ref_full * p.t_ref;
    Ok(LatencyReport::new(full, serial, real))
}

/// `n` identical steps sharing `T^S` evenly, each verifying
/// `tokens_per_sentence` tokens. Steps are true when `T^S` is zero.
pub fn uniform_trace<T: Scalar>(p: &LatencyParams<T>, tokens_per_sentence: u64) -> Vec<StepEvent<T>> {
    let per_step = p.tokens_ref_streaming / T::from_count(p.n.into());
    (0..p.n)
        .map(|_| StepEvent {
            verified_tokens: tokens_per_sentence,
            verdict: per_step == T::zero(),
            refined_tokens: per_step,
        })
        .collect()
}
