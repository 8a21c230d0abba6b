//! Efficiency, derailed rate, ROUGE-L and corpus report aggregation.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{AnswerOutcome, PipelineResult};
use crate::providers::normalized_words;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("undefined: {0}")]
    Domain(String),
}

/// `1 - t_s / t_f`: the share of whole-answer refinement cost that the
/// streaming run avoided.
pub fn efficiency<T: Scalar>(t_s: T, t_f: T) -> Result<T, MetricsError> {
    if t_f <= T::zero() {
        return Err(MetricsError::Domain("no refinement occurred".into()));
    }
    if t_s.is_negative() {
        return Err(MetricsError::Domain("negative refinement cost".into()));
    }
    Ok(T::one() - t_s / t_f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport<T> {
    /// Mean streaming refinement tokens per answer.
    pub t_s: T,
    /// Mean full refinement tokens per answer.
    pub t_f: T,
    /// Absent when `t_f` is zero.
    pub efficiency: Option<T>,
}

impl<T: Scalar> EfficiencyReport<T> {
    pub fn new(t_s: T, t_f: T) -> Self {
        Self {
            t_s,
            t_f,
            efficiency: efficiency(t_s, t_f).ok(),
        }
    }

    /// From per-answer refinement token counts of paired runs.
    pub fn from_counts(streaming: &[u64], full: &[u64]) -> Self {
        Self::new(mean(streaming).unwrap_or_else(T::zero), mean(full).unwrap_or_else(T::zero))
    }
}

/// Arithmetic mean, `None` for no values.
pub fn mean<T: Scalar>(values: &[u64]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    Some(T::from_count(values.iter().sum()) / T::from_count(values.len() as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerailedStats {
    pub false_answers: usize,
    pub derailed_answers: usize,
    pub rate: f64,
}

/// A false answer whose false sentences run unbroken from the first error to
/// the last sentence.
pub fn is_derailed(verdicts: &[bool]) -> bool {
    match verdicts.iter().position(|&v| !v) {
        Some(first) => verdicts[first..].iter().all(|&v| !v),
        None => false,
    }
}

/// Derailed answers over answers with at least one false sentence.
pub fn derailed_rate<V: AsRef<[bool]>>(verdicts_per_answer: &[V]) -> Result<DerailedStats, MetricsError> {
    if verdicts_per_answer.iter().any(|v| v.as_ref().is_empty()) {
        return Err(MetricsError::Domain("answer with no sentences".into()));
    }
    let false_answers = verdicts_per_answer
        .iter()
        .filter(|v| v.as_ref().contains(&false))
        .count();
    if false_answers == 0 {
        return Err(MetricsError::Domain("no answer has a false sentence".into()));
    }
    let derailed_answers = verdicts_per_answer.iter().filter(|v| is_derailed(v.as_ref())).count();
    Ok(DerailedStats {
        false_answers,
        derailed_answers,
        rate: derailed_answers as f64 / false_answers as f64,
    })
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F1 over lowercased word tokens, punctuation dropped. Zero when
/// either side has no words.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let c = normalized_words(candidate);
    let r = normalized_words(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&c, &r) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / c.len() as f64;
    let rec = lcs / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

/// Best ROUGE-L against any reference; `None` without references.
pub fn best_rouge_l(candidate: &str, references: &[String]) -> Option<f64> {
    references.iter().map(|r| rouge_l(candidate, r)).reduce(f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub answers: usize,
    pub mean_t_gen: f64,
    pub mean_t_ver: f64,
    pub mean_t_ref: f64,
    /// Answers with at least one refined token.
    pub refined_answers: usize,
    pub mean_latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_rouge_l: Option<f64>,
}

impl ModeSummary {
    fn from_results<'a>(items: impl IntoIterator<Item = (&'a PipelineResult, &'a [String])>) -> Option<Self> {
        let items: Vec<_> = items.into_iter().collect();
        if items.is_empty() {
            return None;
        }
        let col = |f: &dyn Fn(&PipelineResult) -> u64| items.iter().map(|(r, _)| f(r)).collect::<Vec<u64>>();
        let rouge: Vec<f64> = items
            .iter()
            .filter_map(|(r, refs)| best_rouge_l(&r.final_answer, refs))
            .collect();
        Some(Self {
            answers: items.len(),
            mean_t_gen: mean(&col(&|r| r.ledger.t_gen)).unwrap_or(0.0),
            mean_t_ver: mean(&col(&|r| r.ledger.t_ver)).unwrap_or(0.0),
            mean_t_ref: mean(&col(&|r| r.ledger.t_ref)).unwrap_or(0.0),
            refined_answers: items.iter().filter(|(r, _)| r.ledger.t_ref > 0).count(),
            mean_latency_ms: mean(&col(&|r| r.latency_ms)).unwrap_or(0.0),
            mean_rouge_l: (!rouge.is_empty()).then(|| rouge.iter().sum::<f64>() / rouge.len() as f64),
        })
    }
}

mod na_or_number {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => s.serialize_f64(*v),
            None => s.serialize_str("n/a"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Cell {
            Number(f64),
            Other(serde::de::IgnoredAny),
        }
        Ok(match Cell::deserialize(d)? {
            Cell::Number(v) => Some(v),
            Cell::Other(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub answers: usize,
    /// Answers aborted by any error, including unscored ones.
    pub errored: usize,
    /// Answers aborted because a verifier output was not a verdict.
    pub unscored: usize,
    pub prompt_warnings: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub none: Option<ModeSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub streaming: Option<ModeSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full: Option<ModeSummary>,
    /// Answers that have both a streaming and a full result.
    pub paired_answers: usize,
    /// `1 - T_S / T_F` over paired answers; "n/a" when nothing was refined.
    #[serde(with = "na_or_number")]
    pub efficiency: Option<f64>,
    /// Over streaming sentence verdicts; absent when no answer was false.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derailed: Option<DerailedStats>,
}

/// Summarizes a batch. Errored answers are counted but excluded from every
/// mean.
pub fn aggregate(outcomes: &[AnswerOutcome]) -> CorpusReport {
    let ok: Vec<&AnswerOutcome> = outcomes.iter().filter(|o| o.error.is_none()).collect();
    let summary = |pick: fn(&AnswerOutcome) -> Option<&PipelineResult>| {
        ModeSummary::from_results(ok.iter().filter_map(|o| pick(o).map(|r| (r, o.references.as_slice()))))
    };
    let paired: Vec<(&PipelineResult, &PipelineResult)> = ok
        .iter()
        .filter_map(|o| Some((o.streaming.as_ref()?, o.full.as_ref()?)))
        .collect();
    let streaming_ref: Vec<u64> = paired.iter().map(|(s, _)| s.ledger.t_ref).collect();
    let full_ref: Vec<u64> = paired.iter().map(|(_, f)| f.ledger.t_ref).collect();
    let verdicts: Vec<Vec<bool>> = ok
        .iter()
        .filter_map(|o| o.streaming.as_ref())
        .map(PipelineResult::verdicts)
        .filter(|v| !v.is_empty())
        .collect();
    CorpusReport {
        answers: outcomes.len(),
        errored: outcomes.len() - ok.len(),
        unscored: outcomes
            .iter()
            .filter(|o| o.error.as_ref().is_some_and(|e| e.unscored))
            .count(),
        prompt_warnings: outcomes.iter().map(|o| o.prompt_warnings.len()).sum(),
        none: summary(|o| o.none.as_ref()),
        streaming: summary(|o| o.streaming.as_ref()),
        full: summary(|o| o.full.as_ref()),
        paired_answers: paired.len(),
        efficiency: EfficiencyReport::<f64>::from_counts(&streaming_ref, &full_ref).efficiency,
        derailed: derailed_rate(&verdicts).ok(),
    }
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    id: &'a str,
    error_stage: Option<&'a str>,
    unscored: bool,
    t_gen: u64,
    sentences: Option<usize>,
    false_sentences: Option<usize>,
    derailed: Option<bool>,
    streaming_t_ver: Option<u64>,
    streaming_t_ref: Option<u64>,
    full_t_ver: Option<u64>,
    full_t_ref: Option<u64>,
    none_rouge_l: Option<f64>,
    streaming_rouge_l: Option<f64>,
    full_rouge_l: Option<f64>,
}

/// One CSV row per answer; missing values are empty cells.
pub fn write_csv<W: io::Write>(outcomes: &[AnswerOutcome], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for o in outcomes {
        let verdicts = o.streaming.as_ref().map(PipelineResult::verdicts);
        let rouge = |r: &Option<PipelineResult>| {
            r.as_ref().and_then(|r| best_rouge_l(&r.final_answer, &o.references))
        };
        w.serialize(CsvRow {
            id: &o.id,
            error_stage: o.error.as_ref().map(|e| e.stage.as_str()),
            unscored: o.error.as_ref().is_some_and(|e| e.unscored),
            t_gen: o.t_gen,
            sentences: verdicts.as_ref().map(Vec::len),
            false_sentences: verdicts.as_ref().map(|v| v.iter().filter(|&&x| !x).count()),
            derailed: verdicts.as_ref().map(|v| is_derailed(v)),
            streaming_t_ver: o.streaming.as_ref().map(|r| r.ledger.t_ver),
            streaming_t_ref: o.streaming.as_ref().map(|r| r.ledger.t_ref),
            full_t_ver: o.full.as_ref().map(|r| r.ledger.t_ver),
            full_t_ref: o.full.as_ref().map(|r| r.ledger.t_ref),
            none_rouge_l: rouge(&o.none),
            streaming_rouge_l: rouge(&o.streaming),
            full_rouge_l: rouge(&o.full),
        })?;
    }
    w.flush()?;
    Ok(())
}
