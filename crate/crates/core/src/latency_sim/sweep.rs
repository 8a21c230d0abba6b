//! Parameter sweeps over the closed forms.
//!
//! ```toml
//! kind = "random"        # or "grid"
//! samples = 10000        # random only
//! seed = 7
//! restrict_to_precondition = true
//!
//! [t_ver]
//! min = 0.01
//! max = 0.5
//! [t_ref]
//! values = [0.05]
//! [n]
//! min = 1
//! max = 10
//! [tokens_ref_streaming]
//! min = 0
//! max = 150
//! [tokens_ref_full]
//! min = 1
//! max = 300
//! ```
//!
//! A range is either explicit `values` or `min`/`max`, with `steps` points
//! for grids (default 5). `n` is rounded to an integer.

use std::io;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LatencyError, LatencyParams, LatencyReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Grid,
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRange {
    pub values: Option<Vec<f64>>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub steps: Option<usize>,
}

impl ParamRange {
    pub fn fixed(value: f64) -> Self {
        Self { values: Some(vec![value]), ..Self::default() }
    }

    pub fn between(min: f64, max: f64) -> Self {
        Self { min: Some(min), max: Some(max), ..Self::default() }
    }

    fn check(&self, name: &str) -> Result<(), LatencyError> {
        let err = |m: String| Err(LatencyError::Sweep(format!("{name}: {m}")));
        match (&self.values, self.min, self.max) {
            (Some(v), None, None) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(()),
            (Some(_), None, None) => err("values must be non-empty and finite".into()),
            (None, Some(lo), Some(hi)) if lo.is_finite() && hi.is_finite() && lo <= hi => Ok(()),
            (None, Some(lo), Some(hi)) => err(format!("bad range [{lo}, {hi}]")),
            _ => err("give either values or min and max".into()),
        }
    }

    fn grid(&self) -> Vec<f64> {
        if let Some(v) = &self.values {
            return v.clone();
        }
        let (lo, hi) = (self.min.unwrap_or(0.0), self.max.unwrap_or(0.0));
        let steps = self.steps.unwrap_or(5).max(1);
        if steps == 1 || lo == hi {
            return vec![lo];
        }
        (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
    }

    fn sample(&self, rng: &mut StdRng) -> f64 {
        match &self.values {
            Some(v) => v[rng.gen_range(0..v.len())],
            None => {
                let (lo, hi) = (self.min.unwrap_or(0.0), self.max.unwrap_or(0.0));
                if lo == hi {
                    lo
                } else {
                    rng.gen_range(lo..hi)
                }
            }
        }
    }
}

fn default_samples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default)]
    pub kind: SweepKind,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Random sweeps only: redraw points outside the precondition region.
    #[serde(default)]
    pub restrict_to_precondition: bool,
    pub t_ver: ParamRange,
    pub t_ref: ParamRange,
    pub n: ParamRange,
    pub tokens_ref_streaming: ParamRange,
    pub tokens_ref_full: ParamRange,
}

impl Default for SweepConfig {
    /// 10,000 random points inside the precondition region.
    fn default() -> Self {
        Self {
            kind: SweepKind::Random,
            samples: 10_000,
            seed: 0,
            restrict_to_precondition: true,
            t_ver: ParamRange::between(0.001, 1.0),
            t_ref: ParamRange::between(0.001, 1.0),
            n: ParamRange::between(1.0, 20.0),
            tokens_ref_streaming: ParamRange::between(0.0, 300.0),
            tokens_ref_full: ParamRange::between(0.0, 400.0),
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, LatencyError> {
        toml::from_str(text).map_err(|e| LatencyError::Sweep(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), LatencyError> {
        self.t_ver.check("t_ver")?;
        self.t_ref.check("t_ref")?;
        self.n.check("n")?;
        self.tokens_ref_streaming.check("tokens_ref_streaming")?;
        self.tokens_ref_full.check("tokens_ref_full")?;
        if self.kind == SweepKind::Random && self.samples == 0 {
            return Err(LatencyError::Sweep("samples must be positive".into()));
        }
        Ok(())
    }

    fn points(&self) -> Result<Vec<LatencyParams<f64>>, LatencyError> {
        let make = |t_ver: f64, t_ref: f64, n: f64, ts: f64, tf: f64| {
            LatencyParams::new(t_ver, t_ref, n.round().max(0.0) as u32, ts, tf)
        };
        let points = match self.kind {
            SweepKind::Grid => {
                let mut out = Vec::new();
                for &a in &self.t_ver.grid() {
                    for &b in &self.t_ref.grid() {
                        for &c in &self.n.grid() {
                            for &d in &self.tokens_ref_streaming.grid() {
                                for &e in &self.tokens_ref_full.grid() {
                                    out.push(make(a, b, c, d, e));
                                }
                            }
                        }
                    }
                }
                out
            }
            SweepKind::Random => {
                let mut rng = StdRng::seed_from_u64(self.seed);
                let mut out = Vec::with_capacity(self.samples);
                let max_draws = self.samples.saturating_mul(1000);
                let mut draws = 0;
                while out.len() < self.samples {
                    if draws == max_draws {
                        return Err(LatencyError::Sweep("precondition region is (nearly) empty".into()));
                    }
                    draws += 1;
                    let p = make(
                        self.t_ver.sample(&mut rng),
                        self.t_ref.sample(&mut rng),
                        self.n.sample(&mut rng),
                        self.tokens_ref_streaming.sample(&mut rng),
                        self.tokens_ref_full.sample(&mut rng),
                    );
                    if !self.restrict_to_precondition || p.precondition() {
                        out.push(p);
                    }
                }
                out
            }
        };
        for p in &points {
            p.validate()?;
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub t_ver: f64,
    pub t_ref: f64,
    pub n: u32,
    pub tokens_ref_streaming: f64,
    pub tokens_ref_full: f64,
    pub t_full: f64,
    pub t_streaming: f64,
    pub t_streaming_real: f64,
    /// `t_full / t_streaming`.
    pub ratio: f64,
    pub precondition: bool,
    pub ordering_holds: bool,
    /// `t_streaming == t_full`.
    pub boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: usize,
    pub in_region: usize,
    pub satisfied: usize,
}

impl SweepSummary {
    /// Share of in-region points where the ordering holds.
    pub fn fraction(&self) -> Option<f64> {
        (self.in_region > 0).then(|| self.satisfied as f64 / self.in_region as f64)
    }
}

pub fn run_sweep(config: &SweepConfig) -> Result<(Vec<SweepRow>, SweepSummary), LatencyError> {
    config.validate()?;
    let rows: Vec<SweepRow> = config
        .points()?
        .par_iter()
        .map(|p| {
            let r = LatencyReport::closed_form(p);
            SweepRow {
                t_ver: p.t_ver,
                t_ref: p.t_ref,
                n: p.n,
                tokens_ref_streaming: p.tokens_ref_streaming,
                tokens_ref_full: p.tokens_ref_full,
                t_full: r.t_full,
                t_streaming: r.t_streaming_serial,
                t_streaming_real: r.t_streaming_real,
                ratio: r.speedup(),
                precondition: p.precondition(),
                ordering_holds: r.ordering_holds,
                boundary: (r.t_streaming_serial - r.t_full).abs() <= 1e-12 * r.t_full.abs().max(1.0),
            }
        })
        .collect();
    let in_region: Vec<&SweepRow> = rows.iter().filter(|r| r.precondition).collect();
    let summary = SweepSummary {
        rows: rows.len(),
        in_region: in_region.len(),
        satisfied: in_region.iter().filter(|r| r.ordering_holds).count(),
    };
    Ok((rows, summary))
}

pub fn write_sweep_csv<W: io::Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
