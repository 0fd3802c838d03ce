//! Run summaries, t-based confidence intervals and sweep aggregation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::policies::Policy;
use crate::simengine::JobOutcome;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot summarize an empty run")]
    EmptyRun,
    #[error("confidence interval needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("confidence level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("sweep cell axis={axis} policy={policy}: {problem}")]
    RaggedSweep { axis: String, policy: Policy, problem: String },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSummary {
    pub acceptance_rate: f64,
    /// Mean slowdown of accepted jobs; `None` when nothing was accepted.
    pub avg_slowdown: Option<f64>,
    pub n_jobs: usize,
    pub n_accepted: usize,
}

pub fn summarize(outcomes: &[JobOutcome]) -> Result<RunSummary, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    let slowdowns: Vec<f64> = outcomes.iter().filter_map(JobOutcome::slowdown).collect();
    let n_accepted = slowdowns.len();
    // Sorting first keeps the float sum independent of input order.
    let avg_slowdown = (n_accepted > 0).then(|| {
        let mut sorted = slowdowns;
        sorted.sort_by(f64::total_cmp);
        sorted.iter().sum::<f64>() / n_accepted as f64
    });
    Ok(RunSummary {
        acceptance_rate: n_accepted as f64 / outcomes.len() as f64,
        avg_slowdown,
        n_jobs: outcomes.len(),
        n_accepted,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
}

/// Student-t interval for the mean at `level` (e.g. 0.95), n - 1 degrees of freedom.
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<Interval, MetricsError> {
    let n = samples.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricsError::InvalidLevel(level));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + level / 2.0);
    Ok(Interval {
        mean,
        half_width: t * (var / n as f64).sqrt(),
    })
}

/// Position along a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AxisValue {
    UMed(f64),
    ArrivalFactor(f64),
    /// (artime factor, deadline factor).
    Flexibility(f64, f64),
}

impl AxisValue {
    fn key(&self) -> (u8, f64, f64) {
        match *self {
            AxisValue::UMed(v) => (0, v, 0.0),
            AxisValue::ArrivalFactor(v) => (1, v, 0.0),
            AxisValue::Flexibility(a, d) => (2, a, d),
        }
    }
}

impl Eq for AxisValue {}

impl Ord for AxisValue {
    fn cmp(&self, other: &Self) -> Ordering {
        let (ka, a1, a2) = self.key();
        let (kb, b1, b2) = other.key();
        ka.cmp(&kb).then(a1.total_cmp(&b1)).then(a2.total_cmp(&b2))
    }
}

impl PartialOrd for AxisValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// CSV-safe rendering: `7`, `0.75`, `3/3`.
impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::UMed(v) | AxisValue::ArrivalFactor(v) => write!(f, "{v}"),
            AxisValue::Flexibility(a, d) => write!(f, "{a}/{d}"),
        }
    }
}

/// One simulation run inside a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub axis: AxisValue,
    pub policy: Policy,
    pub seed: u64,
    pub summary: RunSummary,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    /// Mean over runs that report the metric.
    pub mean: Option<f64>,
    /// 95% half-width; needs at least two reporting runs.
    pub ci95: Option<f64>,
    /// Runs that could not report the metric (no accepted jobs).
    pub n_absent: usize,
}

impl MetricSummary {
    fn from_samples(samples: &[f64], n_absent: usize) -> Self {
        let (mean, ci95) = match samples.len() {
            0 => (None, None),
            1 => (Some(samples[0]), None),
            _ => {
                let ci = confidence_interval(samples, 0.95).expect("two or more samples");
                (Some(ci.mean), Some(ci.half_width))
            }
        };
        Self { mean, ci95, n_absent }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub axis: AxisValue,
    pub policy: Policy,
    pub n_runs: usize,
    pub acceptance: MetricSummary,
    pub slowdown: MetricSummary,
}

/// Groups runs by (axis value, policy) and summarizes each group across seeds.
///
/// Every axis value must have every policy, and every cell the same number of
/// seeds, at least two.
pub fn aggregate_sweep(records: &[RunRecord]) -> Result<Vec<SweepPoint>, MetricsError> {
    let mut cells: BTreeMap<(AxisValue, Policy), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.axis, r.policy)).or_default().push(r);
    }
    let axes: BTreeSet<AxisValue> = cells.keys().map(|(a, _)| *a).collect();
    let policies: BTreeSet<Policy> = cells.keys().map(|(_, p)| *p).collect();
    let expected = cells.values().map(Vec::len).max().unwrap_or(0);

    for axis in &axes {
        for policy in &policies {
            let ragged = |problem: String| MetricsError::RaggedSweep {
                axis: axis.to_string(),
                policy: *policy,
                problem,
            };
            let Some(runs) = cells.get(&(*axis, *policy)) else {
                return Err(ragged("no runs".into()));
            };
            if runs.len() < 2 {
                return Err(ragged(format!("{} seed(s), need at least 2", runs.len())));
            }
            if runs.len() != expected {
                return Err(ragged(format!("{} seeds, other cells have {expected}", runs.len())));
            }
        }
    }

    Ok(cells
        .into_iter()
        .map(|((axis, policy), runs)| {
            let acceptance: Vec<f64> = runs.iter().map(|r| r.summary.acceptance_rate).collect();
            let slowdown: Vec<f64> = runs.iter().filter_map(|r| r.summary.avg_slowdown).collect();
            SweepPoint {
                axis,
                policy,
                n_runs: runs.len(),
                acceptance: MetricSummary::from_samples(&acceptance, 0),
                slowdown: MetricSummary::from_samples(&slowdown, runs.len() - slowdown.len()),
            }
        })
        .collect())
}
