//! Standard Workload Format trace ingestion.
//!
//! Each data line holds 18 whitespace-separated fields; lines starting with
//! `;` are header comments. Only submit time (field 2), run time (field 4)
//! and allocated processors (field 5) are used; `-1` marks a missing value.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{apply_arrival_factor, derive_ar_fields, ArRequest, WorkloadError};
use crate::Time;

/// The three workload transforms applied to trace jobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArFactors {
    pub artime: f64,
    pub deadline: f64,
    pub arrival: f64,
}

impl Default for ArFactors {
    fn default() -> Self {
        Self {
            artime: 3.0,
            deadline: 3.0,
            arrival: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwfWorkload {
    pub requests: Vec<ArRequest>,
    /// Records dropped for a missing runtime or size, or a size above the cluster.
    pub skipped: usize,
}

pub fn ingest_swf(path: &Path, n_pes: usize, factors: ArFactors, seed: u64) -> Result<SwfWorkload, WorkloadError> {
    let file = File::open(path).map_err(|source| WorkloadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_swf(BufReader::new(file), n_pes, factors, seed)
}

pub fn parse_swf<R: BufRead>(input: R, n_pes: usize, factors: ArFactors, seed: u64) -> Result<SwfWorkload, WorkloadError> {
    for (field, value) in [("artime_factor", factors.artime), ("deadline_factor", factors.deadline)] {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(WorkloadError::InvalidConfig {
                field,
                reason: format!("{value} is not a non-negative number"),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut requests = Vec::new();
    let mut skipped = 0;

    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| WorkloadError::Io {
            path: format!("<swf line {line_no}>"),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(';') {
            continue;
        }
        let fields: Vec<f64> = trimmed
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| WorkloadError::Parse {
                    line: line_no,
                    message: format!("`{tok}` is not a number"),
                })
            })
            .collect::<Result<_, _>>()?;
        if fields.len() < 5 {
            return Err(WorkloadError::Parse {
                line: line_no,
                message: format!("expected 18 fields, found {}", fields.len()),
            });
        }
        let (id, submit, runtime, procs) = (fields[0], fields[1], fields[3], fields[4]);
        if runtime <= 0.0 || procs <= 0.0 || submit < 0.0 || procs.round() as usize > n_pes {
            skipped += 1;
            continue;
        }
        let arrival = submit.round() as Time;
        let duration = runtime.round().max(1.0) as Time;
        let (ready, deadline) = derive_ar_fields(arrival, duration, factors.artime, factors.deadline, &mut rng);
        requests.push(ArRequest {
            id: id.max(0.0) as u64,
            arrival,
            ready,
            duration,
            deadline,
            n_pe: procs.round() as usize,
        });
    }
    requests.sort_by_key(|r| r.arrival);
    Ok(SwfWorkload {
        requests: apply_arrival_factor(requests, factors.arrival)?,
        skipped,
    })
}
