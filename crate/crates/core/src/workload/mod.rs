//! Synthetic AR request streams.
//!
//! Sizes follow a two-stage uniform distribution over log2(size) and runtimes
//! are drawn from a small discrete set. Ready times and deadlines are derived
//! from each job's runtime through the artime and deadline factors, and the
//! arrival factor compresses or stretches the arrival process to vary load.

mod swf;

use std::io::{BufRead, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Time;

pub use swf::{ingest_swf, parse_swf, ArFactors, SwfWorkload};

/// Smallest and largest generated job sizes.
pub const MIN_SIZE: usize = 32;
pub const MAX_SIZE: usize = 1024;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("arrival factor must be positive, got {0}")]
    NonPositiveArrivalFactor(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// An advance-reservation request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArRequest {
    pub id: u64,
    /// Submission time.
    pub arrival: Time,
    /// Earliest start.
    pub ready: Time,
    pub duration: Time,
    /// Latest completion.
    pub deadline: Time,
    pub n_pe: usize,
}

impl ArRequest {
    /// Checks `arrival <= ready`, `ready + duration <= deadline`, a positive
    /// duration and `1 <= n_pe <= n_pes`.
    pub fn check(&self, n_pes: usize) -> Result<(), String> {
        if self.ready < self.arrival {
            return Err(format!("job {}: ready {} before arrival {}", self.id, self.ready, self.arrival));
        }
        if self.duration == 0 {
            return Err(format!("job {}: zero duration", self.id));
        }
        if self.ready + self.duration > self.deadline {
            return Err(format!(
                "job {}: window [{}, {}] shorter than duration {}",
                self.id, self.ready, self.deadline, self.duration
            ));
        }
        if self.n_pe == 0 || self.n_pe > n_pes {
            return Err(format!("job {}: {} PEs on a cluster of {}", self.id, self.n_pe, n_pes));
        }
        Ok(())
    }

    /// Slack of the scheduling window: `deadline - duration - ready`.
    pub fn window_slack(&self) -> Time {
        self.deadline - self.duration - self.ready
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub job_count: usize,
    pub u_low: f64,
    pub u_med: f64,
    pub u_hi: f64,
    pub u_prob: f64,
    /// Runtimes in seconds.
    pub runtime_values: Vec<Time>,
    /// Probabilities over `runtime_values`. The defaults are not fitted to
    /// any trace.
    pub runtime_weights: Vec<f64>,
    /// Shift the runtime weights one slot toward longer runtimes for jobs of
    /// at least `2^u_med` PEs.
    pub size_runtime_shift: bool,
    pub artime_factor: f64,
    pub deadline_factor: f64,
    pub arrival_factor: f64,
    /// Mean of the exponential inter-arrival time, seconds.
    pub mean_interarrival: f64,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            job_count: 10_000,
            u_low: 4.5,
            u_med: 7.0,
            u_hi: 10.0,
            u_prob: 0.82,
            runtime_values: vec![60, 300, 900, 1800, 3600, 10800],
            runtime_weights: vec![0.15, 0.20, 0.20, 0.20, 0.15, 0.10],
            size_runtime_shift: true,
            artime_factor: 3.0,
            deadline_factor: 3.0,
            arrival_factor: 1.0,
            mean_interarrival: DEFAULT_MEAN_INTERARRIVAL,
            seed: 1,
        }
    }
}

/// Gives acceptance rates in the middle of the unit interval for all seven
/// policies on the default 1024-PE cluster.
pub const DEFAULT_MEAN_INTERARRIVAL: f64 = 400.0;

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let invalid = |field, reason: String| Err(WorkloadError::InvalidConfig { field, reason });
        let finite = [
            ("u_low", self.u_low),
            ("u_med", self.u_med),
            ("u_hi", self.u_hi),
            ("u_prob", self.u_prob),
            ("artime_factor", self.artime_factor),
            ("deadline_factor", self.deadline_factor),
            ("arrival_factor", self.arrival_factor),
            ("mean_interarrival", self.mean_interarrival),
        ];
        for (field, value) in finite {
            if !value.is_finite() {
                return invalid(field, format!("{value} is not a finite number"));
            }
        }
        if !(self.u_low <= self.u_med && self.u_med <= self.u_hi && self.u_low < self.u_hi) {
            return invalid(
                "u_med",
                format!("need u_low <= u_med <= u_hi with u_low < u_hi, got {} / {} / {}", self.u_low, self.u_med, self.u_hi),
            );
        }
        if !(0.0..=1.0).contains(&self.u_prob) {
            return invalid("u_prob", format!("{} outside [0, 1]", self.u_prob));
        }
        if self.runtime_values.is_empty() || self.runtime_values.contains(&0) {
            return invalid("runtime_values", "need at least one positive runtime".into());
        }
        if self.runtime_weights.len() != self.runtime_values.len() {
            return invalid(
                "runtime_weights",
                format!("{} weights for {} runtime values", self.runtime_weights.len(), self.runtime_values.len()),
            );
        }
        if self.runtime_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return invalid("runtime_weights", "weights must be finite and non-negative".into());
        }
        let total: f64 = self.runtime_weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid("runtime_weights", format!("weights sum to {total}, not 1"));
        }
        if self.artime_factor < 0.0 {
            return invalid("artime_factor", format!("{} is negative", self.artime_factor));
        }
        if self.deadline_factor < 0.0 {
            return invalid("deadline_factor", format!("{} is negative", self.deadline_factor));
        }
        if self.arrival_factor <= 0.0 {
            return invalid("arrival_factor", format!("{} is not positive", self.arrival_factor));
        }
        if self.mean_interarrival <= 0.0 {
            return invalid("mean_interarrival", format!("{} is not positive", self.mean_interarrival));
        }
        Ok(())
    }

    /// Largest job size the generator can emit.
    pub fn max_job_size(&self) -> usize {
        let exponent = self.u_hi.round().clamp(MIN_SIZE.ilog2() as f64, MAX_SIZE.ilog2() as f64);
        1usize << exponent as u32
    }

    /// Runtime weights for a job of `n_pe` PEs.
    pub fn weights_for(&self, n_pe: usize) -> Vec<f64> {
        if !self.size_runtime_shift || (n_pe as f64) < self.u_med.exp2() {
            return self.runtime_weights.clone();
        }
        let w = &self.runtime_weights;
        let mut shifted = vec![0.0; w.len()];
        for (i, &weight) in w.iter().enumerate() {
            shifted[(i + 1).min(w.len() - 1)] += weight;
        }
        shifted
    }
}

/// Source of inter-arrival gaps, in seconds.
pub trait ArrivalProcess {
    fn next_gap(&mut self, rng: &mut dyn RngCore) -> f64;
}

pub struct ExponentialArrivals {
    dist: Exp<f64>,
}

impl ExponentialArrivals {
    pub fn new(mean: f64) -> Result<Self, WorkloadError> {
        let dist = Exp::new(1.0 / mean).map_err(|e| WorkloadError::InvalidConfig {
            field: "mean_interarrival",
            reason: e.to_string(),
        })?;
        Ok(Self { dist })
    }
}

impl ArrivalProcess for ExponentialArrivals {
    fn next_gap(&mut self, rng: &mut dyn RngCore) -> f64 {
        self.dist.sample(rng)
    }
}

/// Draws sizes, runtimes and AR fields from one seeded stream.
pub struct Sampler {
    config: WorkloadConfig,
    base: WeightedIndex<f64>,
    shifted: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(config: &WorkloadConfig) -> Result<Self, WorkloadError> {
        config.validate()?;
        let index = |weights: Vec<f64>| {
            WeightedIndex::new(weights).map_err(|e| WorkloadError::InvalidConfig {
                field: "runtime_weights",
                reason: e.to_string(),
            })
        };
        Ok(Self {
            base: index(config.runtime_weights.clone())?,
            shifted: index(config.weights_for(MAX_SIZE))?,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config: config.clone(),
        })
    }

    /// Power-of-two job size in `[MIN_SIZE, MAX_SIZE]`. Always consumes two draws.
    pub fn sample_size(&mut self) -> usize {
        let c = &self.config;
        let low_stage = self.rng.random::<f64>() < c.u_prob;
        let u = self.rng.random::<f64>();
        let log2 = if low_stage {
            c.u_low + (c.u_med - c.u_low) * u
        } else {
            c.u_med + (c.u_hi - c.u_med) * u
        };
        let exponent = log2.round().clamp(MIN_SIZE.ilog2() as f64, MAX_SIZE.ilog2() as f64);
        1usize << exponent as u32
    }

    /// One of the configured runtimes. Always consumes one draw.
    pub fn sample_runtime(&mut self, n_pe: usize) -> Time {
        let shifted = self.config.size_runtime_shift && (n_pe as f64) >= self.config.u_med.exp2();
        let index = if shifted {
            self.shifted.sample(&mut self.rng)
        } else {
            self.base.sample(&mut self.rng)
        };
        self.config.runtime_values[index]
    }

    pub fn derive_ar_fields(&mut self, arrival: Time, duration: Time) -> (Time, Time) {
        derive_ar_fields(
            arrival,
            duration,
            self.config.artime_factor,
            self.config.deadline_factor,
            &mut self.rng,
        )
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Ready time and deadline from two independent uniform draws.
pub fn derive_ar_fields<R: Rng + ?Sized>(
    arrival: Time,
    duration: Time,
    artime_factor: f64,
    deadline_factor: f64,
    rng: &mut R,
) -> (Time, Time) {
    let u1 = rng.random::<f64>();
    let u2 = rng.random::<f64>();
    ar_fields_from_uniforms(arrival, duration, artime_factor, deadline_factor, u1, u2)
}

/// `ready = arrival + round(artime * u1 * duration)`,
/// `deadline = ready + round((1 + deadline_factor * u2) * duration)`.
pub fn ar_fields_from_uniforms(
    arrival: Time,
    duration: Time,
    artime_factor: f64,
    deadline_factor: f64,
    u1: f64,
    u2: f64,
) -> (Time, Time) {
    let du = duration as f64;
    let ready = arrival + (artime_factor * u1 * du).round() as Time;
    let span = ((1.0 + deadline_factor * u2) * du).round() as Time;
    (ready, ready + span)
}

/// Rescales arrivals to `round(arrival / factor)`, carrying each job's
/// book-ahead and window offsets along.
pub fn apply_arrival_factor(requests: Vec<ArRequest>, factor: f64) -> Result<Vec<ArRequest>, WorkloadError> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(WorkloadError::NonPositiveArrivalFactor(factor));
    }
    Ok(requests
        .into_iter()
        .map(|r| {
            let book_ahead = r.ready - r.arrival;
            let window = r.deadline - r.ready;
            let arrival = (r.arrival as f64 / factor).round() as Time;
            ArRequest {
                arrival,
                ready: arrival + book_ahead,
                deadline: arrival + book_ahead + window,
                ..r
            }
        })
        .collect())
}

/// Generates `config.job_count` requests with exponential inter-arrival times.
pub fn generate(config: &WorkloadConfig) -> Result<Vec<ArRequest>, WorkloadError> {
    config.validate()?;
    let mut arrivals = ExponentialArrivals::new(config.mean_interarrival)?;
    generate_with(config, &mut arrivals)
}

/// Generates requests driven by an arbitrary arrival process.
///
/// Per job the stream consumes, in order: one arrival gap, two size draws,
/// one runtime draw and two AR-field draws, so two configs sharing a seed see
/// the same uniforms job by job.
pub fn generate_with(config: &WorkloadConfig, arrivals: &mut dyn ArrivalProcess) -> Result<Vec<ArRequest>, WorkloadError> {
    let mut sampler = Sampler::new(config)?;
    let mut clock = 0.0f64;
    let mut requests = Vec::with_capacity(config.job_count);
    for id in 0..config.job_count as u64 {
        clock += arrivals.next_gap(sampler.rng());
        let arrival = clock.round() as Time;
        let n_pe = sampler.sample_size();
        let duration = sampler.sample_runtime(n_pe);
        let (ready, deadline) = sampler.derive_ar_fields(arrival, duration);
        requests.push(ArRequest {
            id,
            arrival,
            ready,
            duration,
            deadline,
            n_pe,
        });
    }
    apply_arrival_factor(requests, config.arrival_factor)
}

pub const TSV_HEADER: &str = "id\tt_a\tt_r\tt_du\tt_dl\tn_pe";

pub fn write_tsv<W: Write>(requests: &[ArRequest], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TSV_HEADER}")?;
    for r in requests {
        writeln!(out, "{}\t{}\t{}\t{}\t{}\t{}", r.id, r.arrival, r.ready, r.duration, r.deadline, r.n_pe)?;
    }
    Ok(())
}

/// Reads a file written by [`write_tsv`].
pub fn read_tsv<R: BufRead>(input: R) -> Result<Vec<ArRequest>, WorkloadError> {
    let mut lines = input.lines().enumerate();
    let parse_err = |line, message: String| WorkloadError::Parse { line, message };
    let io_err = |source| WorkloadError::Io {
        path: "<workload>".into(),
        source,
    };
    let header = lines.next().map(|(_, h)| h).transpose().map_err(io_err)?;
    if header.as_deref().map(str::trim_end) != Some(TSV_HEADER) {
        return Err(parse_err(1, format!("expected header `{TSV_HEADER}`")));
    }
    let mut requests = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<u64> = line
            .split('\t')
            .map(|f| f.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(idx + 1, e.to_string()))?;
        let [id, arrival, ready, duration, deadline, n_pe] = fields[..] else {
            return Err(parse_err(idx + 1, format!("expected 6 fields, found {}", fields.len())));
        };
        requests.push(ArRequest {
            id,
            arrival,
            ready,
            duration,
            deadline,
            n_pe: n_pe as usize,
        });
    }
    Ok(requests)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> WorkloadConfig {
        WorkloadConfig {
            job_count: 200,
            ..Default::default()
        }
    }

    #[test]
    fn sizes_are_legal_powers_of_two() {
        let mut s = Sampler::new(&config()).unwrap();
        for _ in 0..10_000 {
            let size = s.sample_size();
            assert!(size.is_power_of_two() && (MIN_SIZE..=MAX_SIZE).contains(&size), "{size}");
        }
    }

    #[test]
    fn degenerate_size_distribution() {
        let cfg = WorkloadConfig {
            u_prob: 1.0,
            u_low: 5.0,
            u_med: 5.0,
            ..config()
        };
        let mut s = Sampler::new(&cfg).unwrap();
        assert!((0..1000).all(|_| s.sample_size() == 32));
    }

    #[test]
    fn larger_median_gives_larger_jobs() {
        let mean = |u_med| {
            let mut s = Sampler::new(&WorkloadConfig {
                u_med,
                seed: 99,
                ..config()
            })
            .unwrap();
            (0..100_000).map(|_| s.sample_size() as f64).sum::<f64>() / 100_000.0
        };
        assert!(mean(9.0) > mean(5.0));
    }

    #[test]
    fn runtimes_come_from_the_configured_set() {
        let mut s = Sampler::new(&config()).unwrap();
        for n_pe in [32, 1024] {
            for _ in 0..2000 {
                assert!([60, 300, 900, 1800, 3600, 10800].contains(&s.sample_runtime(n_pe)));
            }
        }
    }

    #[test]
    fn degenerate_runtime_distribution() {
        let cfg = WorkloadConfig {
            runtime_weights: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            size_runtime_shift: false,
            ..config()
        };
        let mut s = Sampler::new(&cfg).unwrap();
        assert!((0..1000).all(|_| s.sample_runtime(1024) == 60));
    }

    #[test]
    fn runtime_frequencies_match_weights() {
        let cfg = config();
        let mut s = Sampler::new(&cfg).unwrap();
        let draws = 100_000;
        let mut counts = [0usize; 6];
        for _ in 0..draws {
            let rt = s.sample_runtime(32);
            counts[cfg.runtime_values.iter().position(|&v| v == rt).unwrap()] += 1;
        }
        for (count, weight) in counts.iter().zip(&cfg.runtime_weights) {
            assert!((*count as f64 / draws as f64 - weight).abs() <= 0.01);
        }
    }

    #[test]
    fn large_jobs_shift_toward_longer_runtimes() {
        let cfg = config();
        assert_eq!(cfg.weights_for(64), cfg.runtime_weights);
        let shifted = cfg.weights_for(128);
        assert_eq!(shifted.len(), 6);
        assert_eq!(shifted[0], 0.0);
        assert_eq!(shifted[1], 0.15);
        assert!((shifted[5] - 0.25).abs() < 1e-12);
        assert!((shifted.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ar_field_formulas() {
        assert_eq!(ar_fields_from_uniforms(40, 100, 0.0, 3.0, 0.7, 0.0), (40, 140));
        assert_eq!(ar_fields_from_uniforms(0, 100, 2.0, 0.0, 0.5, 0.9), (100, 200));
        assert_eq!(ar_fields_from_uniforms(0, 100, 3.0, 3.0, 0.5, 0.5), (150, 400));
    }

    #[test]
    fn arrival_factor_scaling() {
        let reqs: Vec<ArRequest> = [0, 100, 300]
            .into_iter()
            .enumerate()
            .map(|(i, a)| ArRequest {
                id: i as u64,
                arrival: a,
                ready: a + 10,
                duration: 60,
                deadline: a + 100,
                n_pe: 32,
            })
            .collect();
        assert_eq!(apply_arrival_factor(reqs.clone(), 1.0).unwrap(), reqs);
        let scaled = apply_arrival_factor(reqs, 2.0).unwrap();
        assert_eq!(scaled.iter().map(|r| r.arrival).collect::<Vec<_>>(), vec![0, 50, 150]);
        assert!(scaled.iter().all(|r| r.ready == r.arrival + 10 && r.deadline == r.arrival + 100));
        assert!(matches!(
            apply_arrival_factor(vec![], 0.0),
            Err(WorkloadError::NonPositiveArrivalFactor(_))
        ));
        assert!(apply_arrival_factor(vec![], -1.0).is_err());
    }

    #[test]
    fn halving_the_factor_halves_arrival_density() {
        let base = generate(&WorkloadConfig {
            job_count: 4000,
            ..config()
        })
        .unwrap();
        let slowed = apply_arrival_factor(base.clone(), 0.5).unwrap();
        let window = base[1999].arrival;
        let count = |reqs: &[ArRequest]| reqs.iter().filter(|r| r.arrival <= window).count();
        assert_eq!(count(&base), 2000);
        let ratio = count(&slowed) as f64 / count(&base) as f64;
        assert!((ratio - 0.5).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let cfg = config();
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert_eq!(a.len(), 200);
        assert!(a.windows(2).all(|w| w[0].arrival <= w[1].arrival));
        for r in &a {
            r.check(1024).unwrap();
        }
        assert_ne!(a, generate(&WorkloadConfig { seed: 2, ..cfg }).unwrap());
        assert!(generate(&WorkloadConfig {
            job_count: 0,
            ..config()
        })
        .unwrap()
        .is_empty());
    }

    #[test]
    fn config_validation_names_the_field() {
        let field_of = |cfg: WorkloadConfig| match cfg.validate() {
            Err(WorkloadError::InvalidConfig { field, .. }) => field,
            other => panic!("expected invalid config, got {other:?}"),
        };
        assert_eq!(field_of(WorkloadConfig { u_med: 11.0, ..config() }), "u_med");
        assert_eq!(field_of(WorkloadConfig { u_prob: 1.5, ..config() }), "u_prob");
        assert_eq!(
            field_of(WorkloadConfig {
                runtime_weights: vec![0.5; 6],
                ..config()
            }),
            "runtime_weights"
        );
        assert_eq!(field_of(WorkloadConfig { arrival_factor: 0.0, ..config() }), "arrival_factor");
        assert_eq!(field_of(WorkloadConfig { artime_factor: -1.0, ..config() }), "artime_factor");
        assert_eq!(
            field_of(WorkloadConfig {
                mean_interarrival: f64::NAN,
                ..config()
            }),
            "mean_interarrival"
        );
    }

    #[test]
    fn tsv_round_trip() {
        let reqs = generate(&WorkloadConfig { job_count: 25, ..config() }).unwrap();
        let mut buf = Vec::new();
        write_tsv(&reqs, &mut buf).unwrap();
        assert!(buf.starts_with(b"id\tt_a\tt_r\tt_du\tt_dl\tn_pe\n"));
        assert_eq!(read_tsv(&buf[..]).unwrap(), reqs);
        assert!(matches!(
            read_tsv(&b"id\tt_a\tt_r\tt_du\tt_dl\tn_pe\n1\t2\n"[..]),
            Err(WorkloadError::Parse { line: 2, .. })
        ));
    }
}
