//! Sweep execution and result files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use arsched::metrics::{aggregate_sweep, AxisValue, MetricSummary, MetricsError, RunRecord, SweepPoint};
use arsched::simengine::SimError;
use arsched::workload::{generate, WorkloadError};
use arsched::{summarize, ClusterConfig, Policy};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::plots::{self, PlotError};

pub const RUNS_HEADER: &str = "axis,policy,seed,acceptance_rate,avg_slowdown,n_jobs,n_accepted";
pub const SWEEP_HEADER: &str = "axis,policy,metric,mean,ci95";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("workload for {axis}, seed {seed}: {source}")]
    Workload {
        axis: String,
        seed: u64,
        #[source]
        source: WorkloadError,
    },
    #[error("simulation of {policy} at {axis}, seed {seed}: {source}")]
    Simulation {
        axis: String,
        policy: Policy,
        seed: u64,
        #[source]
        source: SimError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// Errors that mean the scheduler itself misbehaved.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(self, ExperimentError::Simulation { .. })
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the rayon default, `Some(1)` runs serially.
    pub threads: Option<usize>,
}

/// Stable short hash of everything that determines a cell's workload.
pub fn workload_fingerprint(config: &ExperimentConfig, axis: AxisValue, seed: u64) -> String {
    let mut w = config.workload_at(axis);
    w.seed = seed;
    let text = serde_json::to_string(&(config.cluster.n_pes, &w)).expect("workload serializes");
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

fn run_cell(
    config: &ExperimentConfig,
    cluster: ClusterConfig,
    axis: AxisValue,
    seed: u64,
    policies: &[Policy],
) -> Result<Vec<RunRecord>, ExperimentError> {
    let mut workload = config.workload_at(axis);
    workload.seed = seed;
    let requests = generate(&workload).map_err(|source| ExperimentError::Workload {
        axis: axis.to_string(),
        seed,
        source,
    })?;
    policies
        .iter()
        .map(|&policy| {
            let outcomes = arsched::run(&requests, cluster, policy).map_err(|source| ExperimentError::Simulation {
                axis: axis.to_string(),
                policy,
                seed,
                source,
            })?;
            Ok(RunRecord {
                axis,
                policy,
                seed,
                summary: summarize(&outcomes)?,
            })
        })
        .collect()
}

/// Runs every (axis value, seed) cell; all policies in a cell share one
/// workload. Output is sorted by axis, policy, seed whatever the thread count.
pub fn run_sweep(config: &ExperimentConfig, options: RunOptions) -> Result<Vec<RunRecord>, ExperimentError> {
    config.validate()?;
    let cluster = config.cluster()?;
    let policies = config.policies()?;
    let cells: Vec<(AxisValue, u64)> = config
        .axis_values()?
        .into_iter()
        .flat_map(|a| config.sweep.seeds.iter().map(move |&s| (a, s)))
        .collect();

    let work = || -> Result<Vec<Vec<RunRecord>>, ExperimentError> {
        cells
            .par_iter()
            .map(|&(axis, seed)| run_cell(config, cluster, axis, seed, &policies))
            .collect()
    };
    let nested = match options.threads {
        Some(1) => cells
            .iter()
            .map(|&(axis, seed)| run_cell(config, cluster, axis, seed, &policies))
            .collect::<Result<Vec<_>, _>>()?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ConfigError::new("threads", e))?
            .install(work)?,
        None => work()?,
    };
    let mut records: Vec<RunRecord> = nested.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.axis, r.policy, r.seed));
    Ok(records)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.axis,
            r.policy,
            r.seed,
            r.summary.acceptance_rate,
            opt(r.summary.avg_slowdown),
            r.summary.n_jobs,
            r.summary.n_accepted
        ));
    }
    out
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for p in points {
        for (metric, m) in [("acceptance_rate", &p.acceptance), ("avg_slowdown", &p.slowdown)] {
            out.push_str(&format!("{},{},{},{},{}\n", p.axis, p.policy, metric, opt(m.mean), opt(m.ci95)));
        }
    }
    out
}

#[derive(Serialize)]
struct AbsentCell {
    axis: String,
    policy: String,
    metric: &'static str,
    runs_absent: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    created_unix: u64,
    axis: &'static str,
    seeds: &'a [u64],
    config: &'a ExperimentConfig,
    workload_fingerprints: BTreeMap<String, String>,
    absent: Vec<AbsentCell>,
    files: BTreeMap<String, String>,
}

/// Files written by [`write_outputs`].
#[derive(Debug, Default)]
pub struct Artifacts {
    pub runs_csv: PathBuf,
    pub sweep_csv: Option<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub manifest: PathBuf,
}

struct Writer {
    written: Vec<PathBuf>,
}

impl Writer {
    fn write(&mut self, path: PathBuf, contents: &[u8]) -> Result<PathBuf, ExperimentError> {
        let io = |source| ExperimentError::Io {
            path: path.clone(),
            source,
        };
        let mut f = fs::File::create(&path).map_err(io)?;
        self.written.push(path.clone());
        f.write_all(contents).map_err(io)?;
        Ok(path)
    }

    fn rollback(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

fn sha256_file(path: &Path) -> Result<String, ExperimentError> {
    let bytes = fs::read(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes runs.csv, sweep.csv (when CIs are enabled), plots and manifest.json
/// into `config.output.dir`. On failure, files written so far are removed.
pub fn write_outputs(config: &ExperimentConfig, records: &[RunRecord]) -> Result<Artifacts, ExperimentError> {
    let dir = &config.output.dir;
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut writer = Writer { written: Vec::new() };
    let result = write_all(config, records, dir, &mut writer);
    if result.is_err() {
        writer.rollback();
    }
    result
}

fn write_all(
    config: &ExperimentConfig,
    records: &[RunRecord],
    dir: &Path,
    writer: &mut Writer,
) -> Result<Artifacts, ExperimentError> {
    let mut artifacts = Artifacts {
        runs_csv: writer.write(dir.join("runs.csv"), runs_csv(records).as_bytes())?,
        ..Default::default()
    };
    let mut absent = Vec::new();
    if config.output.ci {
        let points = aggregate_sweep(records)?;
        for p in &points {
            for (metric, m) in [("acceptance_rate", &p.acceptance), ("avg_slowdown", &p.slowdown)] {
                let MetricSummary { n_absent, .. } = *m;
                if n_absent > 0 {
                    absent.push(AbsentCell {
                        axis: p.axis.to_string(),
                        policy: p.policy.to_string(),
                        metric,
                        runs_absent: n_absent,
                    });
                }
            }
        }
        let sweep = writer.write(dir.join("sweep.csv"), sweep_csv(&points).as_bytes())?;
        if config.output.plots {
            let svgs = plots::render_sweep_csv(&sweep, Some(config.sweep.axis.label()))?;
            for (name, svg) in svgs {
                artifacts.plots.push(writer.write(dir.join(name), svg.as_bytes())?);
            }
        }
        artifacts.sweep_csv = Some(sweep);
    }

    let mut files = BTreeMap::new();
    let listed = std::iter::once(&artifacts.runs_csv)
        .chain(artifacts.sweep_csv.iter())
        .chain(artifacts.plots.iter());
    for path in listed {
        let name = path.file_name().expect("file path").to_string_lossy().into_owned();
        files.insert(name, sha256_file(path)?);
    }
    let mut workload_fingerprints = BTreeMap::new();
    for axis in config.axis_values()? {
        for &seed in &config.sweep.seeds {
            workload_fingerprints.insert(format!("{axis}#{seed}"), workload_fingerprint(config, axis, seed));
        }
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        axis: config.sweep.axis.name(),
        seeds: &config.sweep.seeds,
        config,
        workload_fingerprints,
        absent,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    artifacts.manifest = writer.write(dir.join("manifest.json"), json.as_bytes())?;
    Ok(artifacts)
}

/// [`run_sweep`] followed by [`write_outputs`].
pub fn run_experiment(config: &ExperimentConfig, options: RunOptions) -> Result<Artifacts, ExperimentError> {
    let records = run_sweep(config, options)?;
    write_outputs(config, &records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AxisKind;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.cluster.n_pes = 128;
        c.workload.job_count = 40;
        c.workload.u_low = 5.0;
        c.workload.u_hi = 7.0;
        c.sweep.umed = vec![5.0, 6.0];
        c.sweep.policies = vec!["ff".into(), "pe_w".into()];
        c.sweep.seeds = vec![1, 2, 3];
        c
    }

    #[test]
    fn serial_and_parallel_agree() {
        let c = small();
        let serial = run_sweep(&c, RunOptions { threads: Some(1) }).unwrap();
        let parallel = run_sweep(&c, RunOptions { threads: Some(3) }).unwrap();
        assert_eq!(runs_csv(&serial), runs_csv(&parallel));
        assert_eq!(serial.len(), 2 * 2 * 3);
    }

    #[test]
    fn fingerprint_depends_on_cell_not_policy() {
        let c = small();
        let a = workload_fingerprint(&c, AxisValue::UMed(5.0), 1);
        assert_eq!(a, workload_fingerprint(&c, AxisValue::UMed(5.0), 1));
        assert_ne!(a, workload_fingerprint(&c, AxisValue::UMed(5.0), 2));
        assert_ne!(a, workload_fingerprint(&c, AxisValue::UMed(6.0), 1));
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn csv_layout() {
        let c = small();
        let records = run_sweep(&c, RunOptions::default()).unwrap();
        let runs = runs_csv(&records);
        let mut lines = runs.lines();
        assert_eq!(lines.next(), Some(RUNS_HEADER));
        assert!(lines.next().unwrap().starts_with("5,ff,1,"));
        let points = aggregate_sweep(&records).unwrap();
        let sweep = sweep_csv(&points);
        assert_eq!(sweep.lines().count(), 1 + 2 * 2 * 2);
        assert!(sweep.lines().nth(1).unwrap().starts_with("5,ff,acceptance_rate,"));
    }

    #[test]
    fn flexibility_axis_renders_pairs() {
        let mut c = small();
        c.sweep.axis = AxisKind::Flexibility;
        c.sweep.flexibility = vec![[1.0, 1.0], [2.0, 3.0]];
        let records = run_sweep(&c, RunOptions::default()).unwrap();
        assert!(runs_csv(&records).contains("\n2/3,pe_w,3,"));
    }
}
