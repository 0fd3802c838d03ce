//! Experiment configuration file.
//!
//! A TOML document with four sections; every key is optional:
//!
//! ```toml
//! [cluster]
//! n_pes = 1024
//!
//! [workload]          # any WorkloadConfig field
//! job_count = 10000
//! u_med = 7
//!
//! [sweep]
//! axis = "umed"       # umed | arrival_factor | flexibility
//! umed = [5, 6, 7, 8, 9]
//! arrival_factor = [0.5, 0.75, 1.0, 1.25, 1.5]
//! flexibility = [[1, 1], [2, 2], [3, 3], [4, 4], [5, 5]]
//! policies = ["ff", "pe_b", "du_b", "pedu_b", "pe_w", "du_w", "pedu_w"]
//! seeds = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
//!
//! [output]
//! dir = "results"
//! ci = true
//! plots = true
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use arsched::metrics::AxisValue;
use arsched::workload::WorkloadConfig;
use arsched::{ClusterConfig, Policy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A configuration problem, tied to the offending key.
#[derive(Debug, Error)]
#[error("config error: {key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    Umed,
    ArrivalFactor,
    Flexibility,
}

impl AxisKind {
    pub fn name(self) -> &'static str {
        match self {
            AxisKind::Umed => "umed",
            AxisKind::ArrivalFactor => "arrival_factor",
            AxisKind::Flexibility => "flexibility",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AxisKind::Umed => "UMed",
            AxisKind::ArrivalFactor => "arrival factor",
            AxisKind::Flexibility => "{artime factor, deadline factor}",
        }
    }
}

impl FromStr for AxisKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "umed" => Ok(AxisKind::Umed),
            "arrival_factor" => Ok(AxisKind::ArrivalFactor),
            "flexibility" => Ok(AxisKind::Flexibility),
            other => Err(ConfigError::new(
                "sweep.axis",
                format!("unknown axis `{other}` (expected umed, arrival_factor or flexibility)"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub n_pes: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            n_pes: ClusterConfig::default().n_pes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub axis: AxisKind,
    pub umed: Vec<f64>,
    pub arrival_factor: Vec<f64>,
    pub flexibility: Vec<[f64; 2]>,
    pub policies: Vec<String>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axis: AxisKind::Umed,
            umed: vec![5.0, 6.0, 7.0, 8.0, 9.0],
            arrival_factor: vec![0.5, 0.75, 1.0, 1.25, 1.5],
            flexibility: (1..=5).map(|v| [v as f64, v as f64]).collect(),
            policies: Policy::ALL.iter().map(|p| p.token().to_string()).collect(),
            seeds: (1..=10).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write sweep.csv with confidence intervals.
    pub ci: bool,
    pub plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            ci: true,
            plots: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cluster: ClusterSection,
    pub workload: WorkloadConfig,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let key = e.message().split('`').nth(1).unwrap_or("<file>").to_string();
            ConfigError::new(key, e.to_string().trim())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn cluster(&self) -> Result<ClusterConfig, ConfigError> {
        ClusterConfig::new(self.cluster.n_pes).map_err(|e| ConfigError::new("cluster.n_pes", e))
    }

    pub fn policies(&self) -> Result<Vec<Policy>, ConfigError> {
        if self.sweep.policies.is_empty() {
            return Err(ConfigError::new("sweep.policies", "no policies selected"));
        }
        let mut out: Vec<Policy> = self
            .sweep
            .policies
            .iter()
            .map(|s| s.parse::<Policy>().map_err(|e| ConfigError::new("sweep.policies", e)))
            .collect::<Result<_, _>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }

    pub fn axis_values(&self) -> Result<Vec<AxisValue>, ConfigError> {
        let key = format!("sweep.{}", self.sweep.axis.name());
        let mut values: Vec<AxisValue> = match self.sweep.axis {
            AxisKind::Umed => self.sweep.umed.iter().map(|&v| AxisValue::UMed(v)).collect(),
            AxisKind::ArrivalFactor => self
                .sweep
                .arrival_factor
                .iter()
                .map(|&v| AxisValue::ArrivalFactor(v))
                .collect(),
            AxisKind::Flexibility => self
                .sweep
                .flexibility
                .iter()
                .map(|&[a, d]| AxisValue::Flexibility(a, d))
                .collect(),
        };
        if values.is_empty() {
            return Err(ConfigError::new(key, "no sweep values"));
        }
        values.sort();
        values.dedup();
        for value in &values {
            self.workload_at(*value).validate().map_err(|e| ConfigError::new(key.clone(), e))?;
        }
        Ok(values)
    }

    /// The workload config for one sweep point.
    pub fn workload_at(&self, axis: AxisValue) -> WorkloadConfig {
        let mut w = self.workload.clone();
        match axis {
            AxisValue::UMed(v) => w.u_med = v,
            AxisValue::ArrivalFactor(v) => w.arrival_factor = v,
            AxisValue::Flexibility(a, d) => {
                w.artime_factor = a;
                w.deadline_factor = d;
            }
        }
        w
    }

    /// Cluster and workload checks shared by every command that generates jobs.
    pub fn validate_workload(&self) -> Result<(), ConfigError> {
        let cluster = self.cluster()?;
        self.workload
            .validate()
            .map_err(|e| ConfigError::new("workload", e))?;
        let largest = self.workload.max_job_size();
        if largest > cluster.n_pes() {
            return Err(ConfigError::new(
                "cluster.n_pes",
                format!("{} PEs is smaller than the largest generated job ({largest}); lower workload.u_hi", cluster.n_pes()),
            ));
        }
        Ok(())
    }

    /// Checks everything a sweep needs before any work starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_workload()?;
        self.policies()?;
        self.axis_values()?;
        if self.sweep.seeds.is_empty() {
            return Err(ConfigError::new("sweep.seeds", "no seeds"));
        }
        let mut seeds = self.sweep.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.sweep.seeds.len() {
            return Err(ConfigError::new("sweep.seeds", "duplicate seeds"));
        }
        if self.output.ci && seeds.len() < 2 {
            return Err(ConfigError::new(
                "sweep.seeds",
                "confidence intervals need at least 2 seeds (or disable output.ci)",
            ));
        }
        if self.workload.job_count == 0 {
            return Err(ConfigError::new("workload.job_count", "must be positive for a sweep"));
        }
        Ok(())
    }
}
