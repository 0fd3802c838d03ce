//! Batch experiment runner for the `arsched` simulator.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod plots;

pub use config::{AxisKind, ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, run_sweep, write_outputs, Artifacts, ExperimentError, RunOptions};
pub use plots::{emit_plots, PlotError};

use std::path::PathBuf;

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub n_pes: Option<usize>,
    pub umed: Option<f64>,
    pub arrival_factor: Option<f64>,
    pub artime_factor: Option<f64>,
    pub deadline_factor: Option<f64>,
    pub jobs: Option<usize>,
    pub mean_interarrival: Option<f64>,
    pub seed: Option<u64>,
    /// Number of seeds, counted up from `seed` (default 1).
    pub seeds: Option<usize>,
    pub policies: Option<Vec<String>>,
    pub axis: Option<AxisKind>,
    pub out: Option<PathBuf>,
    pub no_ci: bool,
    pub no_plots: bool,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(n) = self.n_pes {
            config.cluster.n_pes = n;
        }
        let w = &mut config.workload;
        if let Some(v) = self.umed {
            w.u_med = v;
        }
        if let Some(v) = self.arrival_factor {
            w.arrival_factor = v;
        }
        if let Some(v) = self.artime_factor {
            w.artime_factor = v;
        }
        if let Some(v) = self.deadline_factor {
            w.deadline_factor = v;
        }
        if let Some(v) = self.jobs {
            w.job_count = v;
        }
        if let Some(v) = self.mean_interarrival {
            w.mean_interarrival = v;
        }
        if let Some(v) = self.seed {
            w.seed = v;
        }
        if self.seed.is_some() || self.seeds.is_some() {
            let base = self.seed.unwrap_or(1);
            let count = self.seeds.unwrap_or(config.sweep.seeds.len()) as u64;
            config.sweep.seeds = (base..base + count).collect();
        }
        if let Some(p) = &self.policies {
            config.sweep.policies = p.clone();
        }
        if let Some(a) = self.axis {
            config.sweep.axis = a;
        }
        if let Some(o) = &self.out {
            config.output.dir = o.clone();
        }
        if self.no_ci {
            config.output.ci = false;
        }
        if self.no_plots {
            config.output.plots = false;
        }
    }
}
