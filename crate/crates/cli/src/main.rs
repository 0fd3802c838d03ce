use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use arsched::metrics::summarize;
use arsched::simengine::{write_outcomes, Simulator};
use arsched::workload::{generate, ingest_swf, read_tsv, write_tsv, ArFactors};
use arsched::Policy;
use arsched_cli::checks::{replay_schedule, validation_suite};
use arsched_cli::{run_experiment, AxisKind, ConfigError, ExperimentConfig, ExperimentError, Overrides, RunOptions};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arsched", version, about = "Advance-reservation scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and print its summary.
    Simulate(SimulateArgs),
    /// Run a parameter sweep and write CSVs, plots and a manifest.
    Sweep(SweepArgs),
    /// Write a synthetic workload as TSV.
    Gen(GenArgs),
    /// Check the calendar and admission logic against the dense oracle.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_pes: Option<usize>,
    #[arg(long)]
    umed: Option<f64>,
    #[arg(long)]
    arrival_factor: Option<f64>,
    #[arg(long)]
    artime_factor: Option<f64>,
    #[arg(long)]
    deadline_factor: Option<f64>,
    /// Number of jobs to generate.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    mean_interarrival: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self, extra: Overrides) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        Overrides {
            n_pes: self.n_pes,
            umed: self.umed,
            arrival_factor: self.arrival_factor,
            artime_factor: self.artime_factor,
            deadline_factor: self.deadline_factor,
            jobs: self.jobs,
            mean_interarrival: self.mean_interarrival,
            seed: self.seed,
            ..extra
        }
        .apply(&mut config);
        Ok(config)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "ff")]
    policy: String,
    /// Replay a workload TSV instead of generating one.
    #[arg(long, conflicts_with = "swf")]
    workload: Option<PathBuf>,
    /// Ingest a Standard Workload Format trace.
    #[arg(long)]
    swf: Option<PathBuf>,
    /// Write per-job outcomes as TSV.
    #[arg(long)]
    outcomes: Option<PathBuf>,
    /// Print the calendar as seen by the first arrival at or after this time.
    #[arg(long, value_name = "TIME")]
    dump_calendar: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// umed, arrival_factor or flexibility.
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated policy tokens.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
    /// Number of seeds, counted up from --seed.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Only write runs.csv and the manifest.
    #[arg(long)]
    no_ci: bool,
    #[arg(long)]
    no_plots: bool,
    #[arg(long, conflicts_with = "serial")]
    threads: Option<usize>,
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// Output file; stdout if omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 200)]
    cases: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// A scheduler invariant broke; exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("invariant violation: {0}")]
struct InvariantViolation(String);

fn simulate(args: SimulateArgs) -> Result<()> {
    let config = args.common.load(Overrides::default())?;
    let cluster = config.cluster()?;
    let policy: Policy = args.policy.parse().map_err(|e| ConfigError::new("policy", e))?;
    let requests = if let Some(path) = &args.workload {
        let f = File::open(path).with_context(|| path.display().to_string())?;
        read_tsv(BufReader::new(f)).map_err(|e| ConfigError::new("workload", e))?
    } else if let Some(path) = &args.swf {
        let w = &config.workload;
        let factors = ArFactors {
            artime: w.artime_factor,
            deadline: w.deadline_factor,
            arrival: w.arrival_factor,
        };
        let trace = ingest_swf(path, cluster.n_pes(), factors, w.seed).map_err(|e| ConfigError::new("swf", e))?;
        eprintln!("swf: {} jobs, {} records skipped", trace.requests.len(), trace.skipped);
        trace.requests
    } else {
        config.validate_workload()?;
        generate(&config.workload).map_err(|e| ConfigError::new("workload", e))?
    };
    if requests.is_empty() {
        return Err(ConfigError::new("workload", "no jobs to simulate").into());
    }

    let mut sim = Simulator::new(cluster, policy);
    let mut dump = None;
    let outcomes = sim
        .run_observed(&requests, |ev| {
            if let Some(at) = args.dump_calendar {
                if dump.is_none() && ev.now >= at {
                    dump = Some((ev.now, ev.calendar.to_string()));
                }
            }
        })
        .map_err(|e| InvariantViolation(e.to_string()))?;
    replay_schedule(&outcomes, cluster.n_pes()).map_err(InvariantViolation)?;

    if let Some((now, text)) = dump {
        println!("# calendar at t={now}");
        print!("{text}");
    }
    if let Some(path) = &args.outcomes {
        let f = File::create(path).with_context(|| path.display().to_string())?;
        let mut w = BufWriter::new(f);
        write_outcomes(&outcomes, &mut w)?;
        w.flush()?;
    }
    let s = summarize(&outcomes)?;
    println!("policy\t{policy}");
    println!("jobs\t{}", s.n_jobs);
    println!("accepted\t{}", s.n_accepted);
    println!("acceptance_rate\t{:.6}", s.acceptance_rate);
    match s.avg_slowdown {
        Some(v) => println!("avg_slowdown\t{v:.6}"),
        None => println!("avg_slowdown\t-"),
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let axis = args.axis.as_deref().map(str::parse::<AxisKind>).transpose()?;
    let config = args.common.load(Overrides {
        seeds: args.seeds,
        policies: args.policies,
        axis,
        out: args.out,
        no_ci: args.no_ci,
        no_plots: args.no_plots,
        ..Overrides::default()
    })?;
    let threads = if args.serial { Some(1) } else { args.threads };
    let artifacts = run_experiment(&config, RunOptions { threads })?;
    println!("{}", artifacts.runs_csv.display());
    if let Some(p) = &artifacts.sweep_csv {
        println!("{}", p.display());
    }
    for p in &artifacts.plots {
        println!("{}", p.display());
    }
    println!("{}", artifacts.manifest.display());
    Ok(())
}

fn gen(args: GenArgs) -> Result<()> {
    let config = args.common.load(Overrides::default())?;
    config.validate_workload()?;
    let requests = generate(&config.workload).map_err(|e| ConfigError::new("workload", e))?;
    match &args.out {
        Some(path) => {
            let f = File::create(path).with_context(|| path.display().to_string())?;
            let mut w = BufWriter::new(f);
            write_tsv(&requests, &mut w)?;
            w.flush()?;
        }
        None => write_tsv(&requests, io::stdout().lock())?,
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<()> {
    let mut failed = 0;
    for r in validation_suite(args.cases, args.seed) {
        let status = if r.report.passed() { "ok" } else { "FAIL" };
        println!(
            "{status}\t{}\tcases={} checks={} candidate_gaps={} exhaustive_disagreements={}",
            r.name, r.report.cases, r.report.checks, r.report.candidate_gaps, r.report.exhaustive_disagreements
        );
        for m in &r.report.mismatches {
            println!("\t{m}");
        }
        if !r.report.passed() {
            failed += 1;
        }
    }
    if failed > 0 {
        bail!(InvariantViolation(format!("{failed} suite(s) failed")));
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<InvariantViolation>().is_some() {
        return 2;
    }
    if let Some(e) = err.downcast_ref::<ExperimentError>() {
        if e.is_invariant_violation() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Gen(a) => gen(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Skip causes whose text the outer message already includes.
            let mut message = err.to_string();
            for cause in err.chain().skip(1) {
                let text = cause.to_string();
                if !message.contains(&text) {
                    message = format!("{message}: {text}");
                }
            }
            eprintln!("error: {message}");
            ExitCode::from(exit_code(&err))
        }
    }
}
