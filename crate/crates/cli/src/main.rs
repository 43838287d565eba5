//! `zysim`: harvester characterization, simulation, policy comparison and
//! schedulability checks.
//!
//! Exit codes: 0 on success, 1 for invalid input, 2 when a run fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Serialize;

use zysim_core::energy_model::{estimate_eta, ProfileExport, DEFAULT_N_MAX};
use zysim_core::model_io;
use zysim_core::scheduler::{schedulability_necessary, Policy};
use zysim_core::sim::{self, SimConfig, SimError};
use zysim_core::tasks::{utilization, Task};

const SEED_ENV: &str = "ZYSIM_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "zysim",
    version,
    about = "Simulate deadline-aware early-exit inference on harvested power"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Characterize a harvest trace: h(N) profile and eta-factor.
    Eta {
        #[arg(long)]
        trace: PathBuf,
        /// Energy that makes a slot an event.
        #[arg(long)]
        dk_uj: u64,
        /// Slot length.
        #[arg(long)]
        dt_us: u64,
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        nmax: usize,
        /// Print the profile as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run one simulation and write its report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs_csv: Option<PathBuf>,
    },
    /// Run one config under several policies.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated, e.g. `zygarde,edf,edf_m,rr`.
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the necessary schedulability condition of a config's task set.
    Schedulability {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Invalid(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    eprintln!("{}", invocation());
    let result = match cli.command {
        Command::Eta {
            trace,
            dk_uj,
            dt_us,
            nmax,
            json,
        } => cmd_eta(&trace, dk_uj, dt_us, nmax, json),
        Command::Simulate { config, out, jobs_csv } => cmd_simulate(&config, &out, jobs_csv.as_deref()),
        Command::Compare { config, policies, out } => cmd_compare(&config, &policies, &out),
        Command::Schedulability { config } => cmd_schedulability(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// The command line as run, with the seed override if one is set.
fn invocation() -> String {
    let args: Vec<String> = std::env::args().collect();
    match std::env::var(SEED_ENV) {
        Ok(seed) => format!("{SEED_ENV}={seed} {}", args.join(" ")),
        Err(_) => args.join(" "),
    }
}

fn load_config(path: &Path) -> Result<SimConfig, Failure> {
    let mut cfg = model_io::load_config(path).map_err(invalid)?;
    if let Ok(raw) = std::env::var(SEED_ENV) {
        cfg.seed = raw
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={raw:?} is not an unsigned integer"))
            .map_err(invalid)?;
    }
    Ok(cfg)
}

fn cmd_eta(trace: &Path, dk_uj: u64, dt_us: u64, nmax: usize, json: bool) -> Result<(), Failure> {
    let trace_data = model_io::load_trace(trace).map_err(invalid)?;
    let (profile, eta) = estimate_eta(&trace_data, dk_uj, dt_us, nmax)
        .with_context(|| format!("characterizing {}", trace.display()))
        .map_err(invalid)?;
    let export = ProfileExport::new(&profile, &eta);
    if json {
        print!("{}", model_io::profile_to_string(&export));
        return Ok(());
    }
    println!("eta = {:.3}", export.eta);
    println!("kw_observed = {:.6}", export.kw_observed);
    println!("kw_random = {:.6}", export.kw_random);
    println!("marginal_rate = {:.6}", export.marginal_rate);
    println!("{:>6} {:>10} {:>10}", "N", "h(N)", "windows");
    for row in &export.h {
        println!("{:>6} {:>10.6} {:>10}", row.n, row.p, row.count);
    }
    Ok(())
}

fn cmd_simulate(config: &Path, out: &Path, jobs_csv: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let report = sim::run(&cfg)?;
    model_io::save_report(&report, out).map_err(runtime)?;
    if let Some(path) = jobs_csv {
        model_io::save_jobs_csv(&report, path).map_err(runtime)?;
    }
    println!("{}", report.summary_line());
    Ok(())
}

#[derive(Debug, Serialize)]
struct CompareRow {
    policy: Policy,
    released: u64,
    scheduled: u64,
    correct: u64,
    misses: u64,
    avg_units: f64,
}

fn cmd_compare(config: &Path, policies: &[String], out: &Path) -> Result<(), Failure> {
    let policies: Vec<Policy> = policies
        .iter()
        .map(|p| p.parse::<Policy>())
        .collect::<Result<_, _>>()
        .map_err(invalid)?;
    let cfg = load_config(config)?;
    let results: Vec<Result<_, SimError>> = std::thread::scope(|s| {
        let handles: Vec<_> = policies
            .iter()
            .map(|&p| {
                let cfg = &cfg;
                s.spawn(move || sim::run_with_policy(cfg, p))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    for (policy, result) in policies.iter().zip(results) {
        let a = result?.aggregates;
        rows.push(CompareRow {
            policy: *policy,
            released: a.jobs_released,
            scheduled: a.jobs_scheduled,
            correct: a.jobs_correct,
            misses: a.deadline_misses,
            avg_units: a.avg_units_per_job,
        });
    }
    let text = serde_json::to_string_pretty(&rows).map_err(runtime)? + "\n";
    std::fs::write(out, text)
        .with_context(|| format!("writing {}", out.display()))
        .map_err(runtime)?;
    println!(
        "{:<8} {:>9} {:>10} {:>8} {:>7} {:>10}",
        "policy", "released", "scheduled", "correct", "misses", "avg_units"
    );
    for r in &rows {
        println!(
            "{:<8} {:>9} {:>10} {:>8} {:>7} {:>10.3}",
            r.policy.name(),
            r.released,
            r.scheduled,
            r.correct,
            r.misses,
            r.avg_units
        );
    }
    Ok(())
}

fn cmd_schedulability(config: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let eta = sim::resolve_eta(&cfg)?;
    let tasks: Vec<Task> = cfg.tasks.iter().map(|t| t.task.clone()).collect();
    let util = utilization(&tasks, cfg.scheduler.policy.partitioned());
    let s = schedulability_necessary(util, eta)
        .context("eta must lie in [0, 1) for the outage model")
        .map_err(invalid)?;
    println!("utilization = {:.6}", s.utilization);
    println!("eta = {:.6}", s.eta);
    println!("expected_outage_slots = {:.6}", s.expected_outage_slots);
    match s.min_t_e_slots {
        Some(t) => println!("min_t_e_slots = {t:.6}"),
        None => println!("min_t_e_slots = none"),
    }
    println!("feasible = {}", if s.feasible { "yes" } else { "no" });
    Ok(())
}
