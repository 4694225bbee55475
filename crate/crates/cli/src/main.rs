use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use avgpg::harness::{
    feasibility_table, run_experiment, run_selftest, summary_path, validate_file,
    write_feasibility_csv, write_records, write_summary, ExperimentConfig,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avgpg", version, about = "Average-reward policy gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of an experiment and write the per-episode CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `base_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output_path`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `n_trials`.
        #[arg(long)]
        trials: Option<usize>,
        /// Number of trials run concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Minimum PPGAE epoch length for a range of mixing times.
    Feasibility {
        #[arg(long, default_value_t = 10.0)]
        tau_hit: f64,
        /// Comma-separated mixing times; defaults to 1, 2, ..., 60.
        #[arg(long, value_delimiter = ',')]
        tau_mix: Vec<f64>,
        /// Writes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check an MDP file and print its diagnostics under the uniform policy.
    Validate {
        path: PathBuf,
    },
    /// Run the oracle property checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(
    config: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    trials: Option<usize>,
    parallel: usize,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)
        .with_context(|| format!("loading {}", config.display()))?;
    if let Some(seed) = seed {
        cfg.base_seed = seed;
    }
    if let Some(out) = out {
        cfg.output_path = out;
    }
    if let Some(n) = trials {
        cfg.n_trials = n;
    }
    let output = run_experiment(&cfg, parallel)?;
    write_records(&cfg.output_path, &output.records)
        .with_context(|| format!("writing {}", cfg.output_path.display()))?;
    let summary_file = summary_path(&cfg.output_path);
    write_summary(&output.summary, BufWriter::new(File::create(&summary_file)?))?;

    println!("wrote {} rows to {}", output.records.len(), cfg.output_path.display());
    println!("summary in {}", summary_file.display());
    if let Some(last) = output.summary.last() {
        let s = last.moving_avg;
        println!(
            "final episode {}: moving average {:.3} +/- {:.3} over {} trials",
            last.episode, s.mean, s.half_width, s.n
        );
    }
    if !output.steps_per_update.is_empty() {
        let mean = output.steps_per_update.iter().sum::<f64>() / output.steps_per_update.len() as f64;
        println!("environment steps per update: {mean:.3}");
    }
    Ok(())
}

fn feasibility(tau_hit: f64, tau_mix: Vec<f64>, out: Option<PathBuf>) -> Result<()> {
    let taus = if tau_mix.is_empty() {
        (1..=60).map(f64::from).collect()
    } else {
        tau_mix
    };
    let rows = feasibility_table(tau_hit, &taus);
    for row in &rows {
        if let Err(e) = &row.h_min {
            eprintln!("tau_mix = {}: {e}", row.tau_mix);
        }
    }
    match out {
        Some(path) => write_feasibility_csv(&rows, BufWriter::new(File::create(&path)?))?,
        None => write_feasibility_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn selftest(seed: u64) -> Result<bool> {
    let checks = run_selftest(seed);
    let mut out = io::stdout().lock();
    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        writeln!(out, "{tag} {}: {}", c.name, c.detail)?;
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<avgpg::Error>())
        .map_or(1, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out, trials, parallel } => {
            run(&config, seed, out, trials, parallel).map(|_| true)
        }
        Command::Feasibility { tau_hit, tau_mix, out } => feasibility(tau_hit, tau_mix, out).map(|_| true),
        Command::Validate { path } => validate_file(&path)
            .with_context(|| format!("validating {}", path.display()))
            .map(|d| {
                println!("{d}");
                true
            }),
        Command::Selftest { seed } => selftest(seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
