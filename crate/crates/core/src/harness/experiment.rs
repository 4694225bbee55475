use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use super::config::{Algorithm, EnvConfig, ExperimentConfig};
use super::record::{format_real, write_csv, RunRecord};
use super::stats::{summarize_by_episode, EpisodeSummary};
use crate::envs::{Environment, GridworldEnv};
use crate::error::{Error, Result};
use crate::estimators::FeatureMap;
use crate::mac::{train_mac, Budget, MacConfig};
use crate::mdp::TabularMdp;
use crate::ppgae::{train_ppgae, PpgaeConfig};

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    /// All rows, grouped by trial in trial order.
    pub records: Vec<RunRecord>,
    pub summary: Vec<EpisodeSummary>,
    /// Mean environment steps per MAC update, one entry per trial.
    pub steps_per_update: Vec<f64>,
}

enum LoadedEnv {
    Gridworld(GridworldEnv),
    Mdp(TabularMdp),
}

fn load_env(cfg: &EnvConfig) -> Result<LoadedEnv> {
    Ok(match cfg {
        EnvConfig::Gridworld(spec) => LoadedEnv::Gridworld(GridworldEnv::new(spec.clone())?),
        EnvConfig::MdpFile(path) => LoadedEnv::Mdp(TabularMdp::load(path)?),
    })
}

fn run_on<E: Environment>(env: &mut E, cfg: &ExperimentConfig, trial: usize) -> Result<(Vec<RunRecord>, f64)> {
    let seed = cfg.trial_seed(trial);
    let episodic = env.episode_rule().is_some();
    match cfg.algorithm {
        Algorithm::Mac => {
            let mac = MacConfig { seed, ..cfg.mac.clone() };
            let budget = if episodic {
                Budget::Episodes(cfg.episodes)
            } else {
                Budget::Updates(cfg.episodes as u64 * mac.eval_every)
            };
            let phi = FeatureMap::one_hot(env.n_states());
            let run = train_mac(env, &phi, &mac, budget, trial)?;
            let ratio = run.env_steps as f64 / run.updates.max(1) as f64;
            Ok((run.records, ratio))
        }
        Algorithm::Ppgae => {
            let ppgae = PpgaeConfig { seed, ..cfg.ppgae.clone() };
            let budget = if episodic {
                Budget::Episodes(cfg.episodes)
            } else {
                Budget::Updates(cfg.episodes as u64)
            };
            let run = train_ppgae(env, &ppgae, budget, trial)?;
            Ok((run.records, f64::NAN))
        }
    }
}

fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<(Vec<RunRecord>, f64)> {
    match load_env(&cfg.env)? {
        LoadedEnv::Gridworld(mut env) => run_on(&mut env, cfg, trial),
        LoadedEnv::Mdp(mut env) => run_on(&mut env, cfg, trial),
    }
}

/// Runs every trial on up to `parallel` threads. Output does not depend on
/// `parallel`: each trial owns its RNG and rows are merged in trial order.
pub fn run_experiment(cfg: &ExperimentConfig, parallel: usize) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let per_trial: Vec<Result<(Vec<RunRecord>, f64)>> = pool.install(|| {
        (0..cfg.n_trials)
            .into_par_iter()
            .map(|trial| run_trial(cfg, trial))
            .collect()
    });
    let mut records = Vec::new();
    let mut steps_per_update = Vec::new();
    for result in per_trial {
        let (rows, ratio) = result?;
        records.extend(rows);
        if ratio.is_finite() {
            steps_per_update.push(ratio);
        }
    }
    let summary = summarize_by_episode(&records);
    Ok(ExperimentOutput { records, summary, steps_per_update })
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    write_csv(records, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Writes `episode,mean,ci_low,ci_high,n`.
pub fn write_summary<W: Write>(summary: &[EpisodeSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode", "mean", "ci_low", "ci_high", "n"])?;
    for row in summary {
        let s = row.moving_avg;
        w.write_record([
            row.episode.to_string(),
            format_real(s.mean),
            format_real(s.lower()),
            format_real(s.upper()),
            s.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `results.csv` -> `results.summary.csv`.
pub fn summary_path(output: &Path) -> std::path::PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.summary.csv"))
}
