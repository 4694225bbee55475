use std::fs;

use avgpg::envs::{gridworld_as_mdp, GridworldSpec};
use avgpg::harness::{
    read_csv, run_experiment, summarize_by_episode, validate_file, write_records, Algorithm,
    EnvConfig, ExperimentConfig, CSV_HEADER,
};

fn gridworld_config(algorithm: Algorithm, trials: usize, episodes: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(algorithm);
    cfg.n_trials = trials;
    cfg.episodes = episodes;
    cfg.mac.actor_scale = 500.0;
    cfg
}

#[test]
fn csv_round_trip_and_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/out.csv");
    let out = run_experiment(&gridworld_config(Algorithm::Mac, 2, 30), 2).unwrap();
    write_records(&path, &out.records).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    let back = read_csv(text.as_bytes()).unwrap();
    assert_eq!(back, out.records);
    for trial in 0..2 {
        let rows: Vec<_> = back.iter().filter(|r| r.trial == trial).collect();
        assert_eq!(rows.len(), 30);
        assert!(rows.windows(2).all(|w| w[0].cumulative_steps <= w[1].cumulative_steps));
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.moving_avg)));
    }
}

#[test]
fn mdp_file_experiment_logs_exact_reward() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = gridworld_as_mdp(&GridworldSpec::analysis()).unwrap();
    mdp.save(dir.path().join("grid.json")).unwrap();
    let cfg_path = dir.path().join("exp.json");
    fs::write(
        &cfg_path,
        r#"{"algorithm": "mac", "env": {"mdp_file": "grid.json"}, "mac": {"eval_every": 50},
            "n_trials": 2, "episodes": 4}"#,
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    assert!(matches!(&cfg.env, EnvConfig::MdpFile(p) if p.is_absolute() || p.starts_with(dir.path())));
    let out = run_experiment(&cfg, 1).unwrap();
    assert_eq!(out.records.len(), 8);
    assert!(out.records.iter().all(|r| r.exact_j.is_some()));
    assert!(out.steps_per_update.iter().all(|r| (1.5..3.0).contains(r)));
}

#[test]
fn confidence_interval_narrows_with_more_trials() {
    let width = |trials: usize| {
        let out = run_experiment(&gridworld_config(Algorithm::Mac, trials, 60), 4).unwrap();
        let summary = summarize_by_episode(&out.records);
        let tail = &summary[summary.len() - 20..];
        tail.iter().map(|s| s.moving_avg.half_width).sum::<f64>() / tail.len() as f64
    };
    let w5 = width(5);
    let w20 = width(20);
    assert!(w20 < w5, "half-width with 20 trials {w20} vs 5 trials {w5}");
}

#[test]
fn validate_reports_bad_rows_by_state_and_action() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{"n_states": 2, "n_actions": 1,
            "transition": [[[0.5, 0.5]], [[0.6, 0.3]]],
            "reward": [[0.0], [1.0]], "initial_dist": [1.0, 0.0], "r_max": 1.0}"#,
    )
    .unwrap();
    let err = validate_file(&path).unwrap_err();
    assert!(err.to_string().contains("(s=1, a=0)"), "{err}");
    assert_eq!(err.exit_code(), 2);

    let good = dir.path().join("good.json");
    fs::write(
        &good,
        r#"{"n_states": 2, "n_actions": 1,
            "transition": [[[0.5, 0.5]], [[0.5, 0.5]]],
            "reward": [[0.0], [1.0]], "initial_dist": [1.0, 0.0], "r_max": 1.0}"#,
    )
    .unwrap();
    let d = validate_file(&good).unwrap();
    assert_eq!(d.stationary, vec![0.5, 0.5]);
    assert_eq!(d.mixing_time, 1);
    assert!((d.avg_reward - 0.5).abs() < 1e-12);
}

#[test]
fn exported_gridworld_validates_with_long_hitting_time() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.json");
    gridworld_as_mdp(&GridworldSpec::analysis()).unwrap().save(&path).unwrap();
    let d = validate_file(&path).unwrap();
    assert!(d.hitting_time >= 25.0, "{}", d.hitting_time);
}
