use std::collections::BTreeMap;

use serde::Serialize;

use super::record::RunRecord;

/// z-value of the two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

/// Mean with a normal-approximation 95% half-width `1.96 sd / sqrt(n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, half_width: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let half_width = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Z95 * var.sqrt() / (n as f64).sqrt()
        };
        Self { mean, half_width, n }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    #[serde(flatten)]
    pub moving_avg: Summary,
}

/// Per-episode summary of `moving_avg` across trials.
pub fn summarize_by_episode(records: &[RunRecord]) -> Vec<EpisodeSummary> {
    let mut by_episode: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_episode.entry(r.episode).or_default().push(r.moving_avg);
    }
    by_episode
        .into_iter()
        .map(|(episode, v)| EpisodeSummary { episode, moving_avg: Summary::of(&v) })
        .collect()
}

/// Mean `moving_avg` over the last `last` records of one trial.
pub fn final_window_mean(records: &[RunRecord], trial: usize, last: usize) -> Option<f64> {
    let rows: Vec<f64> = records
        .iter()
        .filter(|r| r.trial == trial)
        .map(|r| r.moving_avg)
        .collect();
    if rows.is_empty() || last == 0 {
        return None;
    }
    let tail = &rows[rows.len().saturating_sub(last)..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Distinct trial indices in order of first appearance.
pub fn trials(records: &[RunRecord]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for r in records {
        if out.last() != Some(&r.trial) && !out.contains(&r.trial) {
            out.push(r.trial);
        }
    }
    out
}
