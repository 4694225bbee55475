use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tabular softmax policy, `pi(a|s) = exp(theta[s][a]) / sum_b exp(theta[s][b])`.
///
/// Parameters are flattened row-major whenever they appear as a vector:
/// coordinate `s * n_actions + a` holds `theta[s][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    theta: DMatrix<f64>,
}

impl SoftmaxPolicy {
    pub fn new(theta: DMatrix<f64>) -> Self {
        Self { theta }
    }

    /// All-zero parameters, i.e. the uniform policy.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self::new(DMatrix::zeros(n_states, n_actions))
    }

    pub fn from_flat(n_states: usize, n_actions: usize, flat: &DVector<f64>) -> Result<Self> {
        if flat.len() != n_states * n_actions {
            return Err(Error::Dimension {
                what: "flattened theta",
                expected: n_states * n_actions,
                got: flat.len(),
            });
        }
        Ok(Self::new(DMatrix::from_row_iterator(
            n_states,
            n_actions,
            flat.iter().copied(),
        )))
    }

    pub fn n_states(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.theta.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn param_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions() + a
    }

    /// Row-major flattening of `theta`.
    pub fn flat(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_params(),
            (0..self.n_states()).flat_map(|s| (0..self.n_actions()).map(move |a| (s, a)))
                .map(|(s, a)| self.theta[(s, a)]),
        )
    }

    /// `theta += step * direction` for a flattened direction.
    pub fn ascend(&mut self, step: f64, direction: &DVector<f64>) {
        debug_assert_eq!(direction.len(), self.n_params());
        let n_actions = self.n_actions();
        for (i, d) in direction.iter().enumerate() {
            self.theta[(i / n_actions, i % n_actions)] += step * d;
        }
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.n_states() {
            return Err(Error::Index {
                what: "state",
                index: s,
                limit: self.n_states(),
            });
        }
        Ok(())
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.n_actions() {
            return Err(Error::Index {
                what: "action",
                index: a,
                limit: self.n_actions(),
            });
        }
        Ok(())
    }

    /// Action distribution at `s`, computed with a max shift so large
    /// logits never overflow.
    pub fn probs(&self, s: usize) -> Result<Vec<f64>> {
        self.check_state(s)?;
        Ok(self.probs_unchecked(s))
    }

    pub(crate) fn probs_unchecked(&self, s: usize) -> Vec<f64> {
        let row = self.theta.row(s);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    pub fn prob(&self, s: usize, a: usize) -> Result<f64> {
        self.check_action(a)?;
        Ok(self.probs(s)?[a])
    }

    /// `log pi(a|s)` via log-sum-exp.
    pub fn log_prob(&self, s: usize, a: usize) -> Result<f64> {
        self.check_state(s)?;
        self.check_action(a)?;
        let row = self.theta.row(s);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        Ok(self.theta[(s, a)] - lse)
    }

    /// Matrix of action probabilities, one row per state.
    pub fn prob_matrix(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_states(), self.n_actions());
        for s in 0..self.n_states() {
            for (a, p) in self.probs_unchecked(s).into_iter().enumerate() {
                out[(s, a)] = p;
            }
        }
        out
    }

    /// Nonzero block of the score at `(s, a)`: entry `b` is `1[a = b] - pi(b|s)`.
    pub fn score_row(&self, s: usize, a: usize) -> Result<Vec<f64>> {
        self.check_action(a)?;
        let mut row = self.probs(s)?;
        for p in row.iter_mut() {
            *p = -*p;
        }
        row[a] += 1.0;
        Ok(row)
    }

    /// Full score vector `grad_theta log pi(a|s)`; zero outside row `s`.
    pub fn score(&self, s: usize, a: usize) -> Result<DVector<f64>> {
        let row = self.score_row(s, a)?;
        let mut out = DVector::zeros(self.n_params());
        let base = self.param_index(s, 0);
        for (b, v) in row.into_iter().enumerate() {
            out[base + b] = v;
        }
        Ok(out)
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_index(&self.probs_unchecked(s), rng)
    }
}

/// Inverse-CDF draw from a discrete distribution. Consumes exactly one
/// uniform variate.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding leaves u >= acc; return the last index with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
