//! Finite MDPs, softmax policies and exact analysis of the chains they induce.
//!
//! Everything here is a pure function of its inputs. These routines are the
//! ground truth that the sampled estimators and trainers are checked against.

mod analysis;
mod oracle;
mod policy;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use analysis::{
    analyze, average_reward, differential_values, hitting_time, induced_chain, induced_reward,
    mixing_time, mixing_time_of_chain, stationary_distribution, stationary_of_chain,
    ChainAnalysis, DifferentialValues, MixingTime, MIXING_TIME_CAP,
};
pub use oracle::{
    exact_policy_gradient, fisher_matrix, npg_direction, npg_direction_masked, npg_objective,
    performance_difference, pseudo_inverse, smallest_nonzero_eigenvalue, transfer_error,
    transfer_error_masked,
};
pub use policy::SoftmaxPolicy;
pub(crate) use policy::sample_index;

const STOCHASTIC_TOL: f64 = 1e-12;

/// A finite MDP with bounded rewards.
///
/// `transition[s][a][s']` is stored flat; rows are validated to be probability
/// vectors and rewards to lie in `[0, r_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: DMatrix<f64>,
    initial_dist: Vec<f64>,
    r_max: f64,
}

/// On-disk JSON layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub initial_dist: Vec<f64>,
    pub r_max: f64,
}

impl TabularMdp {
    /// Builds and validates an MDP. `transition[s][a]` is the next-state
    /// distribution and `reward[s][a]` the expected reward.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        initial_dist: Vec<f64>,
        r_max: f64,
    ) -> Result<Self> {
        let n_states = transition.len();
        let n_actions = transition.first().map_or(0, Vec::len);
        Self::from_document(MdpDocument {
            n_states,
            n_actions,
            transition,
            reward,
            initial_dist,
            r_max,
        })
    }

    pub fn from_document(doc: MdpDocument) -> Result<Self> {
        let MdpDocument {
            n_states,
            n_actions,
            transition,
            reward,
            initial_dist,
            r_max,
        } = doc;
        let bad = |msg: String| Err(Error::InvalidMdp(msg));
        if n_states == 0 || n_actions == 0 {
            return bad("n_states and n_actions must be positive".into());
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return bad(format!("r_max must be a positive real, got {r_max}"));
        }
        if transition.len() != n_states {
            return bad(format!("transition has {} state rows, expected {n_states}", transition.len()));
        }
        if reward.len() != n_states {
            return bad(format!("reward has {} rows, expected {n_states}", reward.len()));
        }
        if initial_dist.len() != n_states {
            return bad(format!(
                "initial_dist has length {}, expected {n_states}",
                initial_dist.len()
            ));
        }
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, per_action) in transition.iter().enumerate() {
            if per_action.len() != n_actions {
                return bad(format!(
                    "transition[{s}] has {} actions, expected {n_actions}",
                    per_action.len()
                ));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != n_states {
                    return bad(format!(
                        "transition[{s}][{a}] has length {}, expected {n_states}",
                        row.len()
                    ));
                }
                if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                    return bad(format!("transition[{s}][{a}] has invalid entry {p}"));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > STOCHASTIC_TOL {
                    return bad(format!(
                        "transition row (s={s}, a={a}) sums to {total}, expected 1"
                    ));
                }
                flat.extend_from_slice(row);
            }
        }
        let mut r = DMatrix::zeros(n_states, n_actions);
        for (s, row) in reward.iter().enumerate() {
            if row.len() != n_actions {
                return bad(format!("reward[{s}] has length {}, expected {n_actions}", row.len()));
            }
            for (a, &v) in row.iter().enumerate() {
                if !(v.is_finite() && (0.0..=r_max).contains(&v)) {
                    return bad(format!("reward (s={s}, a={a}) = {v} outside [0, {r_max}]"));
                }
                r[(s, a)] = v;
            }
        }
        if let Some(p) = initial_dist.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return bad(format!("initial_dist has invalid entry {p}"));
        }
        let total: f64 = initial_dist.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return bad(format!("initial_dist sums to {total}, expected 1"));
        }
        Ok(Self {
            n_states,
            n_actions,
            transition: flat,
            reward: r,
            initial_dist,
            r_max,
        })
    }

    pub fn to_document(&self) -> MdpDocument {
        MdpDocument {
            n_states: self.n_states,
            n_actions: self.n_actions,
            transition: (0..self.n_states)
                .map(|s| (0..self.n_actions).map(|a| self.row(s, a).to_vec()).collect())
                .collect(),
            reward: (0..self.n_states)
                .map(|s| (0..self.n_actions).map(|a| self.reward[(s, a)]).collect())
                .collect(),
            initial_dist: self.initial_dist.clone(),
            r_max: self.r_max,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// Next-state distribution for `(s, a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn p(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.row(s, a)[s_next]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[(s, a)]
    }

    pub fn rewards(&self) -> &DMatrix<f64> {
        &self.reward
    }

    /// Checks that a policy has the right shape for this MDP.
    pub fn check_policy(&self, policy: &SoftmaxPolicy) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(Error::Dimension {
                what: "policy shape (states x actions)",
                expected: self.n_states * self.n_actions,
                got: policy.n_states() * policy.n_actions(),
            });
        }
        Ok(())
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.initial_dist, rng)
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_index(self.row(s, a), rng)
    }

    /// Same MDP with every reward replaced by `c`.
    pub fn with_constant_reward(&self, c: f64) -> Result<Self> {
        let mut doc = self.to_document();
        for row in &mut doc.reward {
            row.iter_mut().for_each(|r| *r = c);
        }
        doc.r_max = doc.r_max.max(c);
        Self::from_document(doc)
    }
}

/// Expected per-state reward vector and next-state matrix helpers shared by
/// the analysis routines.
pub(crate) fn weighted_reward(mdp: &TabularMdp, probs: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        mdp.n_states(),
        (0..mdp.n_states())
            .map(|s| (0..mdp.n_actions()).map(|a| probs[(s, a)] * mdp.reward(s, a)).sum()),
    )
}
