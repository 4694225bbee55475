use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::mdp::{analyze, SoftmaxPolicy, TabularMdp};

/// Diagnostics of an MDP under the uniform policy.
#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub n_states: usize,
    pub n_actions: usize,
    pub stationary: Vec<f64>,
    pub avg_reward: f64,
    pub mixing_time: usize,
    pub hitting_time: f64,
}

pub fn diagnose(mdp: &TabularMdp) -> Result<Diagnostics> {
    let pi = SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions());
    let a = analyze(mdp, &pi)?;
    Ok(Diagnostics {
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        stationary: a.stationary.as_slice().to_vec(),
        avg_reward: a.avg_reward,
        mixing_time: a.mixing_time,
        hitting_time: a.hitting_time,
    })
}

/// Loads, checks and analyzes an MDP file.
pub fn validate_file(path: impl AsRef<Path>) -> Result<Diagnostics> {
    diagnose(&TabularMdp::load(path)?)
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d: Vec<String> = self.stationary.iter().map(|x| format!("{x:.6}")).collect();
        writeln!(f, "states: {}, actions: {}", self.n_states, self.n_actions)?;
        writeln!(f, "d=({})", d.join(", "))?;
        writeln!(f, "J(uniform)={:.6}", self.avg_reward)?;
        writeln!(f, "tau_mix={}", self.mixing_time)?;
        write!(f, "tau_hit={:.6}", self.hitting_time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{gridworld_as_mdp, GridworldSpec};

    #[test]
    fn exported_gridworld_has_long_hitting_time() {
        let mdp = gridworld_as_mdp(&GridworldSpec::analysis()).unwrap();
        let d = diagnose(&mdp).unwrap();
        assert_eq!(d.n_states, 25);
        assert!(d.hitting_time >= 25.0, "{}", d.hitting_time);
        assert!(d.to_string().contains("d=("));
    }
}
