use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{weighted_reward, SoftmaxPolicy, TabularMdp};
use crate::error::{Error, Result};

/// Upper bound on the number of matrix powers taken by [`mixing_time`].
pub const MIXING_TIME_CAP: usize = 100_000;

const POWER_ITER_TOL: f64 = 1e-12;
const POWER_ITER_CAP: usize = 1_000_000;
// stationary mass at or below this is treated as zero (transient state)
const POSITIVITY_FLOOR: f64 = 1e-15;

/// Summary of the chain induced by a policy.
#[derive(Clone, Debug, Serialize)]
pub struct ChainAnalysis {
    pub stationary: Vec<f64>,
    pub avg_reward: f64,
    pub mixing_time: usize,
    pub hitting_time: f64,
    /// `m(t)` for `t = 0..=mixing_time`.
    pub tv_curve: Vec<f64>,
}

/// Exact differential values, normalized so that `sum_s d(s) V(s) = 0`.
#[derive(Clone, Debug)]
pub struct DifferentialValues {
    pub q: DMatrix<f64>,
    pub v: DVector<f64>,
    pub advantage: DMatrix<f64>,
    pub avg_reward: f64,
    pub stationary: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct MixingTime {
    pub tau: usize,
    pub tv_curve: Vec<f64>,
}

/// State-to-state matrix `P_pi(s'|s) = sum_a pi(a|s) P(s'|s,a)`.
pub fn induced_chain(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<DMatrix<f64>> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states();
    let probs = policy.prob_matrix();
    let mut chain = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let w = probs[(s, a)];
            for (s2, p) in mdp.row(s, a).iter().enumerate() {
                chain[(s, s2)] += w * p;
            }
        }
    }
    Ok(chain)
}

/// Per-state expected reward `r_pi(s) = sum_a pi(a|s) r(s,a)`.
pub fn induced_reward(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<DVector<f64>> {
    mdp.check_policy(policy)?;
    Ok(weighted_reward(mdp, &policy.prob_matrix()))
}

/// Stationary distribution of a row-stochastic matrix.
///
/// Solves `(P^T - I) d = 0` with the last equation replaced by `sum d = 1`,
/// falling back to power iteration if the direct system is singular.
pub fn stationary_of_chain(chain: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = chain.nrows();
    if let Some(s) = unreachable_state(chain) {
        return Err(Error::Ergodicity(format!(
            "state {s} cannot reach every other state; chain is reducible"
        )));
    }
    let mut system = chain.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        system[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let d = match system.lu().solve(&rhs) {
        Some(d) if d.iter().all(|x| x.is_finite()) => d,
        _ => power_iteration(chain)?,
    };
    if let Some((s, v)) = d
        .iter()
        .enumerate()
        .find(|(_, v)| **v <= POSITIVITY_FLOOR)
    {
        return Err(Error::Ergodicity(format!(
            "stationary mass at state {s} is {v:e}; chain is reducible"
        )));
    }
    Ok(d)
}

/// A state from which some other state is unreachable, if any.
fn unreachable_state(chain: &DMatrix<f64>) -> Option<usize> {
    let n = chain.nrows();
    let reach = |start: usize, forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let w = if forward { chain[(u, v)] } else { chain[(v, u)] };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };
    // strongly connected iff state 0 reaches all and all reach state 0
    if reach(0, true).iter().any(|x| !x) {
        return Some(0);
    }
    reach(0, false).iter().position(|x| !x)
}

fn power_iteration(chain: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = chain.nrows();
    let t = chain.transpose();
    let mut d = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..POWER_ITER_CAP {
        let next = &t * &d;
        let delta = (&next - &d).amax();
        d = next;
        if delta < POWER_ITER_TOL {
            return Ok(d);
        }
    }
    Err(Error::Ergodicity(
        "power iteration did not converge (periodic or reducible chain)".into(),
    ))
}

pub fn stationary_distribution(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<DVector<f64>> {
    stationary_of_chain(&induced_chain(mdp, policy)?)
}

/// Long-run average reward `J = sum_s d(s) sum_a pi(a|s) r(s,a)`.
pub fn average_reward(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<f64> {
    let d = stationary_distribution(mdp, policy)?;
    Ok(d.dot(&induced_reward(mdp, policy)?))
}

/// Solves the average-reward Bellman equation.
///
/// `(I - P_pi + 1 d^T) V = r_pi - J 1` is nonsingular for an ergodic chain and
/// its solution automatically satisfies `d^T V = 0`.
pub fn differential_values(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<DifferentialValues> {
    let n = mdp.n_states();
    let chain = induced_chain(mdp, policy)?;
    let d = stationary_of_chain(&chain)?;
    let r_pi = induced_reward(mdp, policy)?;
    let j = d.dot(&r_pi);
    let system = DMatrix::identity(n, n) - &chain + DVector::from_element(n, 1.0) * d.transpose();
    let rhs = r_pi.add_scalar(-j);
    let v = system
        .lu()
        .solve(&rhs)
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::Solver("Bellman system is singular".into()))?;

    let probs = policy.prob_matrix();
    let mut q = DMatrix::zeros(n, mdp.n_actions());
    let mut advantage = DMatrix::zeros(n, mdp.n_actions());
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let next: f64 = mdp.row(s, a).iter().zip(v.iter()).map(|(p, x)| p * x).sum();
            q[(s, a)] = mdp.reward(s, a) - j + next;
        }
        // V(s) = E_a Q(s,a) holds to solver precision; use the exact V
        for a in 0..mdp.n_actions() {
            advantage[(s, a)] = q[(s, a)] - v[s];
        }
        debug_assert!({
            let vq: f64 = (0..mdp.n_actions()).map(|a| probs[(s, a)] * q[(s, a)]).sum();
            (vq - v[s]).abs() < 1e-8 * (1.0 + v[s].abs())
        });
    }
    Ok(DifferentialValues {
        q,
        v,
        advantage,
        avg_reward: j,
        stationary: d,
    })
}

/// `m(t) = max_s 1/2 ||P^t(s, .) - d||_1`.
fn worst_tv(power: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
    (0..power.nrows())
        .map(|s| {
            0.5 * power
                .row(s)
                .iter()
                .zip(d.iter())
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Smallest `t >= 1` with `m(t) <= epsilon`, iterating matrix powers of a
/// row-stochastic `chain`.
pub fn mixing_time_of_chain(chain: &DMatrix<f64>, epsilon: f64) -> Result<MixingTime> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let n = chain.nrows();
    let d = stationary_of_chain(chain)?;
    let mut power = DMatrix::identity(n, n);
    let mut tv_curve = vec![worst_tv(&power, &d)];
    for t in 1..=MIXING_TIME_CAP {
        power = &power * chain;
        let m = worst_tv(&power, &d);
        tv_curve.push(m);
        if m <= epsilon {
            return Ok(MixingTime { tau: t, tv_curve });
        }
    }
    Err(Error::MixingTimeout {
        cap: MIXING_TIME_CAP,
        last_tv: *tv_curve.last().unwrap_or(&1.0),
    })
}

pub fn mixing_time(mdp: &TabularMdp, policy: &SoftmaxPolicy, epsilon: f64) -> Result<MixingTime> {
    mixing_time_of_chain(&induced_chain(mdp, policy)?, epsilon)
}

/// `max_s 1 / d(s)`.
pub fn hitting_time(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<f64> {
    let d = stationary_distribution(mdp, policy)?;
    Ok(d.iter().map(|p| 1.0 / p).fold(0.0, f64::max))
}

/// Stationary distribution, average reward, quarter mixing time and hitting time.
pub fn analyze(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<ChainAnalysis> {
    let chain = induced_chain(mdp, policy)?;
    let d = stationary_of_chain(&chain)?;
    let avg_reward = d.dot(&induced_reward(mdp, policy)?);
    let mix = mixing_time_of_chain(&chain, 0.25)?;
    Ok(ChainAnalysis {
        hitting_time: d.iter().map(|p| 1.0 / p).fold(0.0, f64::max),
        stationary: d.iter().copied().collect(),
        avg_reward,
        mixing_time: mix.tau,
        tv_curve: mix.tv_curve,
    })
}
