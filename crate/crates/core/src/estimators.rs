//! Sampled-data layer: rollouts on the live chain, the three per-transition
//! stochastic gradients, the multi-level Monte Carlo combiner and the
//! stepsize schedules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::Serialize;

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::mdp::{self, SoftmaxPolicy, TabularMdp};

/// Added to AdaGrad denominators so an all-zero gradient stream stays finite.
pub const EPS_GUARD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

/// Consecutive transitions of the live chain.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// MLMC level the trajectory was collected for, if any.
    pub level: Option<u32>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn last_state(&self) -> Option<usize> {
        self.transitions.last().map(|t| t.s_next)
    }

    pub fn is_chain_consistent(&self) -> bool {
        self.transitions.windows(2).all(|w| w[0].s_next == w[1].s)
    }
}

/// Linear critic features, one row per state.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    features: DMatrix<f64>,
}

impl FeatureMap {
    /// Rejects feature vectors with norm above one.
    pub fn new(features: DMatrix<f64>) -> Result<Self> {
        for s in 0..features.nrows() {
            let norm = features.row(s).norm();
            if norm > 1.0 + 1e-12 {
                return Err(Error::Config(format!("feature norm at state {s} is {norm} > 1")));
            }
        }
        Ok(Self { features })
    }

    pub fn one_hot(n_states: usize) -> Self {
        Self {
            features: DMatrix::identity(n_states, n_states),
        }
    }

    pub fn n_states(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn phi(&self, s: usize) -> DVector<f64> {
        self.features.row(s).transpose()
    }

    /// Critic estimate `<phi(s), omega>`.
    pub fn value(&self, s: usize, omega: &DVector<f64>) -> f64 {
        self.features.row(s).iter().zip(omega.iter()).map(|(f, w)| f * w).sum()
    }

    pub fn values(&self, omega: &DVector<f64>) -> DVector<f64> {
        &self.features * omega
    }
}

/// Actor, critic and reward-tracker state of one learner, plus the live chain
/// position.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerState {
    pub policy: SoftmaxPolicy,
    pub omega: DVector<f64>,
    pub eta: f64,
    pub t: u64,
    /// Running sum of squared actor-gradient norms.
    pub h_norm_accum: f64,
    /// Running sum of squared critic-gradient norms.
    pub g_norm_accum: f64,
    pub current_state: usize,
}

impl LearnerState {
    /// Uniform policy, zero critic, zero tracker.
    pub fn new(n_states: usize, n_actions: usize, feature_dim: usize, start: usize) -> Self {
        Self {
            policy: SoftmaxPolicy::uniform(n_states, n_actions),
            omega: DVector::zeros(feature_dim),
            eta: 0.0,
            t: 0,
            h_norm_accum: 0.0,
            g_norm_accum: 0.0,
            current_state: start,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MlmcConfig {
    pub t_max: u64,
    pub j_max: u32,
    pub rng_seed: u64,
}

impl MlmcConfig {
    pub fn new(t_max: u64, rng_seed: u64) -> Result<Self> {
        if t_max < 2 {
            return Err(Error::Config(format!("t_max must be at least 2, got {t_max}")));
        }
        Ok(Self {
            t_max,
            j_max: t_max.ilog2(),
            rng_seed,
        })
    }
}

/// Simulates `length` steps from `start`. Each step draws the action, then
/// lets the environment draw the next state.
pub fn rollout<E: Environment, R: Rng + ?Sized>(
    env: &mut E,
    policy: &SoftmaxPolicy,
    start: usize,
    length: usize,
    rng: &mut R,
) -> Trajectory {
    let mut transitions = Vec::with_capacity(length);
    let mut s = start;
    for _ in 0..length {
        let a = policy.sample_action(s, rng);
        let out = env.step(s, a, rng);
        transitions.push(Transition {
            s,
            a,
            r: out.reward,
            s_next: out.next_state,
        });
        s = out.next_state;
    }
    Trajectory {
        transitions,
        level: None,
    }
}

fn check_features(phi: &FeatureMap, omega: &DVector<f64>) -> Result<()> {
    if omega.len() != phi.dim() {
        return Err(Error::Dimension {
            what: "critic weights",
            expected: phi.dim(),
            got: omega.len(),
        });
    }
    Ok(())
}

/// `delta = r - eta + <phi(s') - phi(s), omega>`.
pub fn td_error(
    transition: &Transition,
    eta: f64,
    omega: &DVector<f64>,
    phi: &FeatureMap,
) -> Result<f64> {
    check_features(phi, omega)?;
    Ok(transition.r - eta + phi.value(transition.s_next, omega) - phi.value(transition.s, omega))
}

/// Per-transition gradients for the tracker, critic and actor.
///
/// `f` and `g` are descent directions (the tracker and critic move along
/// `-f`, `-g`); `h` is an ascent direction for the actor.
#[derive(Clone, Debug, PartialEq)]
pub struct StepGradients {
    /// `eta - r`
    pub f: f64,
    /// `-delta * phi(s)`
    pub g: DVector<f64>,
    /// `delta * score(s, a)`
    pub h: DVector<f64>,
    pub delta: f64,
}

pub fn step_gradients(
    transition: &Transition,
    state: &LearnerState,
    phi: &FeatureMap,
) -> Result<StepGradients> {
    let delta = td_error(transition, state.eta, &state.omega, phi)?;
    Ok(StepGradients {
        f: state.eta - transition.r,
        g: phi.phi(transition.s) * -delta,
        h: state.policy.score(transition.s, transition.a)? * delta,
        delta,
    })
}

/// Level `J` with `P(J = j) = 2^-j` for `j >= 1`.
pub fn sample_level<R: Rng + ?Sized>(rng: &mut R) -> u32 {
    let failures = Geometric::new(0.5).expect("valid probability").sample(rng);
    u32::try_from(failures.saturating_add(1)).unwrap_or(u32::MAX)
}

/// Number of transitions collected for a level: `2^J` when `2^J <= t_max`,
/// otherwise only the single transition that `h^0` needs.
pub fn level_length(level: u32, t_max: u64) -> usize {
    if level <= t_max.ilog2() {
        1usize << level
    } else {
        1
    }
}

/// Draws a level and collects the matching trajectory from `start`.
pub fn collect_level_trajectory<E: Environment, R: Rng + ?Sized>(
    env: &mut E,
    policy: &SoftmaxPolicy,
    start: usize,
    t_max: u64,
    rng: &mut R,
) -> Trajectory {
    let level = sample_level(rng);
    let mut traj = rollout(env, policy, start, level_length(level, t_max), rng);
    traj.level = Some(level);
    traj
}

/// Combines per-transition gradients into `h^0 + 2^J (h^J - h^{J-1})`, where
/// `h^j` averages the first `2^j` transitions. Trajectories whose level exceeds
/// the cap contribute `h^0` only.
pub fn mlmc_combine<F>(traj: &Trajectory, t_max: u64, grad: F) -> Result<DVector<f64>>
where
    F: FnMut(&Transition) -> Result<DVector<f64>>,
{
    let samples = traj.transitions.iter().map(grad).collect::<Result<Vec<_>>>()?;
    mlmc_from_samples(&samples, traj.level.unwrap_or(0), t_max)
}

/// [`mlmc_combine`] over precomputed per-transition samples.
pub fn mlmc_from_samples(samples: &[DVector<f64>], level: u32, t_max: u64) -> Result<DVector<f64>> {
    let h0 = samples
        .first()
        .ok_or_else(|| Error::Config("MLMC needs at least one transition".into()))?;
    if level == 0 || level > t_max.ilog2() {
        return Ok(h0.clone());
    }
    let n = 1usize << level;
    if samples.len() < n {
        return Err(Error::Dimension {
            what: "level trajectory length",
            expected: n,
            got: samples.len(),
        });
    }
    let half = n / 2;
    let mut sum_half = DVector::zeros(h0.len());
    for x in &samples[..half] {
        sum_half += x;
    }
    let mut sum_full = sum_half.clone();
    for x in &samples[half..n] {
        sum_full += x;
    }
    let h_full = sum_full / n as f64;
    let h_half = sum_half / half as f64;
    Ok(h0 + (h_full - h_half) * n as f64)
}

#[derive(Clone, Debug)]
pub struct MlmcEstimate {
    pub estimate: DVector<f64>,
    pub trajectory: Trajectory,
    pub level: u32,
}

/// One MLMC gradient draw continuing the chain from `*current_state`, which is
/// advanced to the trajectory's final state.
pub fn mlmc_estimate<E, R, F>(
    grad: F,
    env: &mut E,
    policy: &SoftmaxPolicy,
    current_state: &mut usize,
    config: &MlmcConfig,
    rng: &mut R,
) -> Result<MlmcEstimate>
where
    E: Environment,
    R: Rng + ?Sized,
    F: FnMut(&Transition) -> Result<DVector<f64>>,
{
    let trajectory = collect_level_trajectory(env, policy, *current_state, config.t_max, rng);
    let estimate = mlmc_combine(&trajectory, config.t_max, grad)?;
    *current_state = trajectory.last_state().unwrap_or(*current_state);
    Ok(MlmcEstimate {
        estimate,
        level: trajectory.level.unwrap_or(0),
        trajectory,
    })
}

/// AdaGrad stepsize: accumulates `raw_norm_sq` and returns
/// `(1 + t)^-sigma / (sqrt(accum) + EPS_GUARD)` with the updated accumulator.
pub fn adagrad_step(accum: f64, raw_norm_sq: f64, t: u64, sigma: f64) -> (f64, f64) {
    let new_accum = accum + raw_norm_sq;
    let alpha = (1.0 + t as f64).powf(-sigma) / (new_accum.sqrt() + EPS_GUARD);
    (alpha, new_accum)
}

/// Tracker stepsize `(1 + t)^-nu`.
pub fn tracking_stepsize(t: u64, nu: f64) -> f64 {
    (1.0 + t as f64).powf(-nu)
}

/// Exact expected critic update direction `E_{s~d, a~pi, s'}[delta phi(s)]`.
/// It vanishes exactly at a TD fixed point of the projected Bellman equation.
pub fn expected_td_direction(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    phi: &FeatureMap,
    omega: &DVector<f64>,
    eta: f64,
) -> Result<DVector<f64>> {
    check_features(phi, omega)?;
    let d = mdp::stationary_distribution(mdp, policy)?;
    let values = phi.values(omega);
    let mut out = DVector::zeros(phi.dim());
    for s in 0..mdp.n_states() {
        let probs = policy.probs(s)?;
        let mut mean_delta = 0.0;
        for (a, p) in probs.iter().enumerate() {
            let next: f64 = mdp.row(s, a).iter().zip(values.iter()).map(|(q, v)| q * v).sum();
            mean_delta += p * (mdp.reward(s, a) - eta + next - values[s]);
        }
        out.axpy(d[s] * mean_delta, &phi.phi(s), 1.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(s: usize, a: usize, r: f64, s_next: usize) -> Transition {
        Transition { s, a, r, s_next }
    }

    #[test]
    fn td_error_special_cases() {
        let phi = FeatureMap::one_hot(3);
        let zero = DVector::zeros(3);
        assert_eq!(td_error(&tr(0, 0, 0.7, 2), 0.7, &zero, &phi).unwrap(), 0.0);
        let omega = DVector::from_vec(vec![0.3, -2.0, 5.0]);
        // same state: features cancel
        let d = td_error(&tr(1, 0, 0.4, 1), 0.1, &omega, &phi).unwrap();
        assert!((d - 0.3).abs() < 1e-15);
        assert!(matches!(
            td_error(&tr(0, 0, 0.0, 1), 0.0, &DVector::zeros(2), &phi),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn gradients_vanish_at_zero_td_error() {
        let phi = FeatureMap::one_hot(2);
        let state = LearnerState::new(2, 2, 2, 0);
        let mut with_eta = state.clone();
        with_eta.eta = 0.5;
        let g = step_gradients(&tr(0, 1, 0.5, 0), &with_eta, &phi).unwrap();
        assert_eq!(g.f, 0.0);
        assert_eq!(g.delta, 0.0);
        assert!(g.g.amax() == 0.0 && g.h.amax() == 0.0);
    }

    #[test]
    fn level_length_truncates_above_cap() {
        assert_eq!(level_length(1, 4), 2);
        assert_eq!(level_length(2, 4), 4);
        assert_eq!(level_length(3, 4), 1);
        assert_eq!(level_length(3, 8), 8);
        assert_eq!(level_length(2, 7), 4);
    }

    #[test]
    fn combine_uses_only_first_sample_above_cap() {
        let traj = Trajectory {
            transitions: vec![tr(0, 0, 3.0, 0)],
            level: Some(5),
        };
        let est = mlmc_combine(&traj, 4, |t| Ok(DVector::from_element(1, t.r))).unwrap();
        assert_eq!(est[0], 3.0);
    }

    #[test]
    fn combine_matches_hand_computation() {
        // level 2 on rewards (1, 2, 3, 6): h0 = 1, h1 = 1.5, h2 = 3 -> 1 + 4 * 1.5 = 7
        let traj = Trajectory {
            transitions: [1.0, 2.0, 3.0, 6.0].iter().map(|&r| tr(0, 0, r, 0)).collect(),
            level: Some(2),
        };
        let est = mlmc_combine(&traj, 4, |t| Ok(DVector::from_element(1, t.r))).unwrap();
        assert!((est[0] - 7.0).abs() < 1e-15);
        // level 1 on (1, 2): h0 = 1, h1 = 1.5 -> 1 + 2 * 0.5 = 2
        let traj = Trajectory {
            transitions: vec![tr(0, 0, 1.0, 0), tr(0, 0, 2.0, 0)],
            level: Some(1),
        };
        let est = mlmc_combine(&traj, 4, |t| Ok(DVector::from_element(1, t.r))).unwrap();
        assert!((est[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mlmc_estimate_threads_the_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut mdp = crate::envs::random_ergodic_mdp(4, 2, &mut rng, 1.0).unwrap();
        let pi = SoftmaxPolicy::uniform(4, 2);
        let cfg = MlmcConfig::new(8, 0).unwrap();
        let mut state = 2usize;
        for _ in 0..50 {
            let before = state;
            let est = mlmc_estimate(
                |t| Ok(DVector::from_element(1, t.r)),
                &mut mdp,
                &pi,
                &mut state,
                &cfg,
                &mut rng,
            )
            .unwrap();
            assert_eq!(est.trajectory.transitions[0].s, before);
            assert!(est.trajectory.is_chain_consistent());
            assert_eq!(state, est.trajectory.last_state().unwrap());
            assert_eq!(est.trajectory.len(), level_length(est.level, 8));
        }
    }

    #[test]
    fn adagrad_first_step_and_zero_stream() {
        let (alpha, acc) = adagrad_step(0.0, 1.0, 0, 0.75);
        assert_eq!(acc, 1.0);
        assert!((alpha - 1.0 / (1.0 + EPS_GUARD)).abs() < 1e-15);
        let mut acc = 0.0;
        for t in 0..5 {
            let (alpha, next) = adagrad_step(acc, 0.0, t, 0.75);
            assert!(alpha.is_finite());
            assert!((alpha - (1.0 + t as f64).powf(-0.75) / EPS_GUARD).abs() < 1e-3 * alpha);
            acc = next;
        }
    }

    #[test]
    fn tracking_stepsize_values() {
        assert_eq!(tracking_stepsize(0, 0.5), 1.0);
        assert!((tracking_stepsize(3, 0.5) - 0.5).abs() < 1e-15);
        assert!((tracking_stepsize(99, 0.5) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn feature_norm_is_enforced() {
        assert!(FeatureMap::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0])).is_err());
        let phi = FeatureMap::new(DMatrix::from_row_slice(2, 2, &[0.6, 0.8, 0.0, 0.5])).unwrap();
        assert_eq!(phi.dim(), 2);
        let one_hot = FeatureMap::one_hot(3);
        assert_eq!(one_hot.phi(1).as_slice(), &[0.0, 1.0, 0.0]);
        let omega = DVector::from_vec(vec![4.0, 5.0, 6.0]);
        assert_eq!(one_hot.value(1, &omega), 5.0);
    }
}
