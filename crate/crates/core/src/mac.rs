//! Multi-level Monte Carlo actor-critic.
//!
//! Each update draws one geometric level, collects a single trajectory on the
//! live chain and forms MLMC estimates of the tracker, critic and actor
//! gradients from the same transitions. The actor uses an AdaGrad stepsize,
//! so no mixing-time knowledge enters the schedule.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Environment, EpisodeTracker, SUCCESS_WINDOW};
use crate::error::{Error, Result};
use crate::estimators::{
    adagrad_step, collect_level_trajectory, mlmc_from_samples, step_gradients,
    tracking_stepsize, FeatureMap, LearnerState, Trajectory,
};
use crate::harness::record::RunRecord;
use crate::mdp::average_reward;

/// Critic stepsize schedule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticStepsize {
    /// Same decaying schedule as the reward tracker, `(1 + t)^-nu`.
    #[default]
    Tracking,
    /// AdaGrad over critic-gradient norms, mirroring the actor.
    Adagrad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacConfig {
    pub t_max: u64,
    pub total_updates: u64,
    pub nu: f64,
    pub sigma: f64,
    /// Multiplier on the actor's AdaGrad stepsize numerator `(1 + t)^-sigma`.
    pub actor_scale: f64,
    /// Radius of the critic projection ball.
    pub r_omega: f64,
    pub seed: u64,
    pub eval_every: u64,
    pub critic_stepsize: CriticStepsize,
    /// Redraw the chain's start state from the initial distribution before
    /// every update instead of continuing the chain.
    pub resample_start: bool,
    /// Keep the policy fixed and only train the tracker and critic.
    pub freeze_actor: bool,
}

impl Default for MacConfig {
    fn default() -> Self {
        Self {
            t_max: 4,
            total_updates: 10_000,
            nu: 0.5,
            sigma: 0.75,
            actor_scale: 1.0,
            r_omega: 100.0,
            seed: 0,
            eval_every: 100,
            critic_stepsize: CriticStepsize::Tracking,
            resample_start: false,
            freeze_actor: false,
        }
    }
}

impl MacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max < 2 {
            return Err(Error::Config(format!("t_max must be at least 2, got {}", self.t_max)));
        }
        if !(0.0 < self.nu && self.nu < self.sigma && self.sigma < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < nu < sigma < 1, got nu = {}, sigma = {}",
                self.nu, self.sigma
            )));
        }
        if !(self.actor_scale > 0.0 && self.actor_scale.is_finite()) {
            return Err(Error::Config("actor_scale must be positive and finite".into()));
        }
        if !(self.r_omega > 0.0) {
            return Err(Error::Config("r_omega must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// What one update did.
#[derive(Clone, Debug)]
pub struct StepMetrics {
    pub level: u32,
    pub trajectory: Trajectory,
    pub f_mlmc: f64,
    pub g_norm_sq: f64,
    pub h_norm_sq: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mean_delta: f64,
    pub eta: f64,
}

fn project_ball(omega: &mut DVector<f64>, radius: f64) {
    let norm = omega.norm();
    if norm > radius {
        *omega *= radius / norm;
    }
}

/// One MAC iteration, in place.
///
/// RNG order: level draw, then for each step the action draw followed by the
/// environment's draws.
pub fn mac_update<E: Environment, R: Rng + ?Sized>(
    state: &mut LearnerState,
    env: &mut E,
    phi: &FeatureMap,
    config: &MacConfig,
    rng: &mut R,
) -> Result<StepMetrics> {
    if config.resample_start {
        state.current_state = env.reset(rng);
    }
    let trajectory =
        collect_level_trajectory(env, &state.policy, state.current_state, config.t_max, rng);
    let level = trajectory.level.unwrap_or(0);

    // gradients use the parameters frozen at the start of the iteration
    let grads = trajectory
        .transitions
        .iter()
        .map(|tr| step_gradients(tr, state, phi))
        .collect::<Result<Vec<_>>>()?;
    let f_samples: Vec<_> = grads.iter().map(|g| DVector::from_element(1, g.f)).collect();
    let g_samples: Vec<_> = grads.iter().map(|g| g.g.clone()).collect();
    let h_samples: Vec<_> = grads.iter().map(|g| g.h.clone()).collect();
    let f_mlmc = mlmc_from_samples(&f_samples, level, config.t_max)?[0];
    let g_mlmc = mlmc_from_samples(&g_samples, level, config.t_max)?;
    let h_mlmc = mlmc_from_samples(&h_samples, level, config.t_max)?;
    let mean_delta = grads.iter().map(|g| g.delta).sum::<f64>() / grads.len() as f64;

    let t = state.t;
    let gamma = tracking_stepsize(t, config.nu);
    let g_norm_sq = g_mlmc.norm_squared();
    let h_norm_sq = h_mlmc.norm_squared();
    let (critic_alpha, g_accum) = adagrad_step(state.g_norm_accum, g_norm_sq, t, config.sigma);
    let (alpha, h_accum) = adagrad_step(state.h_norm_accum, h_norm_sq, t, config.sigma);
    let alpha = alpha * config.actor_scale;
    let beta = match config.critic_stepsize {
        CriticStepsize::Tracking => gamma,
        CriticStepsize::Adagrad => critic_alpha,
    };

    state.eta = (state.eta - gamma * f_mlmc).clamp(0.0, env.r_max());
    state.omega.axpy(-beta, &g_mlmc, 1.0);
    project_ball(&mut state.omega, config.r_omega);
    if !config.freeze_actor {
        state.policy.ascend(alpha, &h_mlmc);
    }
    state.g_norm_accum = g_accum;
    state.h_norm_accum = h_accum;
    state.t += 1;
    if let Some(last) = trajectory.last_state() {
        state.current_state = last;
    }

    Ok(StepMetrics {
        level,
        trajectory,
        f_mlmc,
        g_norm_sq,
        h_norm_sq,
        alpha,
        beta,
        gamma,
        mean_delta,
        eta: state.eta,
    })
}

/// When a training run stops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Budget {
    /// Fixed number of updates (MAC) or epochs (PPGAE).
    Updates(u64),
    /// Stop once this many episodes have completed; episodic environments only.
    Episodes(usize),
}

/// Shared logging for the trainers: episode records for episodic
/// environments, periodic evaluation records otherwise.
pub(crate) struct RunLog {
    trial: usize,
    tracker: Option<EpisodeTracker>,
    episode_cap: Option<usize>,
    pub(crate) cumulative_steps: u64,
    pub(crate) records: Vec<RunRecord>,
}

impl RunLog {
    pub(crate) fn new<E: Environment>(env: &E, budget: Budget, trial: usize) -> Result<Self> {
        let tracker = env
            .episode_rule()
            .map(|rule| EpisodeTracker::new(rule, SUCCESS_WINDOW));
        let episode_cap = match budget {
            Budget::Episodes(_) if tracker.is_none() => {
                return Err(Error::Config(
                    "an episode budget needs an episodic environment".into(),
                ))
            }
            Budget::Episodes(n) => Some(n),
            Budget::Updates(_) => None,
        };
        Ok(Self {
            trial,
            tracker,
            episode_cap,
            cumulative_steps: 0,
            records: Vec::new(),
        })
    }

    pub(crate) fn is_episodic(&self) -> bool {
        self.tracker.is_some()
    }

    pub(crate) fn episodes_done(&self) -> bool {
        match (self.episode_cap, &self.tracker) {
            (Some(cap), Some(tracker)) => tracker.completed() >= cap,
            _ => false,
        }
    }

    /// Feeds a trajectory through the episode tracker, logging each
    /// completed episode with the given tracker value and exact reward.
    pub(crate) fn consume(&mut self, traj: &Trajectory, eta: f64, exact_j: Option<f64>) {
        for tr in &traj.transitions {
            self.cumulative_steps += 1;
            if self.episodes_done() {
                continue;
            }
            let Some(tracker) = self.tracker.as_mut() else {
                continue;
            };
            if let Some(ep) = tracker.push(tr) {
                self.records.push(RunRecord {
                    trial: self.trial,
                    episode: ep.episode_index,
                    success: ep.success,
                    moving_avg: tracker.moving_average(),
                    cumulative_steps: self.cumulative_steps,
                    eta,
                    exact_j,
                });
            }
        }
    }

    pub(crate) fn evaluation(&mut self, index: usize, eta: f64, exact_j: Option<f64>) {
        self.records.push(RunRecord {
            trial: self.trial,
            episode: index,
            success: false,
            moving_avg: 0.0,
            cumulative_steps: self.cumulative_steps,
            eta,
            exact_j,
        });
    }
}

pub(crate) fn oracle_reward<E: Environment>(
    env: &E,
    policy: &crate::mdp::SoftmaxPolicy,
) -> Option<f64> {
    env.tabular().and_then(|m| average_reward(m, policy).ok())
}

/// Result of a full training run.
#[derive(Clone, Debug)]
pub struct MacRun {
    pub records: Vec<RunRecord>,
    pub final_state: LearnerState,
    pub updates: u64,
    pub env_steps: u64,
    /// `||h^MLMC||^2` of every update, in order.
    pub h_norm_sq_log: Vec<f64>,
    /// Actor stepsize of every update, in order.
    pub alpha_log: Vec<f64>,
}

/// Runs MAC from the uniform policy until the budget is spent.
pub fn train_mac<E: Environment>(
    env: &mut E,
    phi: &FeatureMap,
    config: &MacConfig,
    budget: Budget,
    trial: usize,
) -> Result<MacRun> {
    config.validate()?;
    if phi.n_states() != env.n_states() {
        return Err(Error::Dimension {
            what: "feature map states",
            expected: env.n_states(),
            got: phi.n_states(),
        });
    }
    if config.resample_start && env.episode_rule().is_some() {
        return Err(Error::Config(
            "resample_start would desynchronize episode bookkeeping".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = env.reset(&mut rng);
    let mut state = LearnerState::new(env.n_states(), env.n_actions(), phi.dim(), start);
    let mut log = RunLog::new(env, budget, trial)?;
    let mut h_norm_sq_log = Vec::new();
    let mut alpha_log = Vec::new();

    loop {
        let done = match budget {
            Budget::Updates(n) => state.t >= n,
            Budget::Episodes(_) => log.episodes_done(),
        };
        if done {
            break;
        }
        let step = mac_update(&mut state, env, phi, config, &mut rng)?;
        h_norm_sq_log.push(step.h_norm_sq);
        alpha_log.push(step.alpha);
        if log.is_episodic() {
            let exact = oracle_reward(env, &state.policy);
            log.consume(&step.trajectory, state.eta, exact);
        } else {
            log.consume(&step.trajectory, state.eta, None);
            if state.t.is_multiple_of(config.eval_every) {
                let index = (state.t / config.eval_every - 1) as usize;
                let exact = oracle_reward(env, &state.policy);
                log.evaluation(index, state.eta, exact);
            }
        }
    }

    Ok(MacRun {
        records: log.records,
        updates: state.t,
        env_steps: log.cumulative_steps,
        final_state: state,
        h_norm_sq_log,
        alpha_log,
    })
}
