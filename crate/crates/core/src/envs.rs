//! Environments the learners interact with: the sparse 5x5 gridworld run as a
//! continuing chain, random ergodic MDPs for property tests, and feature maps.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{FeatureMap, Transition};
use crate::mdp::TabularMdp;

/// Moving-average window over episodes.
pub const SUCCESS_WINDOW: usize = 20;

/// Reward and next state produced by one environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub next_state: usize,
}

/// How a continuing stream is cut into episodes for bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeRule {
    pub step_limit: usize,
    /// A transition whose reward reaches this value ends a successful episode.
    pub success_reward: f64,
}

/// A continuing environment. `step` is handed the state the learner believes
/// it is in; environments with hidden bookkeeping (step counters) keep it
/// internally.
pub trait Environment {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn r_max(&self) -> f64;
    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize;
    fn step<R: Rng + ?Sized>(&mut self, s: usize, a: usize, rng: &mut R) -> StepOutcome;

    fn episode_rule(&self) -> Option<EpisodeRule> {
        None
    }

    /// Exact model for oracle evaluation, if one is available.
    fn tabular(&self) -> Option<&TabularMdp> {
        None
    }
}

impl Environment for TabularMdp {
    fn n_states(&self) -> usize {
        TabularMdp::n_states(self)
    }

    fn n_actions(&self) -> usize {
        TabularMdp::n_actions(self)
    }

    fn r_max(&self) -> f64 {
        TabularMdp::r_max(self)
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        self.sample_initial(rng)
    }

    fn step<R: Rng + ?Sized>(&mut self, s: usize, a: usize, rng: &mut R) -> StepOutcome {
        StepOutcome {
            reward: self.reward(s, a),
            next_state: self.sample_next(s, a, rng),
        }
    }

    fn tabular(&self) -> Option<&TabularMdp> {
        Some(self)
    }
}

/// Layout of the sparse gridworld. Cells are indexed `row * width + col`;
/// the start is the top-left corner and the goal the bottom-right one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub step_limit: usize,
    pub goal_reward: f64,
    pub step_reward: f64,
    /// Probability that the chosen move is replaced by a uniformly random one.
    pub slip_prob: f64,
}

impl Default for GridworldSpec {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            step_limit: 25,
            goal_reward: 1.0,
            step_reward: 0.0,
            slip_prob: 0.0,
        }
    }
}

/// Moves in action order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];
}

impl GridworldSpec {
    /// Spec used by exact-analysis utilities; a little slip keeps every
    /// policy's chain ergodic.
    pub fn analysis() -> Self {
        Self {
            slip_prob: 0.01,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.width * self.height < 2 {
            return Err(Error::Config("gridworld needs at least two cells".into()));
        }
        if self.step_limit == 0 {
            return Err(Error::Config("step_limit must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.slip_prob) {
            return Err(Error::Config(format!(
                "slip_prob must lie in [0, 0.5), got {}",
                self.slip_prob
            )));
        }
        if !(self.step_reward >= 0.0 && self.goal_reward > self.step_reward) {
            return Err(Error::Config(
                "rewards must satisfy 0 <= step_reward < goal_reward".into(),
            ));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn goal(&self) -> usize {
        self.n_cells() - 1
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Deterministic move; bumping into a wall leaves the agent in place.
    pub fn apply(&self, s: usize, mv: Move) -> usize {
        let (row, col) = (s / self.width, s % self.width);
        match mv {
            Move::Up if row > 0 => s - self.width,
            Move::Down if row + 1 < self.height => s + self.width,
            Move::Left if col > 0 => s - 1,
            Move::Right if col + 1 < self.width => s + 1,
            _ => s,
        }
    }

    /// Distribution over landing cells for action `a` from `s`, including slip.
    fn landing(&self, s: usize, a: usize) -> Vec<(usize, f64)> {
        let mut out = vec![(self.apply(s, Move::ALL[a]), 1.0 - self.slip_prob)];
        if self.slip_prob > 0.0 {
            for mv in Move::ALL {
                out.push((self.apply(s, mv), self.slip_prob / 4.0));
            }
        }
        out
    }

    fn r_max(&self) -> f64 {
        self.goal_reward
    }
}

/// Tabular model of the gridworld for exact analysis.
///
/// Entering the goal pays `goal_reward` and lands in the goal cell, whose
/// every action returns to the start. The episode step limit is not part of
/// the state; it only exists in [`GridworldEnv`].
pub fn gridworld_as_mdp(spec: &GridworldSpec) -> Result<TabularMdp> {
    spec.validate()?;
    let n = spec.n_cells();
    let goal = spec.goal();
    let mut transition = vec![vec![vec![0.0; n]; 4]; n];
    let mut reward = vec![vec![spec.step_reward; 4]; n];
    for s in 0..n {
        for a in 0..4 {
            if s == goal {
                transition[s][a][spec.start()] = 1.0;
                continue;
            }
            let mut p_goal = 0.0;
            for (s2, p) in spec.landing(s, a) {
                transition[s][a][s2] += p;
                if s2 == goal {
                    p_goal += p;
                }
            }
            reward[s][a] = spec.step_reward + p_goal * (spec.goal_reward - spec.step_reward);
        }
    }
    let mut initial = vec![0.0; n];
    initial[spec.start()] = 1.0;
    TabularMdp::new(transition, reward, initial, spec.r_max())
}

/// Live gridworld. Reaching the goal or exhausting the step limit teleports
/// the agent back to the start on the same transition.
#[derive(Clone, Debug)]
pub struct GridworldEnv {
    spec: GridworldSpec,
    model: TabularMdp,
    steps_in_episode: usize,
}

impl GridworldEnv {
    pub fn new(spec: GridworldSpec) -> Result<Self> {
        let model = gridworld_as_mdp(&spec)?;
        Ok(Self {
            spec,
            model,
            steps_in_episode: 0,
        })
    }

    pub fn spec(&self) -> &GridworldSpec {
        &self.spec
    }
}

impl Environment for GridworldEnv {
    fn n_states(&self) -> usize {
        self.spec.n_cells()
    }

    fn n_actions(&self) -> usize {
        4
    }

    fn r_max(&self) -> f64 {
        self.spec.r_max()
    }

    fn reset<R: Rng + ?Sized>(&mut self, _rng: &mut R) -> usize {
        self.steps_in_episode = 0;
        self.spec.start()
    }

    fn step<R: Rng + ?Sized>(&mut self, s: usize, a: usize, rng: &mut R) -> StepOutcome {
        // one uniform draw for slip, only when slip is enabled
        let mv = if self.spec.slip_prob > 0.0 && rng.random::<f64>() < self.spec.slip_prob {
            Move::ALL[rng.random_range(0..4)]
        } else {
            Move::ALL[a]
        };
        let landed = self.spec.apply(s, mv);
        self.steps_in_episode += 1;
        if landed == self.spec.goal() {
            self.steps_in_episode = 0;
            StepOutcome {
                reward: self.spec.goal_reward,
                next_state: self.spec.start(),
            }
        } else if self.steps_in_episode >= self.spec.step_limit {
            self.steps_in_episode = 0;
            StepOutcome {
                reward: self.spec.step_reward,
                next_state: self.spec.start(),
            }
        } else {
            StepOutcome {
                reward: self.spec.step_reward,
                next_state: landed,
            }
        }
    }

    fn episode_rule(&self) -> Option<EpisodeRule> {
        Some(EpisodeRule {
            step_limit: self.spec.step_limit,
            success_reward: self.spec.goal_reward,
        })
    }

    fn tabular(&self) -> Option<&TabularMdp> {
        Some(&self.model)
    }
}

/// Random MDP whose transition rows are symmetric-Dirichlet draws (strictly
/// positive, hence ergodic under any interior policy) and whose rewards are
/// uniform on `[0, 1]`. An infinite `dirichlet_alpha` gives exactly uniform rows.
pub fn random_ergodic_mdp<R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    rng: &mut R,
    dirichlet_alpha: f64,
) -> Result<TabularMdp> {
    if n_states < 2 || n_actions == 0 {
        return Err(Error::Config("need at least 2 states and 1 action".into()));
    }
    if !(dirichlet_alpha > 0.0) {
        return Err(Error::Config("dirichlet_alpha must be positive".into()));
    }
    let gamma = if dirichlet_alpha.is_finite() {
        Some(Gamma::new(dirichlet_alpha, 1.0).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let mut transition = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        let mut per_action = Vec::with_capacity(n_actions);
        for _ in 0..n_actions {
            let raw: Vec<f64> = match &gamma {
                Some(g) => (0..n_states).map(|_| g.sample(rng).max(1e-12)).collect(),
                None => vec![1.0; n_states],
            };
            let total: f64 = raw.iter().sum();
            per_action.push(raw.into_iter().map(|x| x / total).collect());
        }
        transition.push(per_action);
    }
    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.random::<f64>()).collect())
        .collect();
    TabularMdp::new(
        transition,
        reward,
        vec![1.0 / n_states as f64; n_states],
        1.0,
    )
}

/// Tabular features: `phi(s)` is the `s`-th standard basis vector.
pub fn one_hot_features(n_states: usize) -> FeatureMap {
    FeatureMap::one_hot(n_states)
}

/// Outcome of one episode carved out of the continuing stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct EpisodeStats {
    pub episode_index: usize,
    pub success: bool,
    pub steps_used: usize,
}

/// Segments a transition stream into episodes: an episode ends on a
/// transition paying the success reward, or after `step_limit` transitions.
#[derive(Clone, Debug)]
pub struct EpisodeTracker {
    rule: EpisodeRule,
    window: usize,
    steps: usize,
    completed: usize,
    recent: VecDeque<bool>,
}

impl EpisodeTracker {
    pub fn new(rule: EpisodeRule, window: usize) -> Self {
        Self {
            rule,
            window: window.max(1),
            steps: 0,
            completed: 0,
            recent: VecDeque::new(),
        }
    }

    pub fn completed(&self) -> usize {
        self.completed
    }

    /// Feeds one transition; returns the episode it closes, if any.
    pub fn push(&mut self, transition: &Transition) -> Option<EpisodeStats> {
        self.steps += 1;
        let success = transition.r >= self.rule.success_reward;
        if !success && self.steps < self.rule.step_limit {
            return None;
        }
        let stats = EpisodeStats {
            episode_index: self.completed,
            success,
            steps_used: self.steps,
        };
        self.steps = 0;
        self.completed += 1;
        self.recent.push_back(success);
        if self.recent.len() > self.window {
            self.recent.pop_front();
        }
        Some(stats)
    }

    /// Success rate over the last `window` completed episodes.
    pub fn moving_average(&self) -> f64 {
        if self.recent.is_empty() {
            return 0.0;
        }
        self.recent.iter().filter(|s| **s).count() as f64 / self.recent.len() as f64
    }
}

/// Trailing moving average with a window that grows until it reaches `window`.
pub fn moving_average(successes: &[bool], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut hits = 0usize;
    (0..successes.len())
        .map(|i| {
            hits += usize::from(successes[i]);
            if i >= window {
                hits -= usize::from(successes[i - window]);
            }
            hits as f64 / (i + 1).min(window) as f64
        })
        .collect()
}
