//! Epoch-based policy gradient with sub-trajectory advantage estimation, plus
//! the epoch-length formula that makes it impractical.

use std::collections::HashMap;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::estimators::{rollout, Trajectory};
use crate::harness::record::RunRecord;
use crate::mac::{oracle_reward, Budget, RunLog};
use crate::mdp::SoftmaxPolicy;

/// Floor on `pi(a|s)` in the importance weight of the Q estimate.
pub const PROB_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theoretical {
    Theoretical,
}

/// An explicit length, or `"theoretical"` to derive it from the mixing and
/// hitting time hints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LengthSpec {
    Fixed(u64),
    Derived(Theoretical),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpgaeConfig {
    /// Total sample budget `T`.
    pub total_budget: u64,
    pub epoch_len: LengthSpec,
    pub adv_window: LengthSpec,
    pub alpha: f64,
    pub tau_mix_hint: f64,
    pub tau_hit_hint: f64,
    pub seed: u64,
}

impl Default for PpgaeConfig {
    fn default() -> Self {
        Self {
            total_budget: 7_500,
            epoch_len: LengthSpec::Fixed(25),
            adv_window: LengthSpec::Fixed(1),
            alpha: 0.1,
            tau_mix_hint: 1.0,
            tau_hit_hint: 10.0,
            seed: 0,
        }
    }
}

/// Resolved epoch structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpochPlan {
    pub epoch_len: usize,
    pub epochs: u64,
    pub adv_window: usize,
}

impl PpgaeConfig {
    pub fn plan(&self) -> Result<EpochPlan> {
        let t = self.total_budget;
        let epoch_len = match self.epoch_len {
            LengthSpec::Fixed(h) => h,
            LengthSpec::Derived(_) => {
                if t < 2 {
                    return Err(Error::Config("theoretical H needs T >= 2".into()));
                }
                let h = theoretical_epoch_length(t as f64, self.tau_mix_hint, self.tau_hit_hint);
                if !h.is_finite() || h > u64::MAX as f64 {
                    return Err(Error::Config(format!("theoretical H = {h:e} is not representable")));
                }
                h.ceil() as u64
            }
        };
        let adv_window = match self.adv_window {
            LengthSpec::Fixed(n) => n,
            LengthSpec::Derived(_) => theoretical_adv_window(t, self.tau_mix_hint),
        };
        if epoch_len == 0 || adv_window == 0 {
            return Err(Error::Config("H and N must be at least 1".into()));
        }
        let epochs = t / epoch_len;
        if epochs < 1 {
            return Err(Error::Config(format!(
                "K = floor(T / H) = floor({t} / {epoch_len}) < 1: budget too small for one epoch"
            )));
        }
        Ok(EpochPlan {
            epoch_len: epoch_len as usize,
            epochs,
            adv_window: adv_window as usize,
        })
    }
}

/// `H = 16 tau_hit tau_mix sqrt(T) (ln T)^2`.
pub fn theoretical_epoch_length(t: f64, tau_mix: f64, tau_hit: f64) -> f64 {
    let ln_t = t.ln();
    16.0 * tau_hit * tau_mix * t.sqrt() * ln_t * ln_t
}

/// `N = ceil(4 tau_mix log2 T)`.
pub fn theoretical_adv_window(t: u64, tau_mix: f64) -> u64 {
    (4.0 * tau_mix * (t.max(2) as f64).log2()).ceil() as u64
}

/// Smallest budget `T` (and the matching `H = T`) at which a single epoch
/// fits, i.e. the larger root of `sqrt(T) / (ln T)^2 = 16 tau_hit tau_mix`.
pub fn min_feasible_h(tau_mix: f64, tau_hit: f64) -> Result<(f64, f64)> {
    if !(tau_mix > 0.0 && tau_hit > 0.0) {
        return Err(Error::Numerical("mixing and hitting times must be positive".into()));
    }
    let target = 16.0 * tau_hit * tau_mix;
    // in x = ln T the ratio is e^(x/2) / x^2, increasing for x > 4
    let ratio = |x: f64| (x / 2.0).exp() / (x * x);
    let mut lo = 4.0;
    if ratio(lo) >= target {
        return Err(Error::Numerical(format!(
            "target {target} is below the ratio's minimum; root is not bracketed"
        )));
    }
    let mut hi = 8.0;
    while ratio(hi) < target {
        hi *= 2.0;
        if hi > 1400.0 {
            return Err(Error::Numerical("root lies beyond f64 range".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi {
            break;
        }
    }
    let t = (0.5 * (lo + hi)).exp();
    Ok((t, t))
}

/// Sub-trajectory advantage estimate for `(s, a)`.
///
/// Scans the trajectory: at each visit to `s` with a full window ahead it
/// records the sum of the next `window` rewards and jumps `2 * window` steps.
/// Returns `Q_hat - V_hat`, or zero when `s` is never recorded.
pub fn estimate_advantage(
    traj: &Trajectory,
    s: usize,
    a: usize,
    policy: &SoftmaxPolicy,
    window: usize,
) -> Result<f64> {
    let pi = policy.prob(s, a)?.max(PROB_FLOOR);
    let (v_hat, q_sum) = visit_sums(traj, s, a, window);
    Ok(match v_hat {
        Some((count, y_total)) => (q_sum / count as f64) / pi - y_total / count as f64,
        None => 0.0,
    })
}

/// Returns `(visits, sum of y)` and the sum of `y` over visits taking `a`.
fn visit_sums(traj: &Trajectory, s: usize, a: usize, window: usize) -> (Option<(usize, f64)>, f64) {
    let steps = &traj.transitions;
    if window == 0 || steps.len() <= window {
        return (None, 0.0);
    }
    let last = steps.len() - 1;
    let mut tau = 0usize;
    let mut count = 0usize;
    let mut y_total = 0.0;
    let mut q_sum = 0.0;
    while tau + window <= last {
        if steps[tau].s == s {
            let y: f64 = steps[tau..tau + window].iter().map(|t| t.r).sum();
            count += 1;
            y_total += y;
            if steps[tau].a == a {
                q_sum += y;
            }
            tau += 2 * window;
        } else {
            tau += 1;
        }
    }
    ((count > 0).then_some((count, y_total)), q_sum)
}

/// Epoch gradient `(1/H) sum_t A_hat(s_t, a_t) score(s_t, a_t)`.
pub fn epoch_gradient(traj: &Trajectory, policy: &SoftmaxPolicy, window: usize) -> Result<DVector<f64>> {
    let mut cache: HashMap<(usize, usize), f64> = HashMap::new();
    let mut grad = DVector::zeros(policy.n_params());
    for tr in &traj.transitions {
        let adv = match cache.get(&(tr.s, tr.a)) {
            Some(v) => *v,
            None => {
                let v = estimate_advantage(traj, tr.s, tr.a, policy, window)?;
                cache.insert((tr.s, tr.a), v);
                v
            }
        };
        if adv != 0.0 {
            grad.axpy(adv, &policy.score(tr.s, tr.a)?, 1.0);
        }
    }
    if !traj.is_empty() {
        grad /= traj.len() as f64;
    }
    Ok(grad)
}

#[derive(Clone, Debug)]
pub struct PpgaeRun {
    pub records: Vec<RunRecord>,
    pub policy: SoftmaxPolicy,
    pub epochs: u64,
    pub env_steps: u64,
    pub plan: EpochPlan,
}

/// Runs PPGAE from the uniform policy. Stops after `K = floor(T / H)` epochs,
/// or earlier once an episode budget is met.
pub fn train_ppgae<E: Environment>(
    env: &mut E,
    config: &PpgaeConfig,
    budget: Budget,
    trial: usize,
) -> Result<PpgaeRun> {
    let plan = config.plan()?;
    let max_epochs = match budget {
        Budget::Updates(n) => n.min(plan.epochs),
        Budget::Episodes(_) => plan.epochs,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut s = env.reset(&mut rng);
    let mut policy = SoftmaxPolicy::uniform(env.n_states(), env.n_actions());
    let mut log = RunLog::new(env, budget, trial)?;
    let mut epochs = 0;
    let eta = 0.0;

    while epochs < max_epochs && !log.episodes_done() {
        let traj = rollout(env, &policy, s, plan.epoch_len, &mut rng);
        s = traj.last_state().unwrap_or(s);
        let grad = epoch_gradient(&traj, &policy, plan.adv_window)?;
        policy.ascend(config.alpha, &grad);
        epochs += 1;
        let exact = oracle_reward(env, &policy);
        // PPGAE keeps no reward tracker; log the epoch's empirical mean reward
        let mean_r = traj.transitions.iter().map(|t| t.r).sum::<f64>() / traj.len() as f64;
        if log.is_episodic() {
            log.consume(&traj, mean_r, exact);
        } else {
            log.consume(&traj, eta, None);
            log.evaluation((epochs - 1) as usize, mean_r, exact);
        }
    }

    Ok(PpgaeRun {
        records: log.records,
        policy,
        epochs,
        env_steps: log.cumulative_steps,
        plan,
    })
}
