//! Fast oracle property checks run by `avgpg selftest`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::random_ergodic_mdp;
use crate::error::Result;
use crate::mdp::{
    average_reward, exact_policy_gradient, mixing_time_of_chain,
    performance_difference, transfer_error, SoftmaxPolicy, TabularMdp,
};
use crate::ppgae::min_feasible_h;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_instance<R: Rng>(rng: &mut R) -> Result<(TabularMdp, SoftmaxPolicy)> {
    let n_s = rng.random_range(2..=6);
    let n_a = rng.random_range(2..=4);
    let mdp = random_ergodic_mdp(n_s, n_a, rng, 1.0)?;
    Ok((mdp, random_policy(n_s, n_a, rng)))
}

fn random_policy<R: Rng>(n_s: usize, n_a: usize, rng: &mut R) -> SoftmaxPolicy {
    SoftmaxPolicy::new(DMatrix::from_fn(n_s, n_a, |_, _| rng.random_range(-2.0..2.0)))
}

fn gradient_vs_finite_differences(rng: &mut ChaCha8Rng) -> Result<Check> {
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (mdp, pi) = random_instance(rng)?;
        let exact = exact_policy_gradient(&mdp, &pi)?;
        let theta = pi.flat();
        let mut fd = DVector::zeros(theta.len());
        for k in 0..theta.len() {
            let mut e = DVector::zeros(theta.len());
            e[k] = step;
            let plus = SoftmaxPolicy::from_flat(pi.n_states(), pi.n_actions(), &(&theta + &e))?;
            let minus = SoftmaxPolicy::from_flat(pi.n_states(), pi.n_actions(), &(&theta - &e))?;
            fd[k] = (average_reward(&mdp, &plus)? - average_reward(&mdp, &minus)?) / (2.0 * step);
        }
        worst = worst.max((&exact - &fd).norm() / fd.norm().max(1e-12));
    }
    Ok(Check {
        name: "exact gradient matches central differences",
        passed: worst < 1e-5,
        detail: format!("worst relative error {worst:.3e}"),
    })
}

fn performance_difference_identity(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (mdp, a) = random_instance(rng)?;
        let b = random_policy(mdp.n_states(), mdp.n_actions(), rng);
        let (lhs, rhs) = performance_difference(&mdp, &a, &b)?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(Check {
        name: "performance difference identity",
        passed: worst < 1e-9,
        detail: format!("worst gap {worst:.3e}"),
    })
}

fn softmax_transfer_error(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (mdp, pi) = random_instance(rng)?;
        let reference = random_policy(mdp.n_states(), mdp.n_actions(), rng);
        worst = worst.max(transfer_error(&mdp, &pi, &reference)?);
    }
    Ok(Check {
        name: "softmax transfer error vanishes",
        passed: worst < 1e-6,
        detail: format!("worst error {worst:.3e}"),
    })
}

fn mixing_times() -> Result<Check> {
    let uniform = DMatrix::from_element(3, 3, 1.0 / 3.0);
    let tau_uniform = mixing_time_of_chain(&uniform, 0.25)?.tau;
    let p = 0.05;
    let flip = DMatrix::from_row_slice(2, 2, &[1.0 - p, p, p, 1.0 - p]);
    let mix = mixing_time_of_chain(&flip, 0.25)?;
    let monotone = mix.tv_curve.windows(2).all(|w| w[1] <= w[0] + 1e-15);
    Ok(Check {
        name: "mixing times of reference chains",
        passed: tau_uniform == 1 && mix.tau == 7 && monotone,
        detail: format!("uniform rows {tau_uniform}, two-state p=0.05 {}", mix.tau),
    })
}

fn adagrad_sum(rng: &mut ChaCha8Rng) -> Check {
    let bound_holds = |seq: &[f64]| {
        let mut acc = 0.0;
        let mut lhs = 0.0;
        for &a in seq {
            acc += a;
            if acc > 0.0 {
                lhs += a / acc.sqrt();
            }
        }
        lhs <= 2.0 * acc.sqrt() + 1e-12
    };
    let mut ok = bound_holds(&[1.0, 1.0, 1.0]);
    for _ in 0..1000 {
        let len = rng.random_range(1..=100);
        let seq: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..10.0)).collect();
        ok &= bound_holds(&seq);
    }
    Check {
        name: "AdaGrad ratio-sum inequality",
        passed: ok,
        detail: "1000 random sequences".into(),
    }
}

fn feasibility() -> Result<Check> {
    let (_, h) = min_feasible_h(1.0, 10.0)?;
    Ok(Check {
        name: "minimum feasible epoch length",
        passed: (6.0e9..=7.0e9).contains(&h),
        detail: format!("H_min(tau_mix=1, tau_hit=10) = {h:.4e}"),
    })
}

/// Runs every check; an error inside a check is reported as a failure.
pub fn run_selftest(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wrap = |name: &'static str, r: Result<Check>| {
        r.unwrap_or_else(|e| Check { name, passed: false, detail: e.to_string() })
    };
    vec![
        wrap("exact gradient", gradient_vs_finite_differences(&mut rng)),
        wrap("performance difference", performance_difference_identity(&mut rng)),
        wrap("transfer error", softmax_transfer_error(&mut rng)),
        wrap("mixing times", mixing_times()),
        adagrad_sum(&mut rng),
        wrap("feasibility", feasibility()),
    ]
}
