//! Reference implementations used to check the library. They share no code
//! with it: plain `Vec` arithmetic, matrix powers instead of linear solves.

#![allow(dead_code)]

use avgpg::{SoftmaxPolicy, TabularMdp};
use nalgebra::DMatrix;
use rand::Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let m = b[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for k in 0..b.len() {
            let aik = a[i][k];
            for j in 0..m {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// Random MDP with strictly positive transition rows and rewards in [0, 1].
pub fn random_mdp<R: Rng>(rng: &mut R, n_s: usize, n_a: usize) -> TabularMdp {
    let transition = (0..n_s)
        .map(|_| {
            (0..n_a)
                .map(|_| {
                    let raw: Vec<f64> = (0..n_s).map(|_| rng.random_range(0.05..1.0)).collect();
                    let total: f64 = raw.iter().sum();
                    raw.into_iter().map(|x| x / total).collect()
                })
                .collect()
        })
        .collect();
    let reward = (0..n_s)
        .map(|_| (0..n_a).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    TabularMdp::new(transition, reward, vec![1.0 / n_s as f64; n_s], 1.0).unwrap()
}

pub fn random_theta<R: Rng>(rng: &mut R, n_s: usize, n_a: usize, scale: f64) -> Mat {
    (0..n_s)
        .map(|_| (0..n_a).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

pub fn policy_of(theta: &Mat) -> SoftmaxPolicy {
    let n_s = theta.len();
    let n_a = theta[0].len();
    SoftmaxPolicy::new(DMatrix::from_fn(n_s, n_a, |s, a| theta[s][a]))
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Induced chain and reward vector.
pub fn chain(mdp: &TabularMdp, theta: &Mat) -> (Mat, Vec<f64>) {
    let n = mdp.n_states();
    let mut p = vec![vec![0.0; n]; n];
    let mut r = vec![0.0; n];
    for s in 0..n {
        let pi = softmax(&theta[s]);
        for (a, w) in pi.iter().enumerate() {
            r[s] += w * mdp.reward(s, a);
            for (s2, q) in mdp.row(s, a).iter().enumerate() {
                p[s][s2] += w * q;
            }
        }
    }
    (p, r)
}

/// Stationary distribution by repeated squaring of the chain.
pub fn stationary(p: &Mat) -> Vec<f64> {
    let mut m = p.clone();
    for _ in 0..60 {
        m = matmul(&m, &m);
        for row in &mut m {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        }
    }
    let n = p.len();
    (0..n).map(|j| (0..n).map(|i| m[i][j]).sum::<f64>() / n as f64).collect()
}

pub fn avg_reward(mdp: &TabularMdp, theta: &Mat) -> f64 {
    let (p, r) = chain(mdp, theta);
    stationary(&p).iter().zip(&r).map(|(d, r)| d * r).sum()
}

/// `V = sum_t (P^t r - J)`, summed until the terms vanish; this is the
/// solution with `sum_s d(s) V(s) = 0`.
pub fn differential_v(mdp: &TabularMdp, theta: &Mat) -> (Vec<f64>, f64) {
    let (p, r) = chain(mdp, theta);
    let d = stationary(&p);
    let j: f64 = d.iter().zip(&r).map(|(d, r)| d * r).sum();
    let n = r.len();
    let mut v = vec![0.0; n];
    let mut term = r.clone();
    for _ in 0..100_000 {
        let mut biggest: f64 = 0.0;
        for s in 0..n {
            v[s] += term[s] - j;
            biggest = biggest.max((term[s] - j).abs());
        }
        if biggest < 1e-13 {
            break;
        }
        term = (0..n).map(|s| (0..n).map(|k| p[s][k] * term[k]).sum()).collect();
    }
    (v, j)
}

/// `max_s 1/2 ||P^t(s, .) - d||_1` for `t = 0..=t_max`.
pub fn tv_curve(p: &Mat, t_max: usize) -> Vec<f64> {
    let n = p.len();
    let d = stationary(p);
    let mut power: Mat = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut out = Vec::with_capacity(t_max + 1);
    for _ in 0..=t_max {
        let worst = power
            .iter()
            .map(|row| 0.5 * row.iter().zip(&d).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        out.push(worst);
        power = matmul(&power, p);
    }
    out
}

/// First `t >= 1` with `m(t) <= eps`, by brute force.
pub fn brute_mixing_time(p: &Mat, eps: f64, t_max: usize) -> Option<usize> {
    tv_curve(p, t_max).iter().skip(1).position(|&m| m <= eps).map(|i| i + 1)
}

/// `sum_t a_t / sqrt(sum_{k <= t} a_k)`, skipping leading zeros.
pub fn adagrad_ratio_sum(seq: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut total = 0.0;
    for &a in seq {
        acc += a;
        if acc > 0.0 {
            total += a / acc.sqrt();
        }
    }
    total
}

/// Fast-mixing 3-state, 2-action MDP used by the sampling checks.
pub fn three_state_mdp() -> TabularMdp {
    TabularMdp::new(
        vec![
            vec![vec![0.5, 0.3, 0.2], vec![0.2, 0.5, 0.3]],
            vec![vec![0.3, 0.4, 0.3], vec![0.4, 0.2, 0.4]],
            vec![vec![0.3, 0.3, 0.4], vec![0.5, 0.25, 0.25]],
        ],
        vec![vec![1.0, 0.2], vec![0.0, 0.6], vec![0.4, 0.9]],
        vec![1.0, 0.0, 0.0],
        1.0,
    )
    .unwrap()
}
