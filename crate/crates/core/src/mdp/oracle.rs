//! Exact gradient-side quantities: policy gradient, Fisher information,
//! natural-gradient direction, transferred approximation error and the
//! performance-difference identity.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{analysis, DifferentialValues, SoftmaxPolicy, TabularMdp};
use crate::error::{Error, Result};

/// Relative cutoff on eigenvalues kept by [`pseudo_inverse`].
const PINV_CUTOFF: f64 = 1e-10;

/// Policy gradient `sum_s d(s) sum_a pi(a|s) A(s,a) score(s,a)`.
pub fn exact_policy_gradient(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<DVector<f64>> {
    let dv = analysis::differential_values(mdp, policy)?;
    let mut grad = DVector::zeros(policy.n_params());
    let base_of = |s: usize| policy.param_index(s, 0);
    for s in 0..mdp.n_states() {
        let probs = policy.probs(s)?;
        for a in 0..mdp.n_actions() {
            let w = dv.stationary[s] * probs[a] * dv.advantage[(s, a)];
            for (b, g) in policy.score_row(s, a)?.into_iter().enumerate() {
                grad[base_of(s) + b] += w * g;
            }
        }
    }
    Ok(grad)
}

fn check_mask(policy: &SoftmaxPolicy, mask: &[bool]) -> Result<()> {
    if mask.len() != policy.n_params() {
        return Err(Error::Dimension {
            what: "parameter mask",
            expected: policy.n_params(),
            got: mask.len(),
        });
    }
    Ok(())
}

fn masked_score(policy: &SoftmaxPolicy, s: usize, a: usize, mask: &[bool]) -> Result<DVector<f64>> {
    let mut g = policy.score(s, a)?;
    for (x, keep) in g.iter_mut().zip(mask) {
        if !keep {
            *x = 0.0;
        }
    }
    Ok(g)
}

fn fisher_and_target(
    policy: &SoftmaxPolicy,
    dv: &DifferentialValues,
    mask: &[bool],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let dim = policy.n_params();
    let mut fisher = DMatrix::zeros(dim, dim);
    let mut target = DVector::zeros(dim);
    for s in 0..policy.n_states() {
        let probs = policy.probs(s)?;
        for (a, p) in probs.iter().enumerate() {
            let w = dv.stationary[s] * p;
            let g = masked_score(policy, s, a, mask)?;
            fisher.ger(w, &g, &g, 1.0);
            target.axpy(w * dv.advantage[(s, a)], &g, 1.0);
        }
    }
    Ok((fisher, target))
}

/// Fisher information `sum_s d(s) sum_a pi(a|s) score score^T`.
pub fn fisher_matrix(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<DMatrix<f64>> {
    let dv = analysis::differential_values(mdp, policy)?;
    let mask = vec![true; policy.n_params()];
    Ok(fisher_and_target(policy, &dv, &mask)?.0)
}

/// Moore-Penrose pseudoinverse of a symmetric matrix via eigendecomposition,
/// discarding eigenvalues below `1e-10 * max |lambda|`.
pub fn pseudo_inverse(sym: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(sym.clone());
    let top = eig.eigenvalues.amax();
    let cutoff = PINV_CUTOFF * top;
    let inv = eig
        .eigenvalues
        .map(|l| if l.abs() > cutoff && top > 0.0 { 1.0 / l } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Smallest eigenvalue above the pseudoinverse cutoff.
///
/// The softmax Fisher is singular along per-state shift directions, so this
/// stands in for a strictly positive lower eigenvalue bound.
pub fn smallest_nonzero_eigenvalue(sym: &DMatrix<f64>) -> Option<f64> {
    let eig = SymmetricEigen::new(sym.clone());
    let cutoff = PINV_CUTOFF * eig.eigenvalues.amax();
    eig.eigenvalues
        .iter()
        .copied()
        .filter(|l| *l > cutoff)
        .reduce(f64::min)
}

/// Natural-gradient direction `F^+ E[score * A]`.
pub fn npg_direction(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<DVector<f64>> {
    npg_direction_masked(mdp, policy, &vec![true; policy.n_params()])
}

/// As [`npg_direction`], with the parameterization restricted to the
/// coordinates where `mask` is true (frozen coordinates get zero score).
pub fn npg_direction_masked(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    mask: &[bool],
) -> Result<DVector<f64>> {
    check_mask(policy, mask)?;
    let dv = analysis::differential_values(mdp, policy)?;
    let (fisher, target) = fisher_and_target(policy, &dv, mask)?;
    Ok(pseudo_inverse(&fisher) * target)
}

/// Compatible-function-approximation objective
/// `E_{s~d, a~pi}[(score(s,a) . h - A(s,a))^2]` under the policy's own chain.
pub fn npg_objective(mdp: &TabularMdp, policy: &SoftmaxPolicy, h: &DVector<f64>) -> Result<f64> {
    let dv = analysis::differential_values(mdp, policy)?;
    squared_error(policy, &dv, policy, &dv.stationary, h, &vec![true; policy.n_params()])
}

fn squared_error(
    policy: &SoftmaxPolicy,
    dv: &DifferentialValues,
    weighting: &SoftmaxPolicy,
    weighting_d: &DVector<f64>,
    h: &DVector<f64>,
    mask: &[bool],
) -> Result<f64> {
    let mut total = 0.0;
    for s in 0..policy.n_states() {
        let probs = weighting.probs(s)?;
        for (a, p) in probs.iter().enumerate() {
            let err = masked_score(policy, s, a, mask)?.dot(h) - dv.advantage[(s, a)];
            total += weighting_d[s] * p * err * err;
        }
    }
    Ok(total)
}

/// Transferred approximation error of `policy` evaluated under the state and
/// action distribution of `reference`.
pub fn transfer_error(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    reference: &SoftmaxPolicy,
) -> Result<f64> {
    transfer_error_masked(mdp, policy, reference, &vec![true; policy.n_params()])
}

pub fn transfer_error_masked(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    reference: &SoftmaxPolicy,
    mask: &[bool],
) -> Result<f64> {
    check_mask(policy, mask)?;
    let dv = analysis::differential_values(mdp, policy)?;
    let (fisher, target) = fisher_and_target(policy, &dv, mask)?;
    let h = pseudo_inverse(&fisher) * target;
    let d_ref = analysis::stationary_distribution(mdp, reference)?;
    squared_error(policy, &dv, reference, &d_ref, &h, mask)
}

/// Both sides of the performance-difference identity:
/// `J(a) - J(b)` and `sum_s d_a(s) sum_x pi_a(x|s) A_b(s,x)`.
pub fn performance_difference(
    mdp: &TabularMdp,
    policy_a: &SoftmaxPolicy,
    policy_b: &SoftmaxPolicy,
) -> Result<(f64, f64)> {
    let dv_a = analysis::differential_values(mdp, policy_a)?;
    let dv_b = analysis::differential_values(mdp, policy_b)?;
    let lhs = dv_a.avg_reward - dv_b.avg_reward;
    let mut rhs = 0.0;
    for s in 0..mdp.n_states() {
        let probs = policy_a.probs(s)?;
        let inner: f64 = probs
            .iter()
            .enumerate()
            .map(|(x, p)| p * dv_b.advantage[(s, x)])
            .sum();
        rhs += dv_a.stationary[s] * inner;
    }
    Ok((lhs, rhs))
}
