//! Fixtures shared by the benchmarks.

use avgpg::envs::random_ergodic_mdp;
use avgpg::{SoftmaxPolicy, TabularMdp};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random ergodic MDP and a random policy, reproducible from `seed`.
pub fn fixture(n_states: usize, n_actions: usize, seed: u64) -> (TabularMdp, SoftmaxPolicy) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mdp = random_ergodic_mdp(n_states, n_actions, &mut rng, 1.0).expect("valid sizes");
    let theta = DVector::from_fn(n_states * n_actions, |_, _| rng.random_range(-1.0..1.0));
    let policy = SoftmaxPolicy::from_flat(n_states, n_actions, &theta).expect("sizes match");
    (mdp, policy)
}
