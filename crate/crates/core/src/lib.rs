//! Average-reward policy gradient: a multi-level Monte Carlo actor-critic
//! with AdaGrad stepsizes, an epoch-based baseline, and exact tabular oracles
//! for checking both.

pub mod envs;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod mac;
pub mod mdp;
pub mod ppgae;

pub use error::{Error, Result};
pub use estimators::{FeatureMap, LearnerState, Trajectory, Transition};
pub use mac::{train_mac, Budget, MacConfig};
pub use mdp::{SoftmaxPolicy, TabularMdp};
pub use ppgae::{train_ppgae, PpgaeConfig};
