//! Deep attention recurrent Q-networks on small pixel environments.
//!
//! The crate carries its own reverse-mode autodiff ([`numerics`]), two
//! deterministic environments ([`envs`]), DQN/DRQN/DARQN models ([`agent`]),
//! the replay-based learner ([`training`]), evaluation and attention
//! rendering ([`evalviz`]) and the `darqn` command-line front end ([`cli`]).

pub mod agent;
pub mod cli;
pub mod envs;
pub mod evalviz;
pub mod numerics;
pub mod parallel;
pub mod training;
