//! Kernel-smoothed model-based reinforcement learning on continuous
//! state spaces.
//!
//! The crate provides:
//!
//! * [`metric`] — points, the product metric on state-action pairs,
//!   Lipschitz constants of the optimal value functions, the
//!   environment interface and episode rollouts.
//! * [`kernel`] — Nadaraya-Watson machinery: Gaussian kernel weights,
//!   generalized counts, transition-expectation/variance estimators and
//!   the representative-point transition buffer.
//! * [`concentration`] — an empirical Bernstein inequality for
//!   martingale difference sequences plus a Monte Carlo harness that
//!   certifies its coverage level.
//! * [`bonus`] — the theory-constant family and the Bernstein /
//!   Hoeffding exploration bonuses derived from it.
//! * [`agent`] — optimistic backward induction over kernel estimates,
//!   Lipschitz interpolation of Q values, and the three agents
//!   (`kbvi-bucb`, `kernel-ucbvi`, `kernel-vi`) behind one interface.
//! * [`envs`] — the Puddle World family and a small deterministic grid
//!   environment with an exact dynamic-programming oracle.
//! * [`harness`] — multi-seed experiment runner, flat config files,
//!   CSV emission and aggregation.
//! * [`cli`] — the `kbvi` command-line entry point.

pub mod agent;
pub mod bonus;
pub mod cli;
pub mod concentration;
pub mod envs;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod metric;
pub mod rng;

pub use error::{Error, Result};
