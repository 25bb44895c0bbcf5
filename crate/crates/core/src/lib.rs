//! Stochastic gradient descent under non-stationary gradient noise.
//!
//! The crate is organised bottom-up:
//!
//! * [`schedule`]: deterministic noise-level sequences and their statistics;
//! * [`problem`]: objectives with known optima;
//! * [`oracle`]: unbiased stochastic gradients whose noise follows a schedule;
//! * [`estimator`]: online estimates of the noise level;
//! * [`policy`]: constant, idealized and adaptive stepsize rules;
//! * [`runner`]: the SGD loop and its recorded trajectory;
//! * [`analysis`]: bound evaluation, regime classification and rate fitting.

pub mod analysis;
pub mod estimator;
pub mod oracle;
pub mod policy;
pub mod problem;
pub mod runner;
pub mod schedule;
pub mod vector;

pub use estimator::{EstimatorKind, EstimatorState};
pub use oracle::{GaussianOracle, NoiseMode, StochasticOracle};
pub use policy::{Policy, PolicyKind};
pub use problem::Problem;
pub use runner::{RunOptions, RunRecord, RunStatus};
pub use schedule::NoiseSchedule;
