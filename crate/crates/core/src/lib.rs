//! Regularized stochastic optimization with dual averaging, momentum and
//! exact proximal steps.
//!
//! The crate is organised bottom-up:
//!
//! * [`params`] and [`schedule`]: parameter containers, group partitions,
//!   learning-rate / momentum schedules and the step-size condition checker.
//! * [`regularizers`]: exact values and proximal maps for ℓ1, group LASSO,
//!   group MCP, their sparse combinations, and box indicators.
//! * [`optimizers`]: RMDA (with restarts), classical RDA, proximal momentum
//!   SGD and plain momentum SGD.
//! * [`models`]: hand-differentiated logistic regression, MLP and a one-layer
//!   convolutional network.
//! * [`data`]: synthetic structured-sparse tasks, IDX (MNIST) files and
//!   seeded minibatch sampling.
//! * [`metrics`]: group sparsity, pattern matching, accuracy and the
//!   variance-reduction diagnostic.
//! * [`harness`]: configuration, the training loop, log files and run
//!   comparison. The `rmda` binary is a thin CLI over it.

pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod optimizers;
pub mod params;
pub mod regularizers;
pub mod schedule;

pub use error::{Error, ErrorCategory, Result};
pub use params::{GroupPartition, LayerSlot, Layout, ParamVector};
pub use regularizers::Regularizer;
pub use schedule::Schedule;
