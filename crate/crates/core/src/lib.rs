//! Gaussian process regression from summarized data.
//!
//! Summarized data is a set of tuples `(z_j, ybar_j, n_j)` — a representative
//! feature, a summary statistic of the outputs assigned to it, and the number
//! of points behind the statistic. This crate learns GP hyperparameters and
//! predicts from such summaries alone, using a Gaussian working likelihood on
//! the statistics whose per-group variance is set by a variance function
//! (identity link for Gaussian observations, log link for Poisson counts).
//!
//! It also computes the approximation-error diagnostics that tell you how much
//! trust the summarization deserves: the covariance perturbation bound `beta`,
//! the projection residual `gamma`, the scale constants `kappa`, `lambda1`,
//! `lambda2`, and the composite error scale `eta` obtained by optimizing a
//! chi-square tail bound.
//!
//! The `experiment` module drives end-to-end evaluations (grid summarization,
//! fitting, prediction, comparisons against the complete-data posterior) and
//! the toy sweeps behind the `sqgp` CLI.

pub mod bounds;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod hyperopt;
pub mod kernel;
pub mod linalg;
pub mod opt;
pub mod quasi;
pub mod special;
pub mod summary;

pub use error::{Error, Result};
pub use gp::GaussianPosterior;
pub use kernel::{KernelFamily, KernelSpec};
pub use quasi::Likelihood;
pub use summary::{Dataset, GridSpec, SummarizedData};
