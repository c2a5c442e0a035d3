//! Ensemble distribution distillation into Dirichlet prior networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`special`]: log-gamma, digamma and trigamma.
//! * [`dirichlet`]: categorical and Dirichlet types with closed-form
//!   uncertainty measures and KL divergence.
//! * [`ensemble`]: the same measures estimated from member predictions.
//! * [`proxy`]: fitting a Proxy-Dirichlet target to an ensemble.
//! * [`losses`]: distillation objectives with exact logit gradients.
//! * [`gradcheck`]: finite-difference gradient checks.
//! * [`grad_ratio`]: the head-versus-tail gradient ratio analysis.
//! * [`nn`] and [`metrics`]: a small perceptron with Adam, and evaluation
//!   metrics.
//! * [`classify`]: the end-to-end classification distillation pipeline.
//! * [`sequence`]: token-level distillation of autoregressive models.
//! * [`cli`] and [`selftest`]: the `dirdistill` command line.

pub mod classify;
pub mod cli;
pub mod dirichlet;
pub mod ensemble;
pub mod error;
pub mod grad_ratio;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod objective;
pub mod proxy;
pub mod rng;
pub mod selftest;
pub mod sequence;
pub mod special;
pub mod train;

pub use dirichlet::{DirichletParams, ProbVector, UncertaintyReport};
pub use ensemble::EnsembleSlice;
pub use error::{Error, Result};
pub use proxy::{fit_proxy, Estimator, ProxyConfig};

/// Identifier written at the top of every output file.
pub const BUILD_ID: &str = concat!("dirdistill ", env!("CARGO_PKG_VERSION"));

/// Round-trip exact float formatting used in every CSV output.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}
