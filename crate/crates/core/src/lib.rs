//! Pooled (group) testing with quantitative assays.
//!
//! When a condition is defined as an assay value exceeding a cutoff `C`,
//! samples can be screened in pools of `K` at a pool-level cutoff of `C/K`.
//! This crate implements three pooling strategies and the machinery to
//! compare them:
//!
//! * **MP** — two-stage mini-pooling: one assay on the pool, and all `K`
//!   individual assays when the pool is positive.
//! * **MPA** — mini-pooling with a deconvolution algorithm: after a positive
//!   pool, individuals are tested sequentially and testing stops as soon as
//!   the running remainder shows the rest must be negative.
//! * **mMPA** — marker-assisted MPA: individuals are tested in decreasing
//!   order of a risk score correlated with the assay value, which stops the
//!   sequence sooner.
//!
//! On top of the per-pool procedures sit efficiency estimators (analytic,
//! empirical convolution, the Beta-weighted concomitant formula, and Monte
//! Carlo pooling), sharp failure-count bounds, bootstrap confidence
//! intervals, and a diagnostic-accuracy simulator for multiplicative
//! measurement error. Everything is deterministic given a seed: replicates
//! draw from independent ChaCha streams and reductions are order-stable, so
//! results do not depend on thread counts.

pub mod accuracy;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod io;
pub mod procedures;
pub mod studies;

pub use error::{Error, Result};
