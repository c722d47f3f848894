//! Deterministic fast-slow maps and their stochastic limits.
//!
//! A chaotic fast map `y(n+1) = g(y(n))` drives a slow recursion
//! `x(n+1) = x(n) + eps h(x(n)) f0(y(n)) + eps^2 f(x(n), y(n), eps)`.
//! As `eps -> 0` the rescaled slow path converges weakly to an SDE whose
//! drift carries a discrete-time correction that is neither Ito nor
//! Stratonovich. With intermittent maps in the superdiffusive regime the
//! limit is instead a Marcus SDE driven by a stable Levy process.
//!
//! The crate provides the maps, the Green-Kubo and moment estimators of the
//! limit variance, the change-of-variables engine `h = 1 / r'`, SDE
//! integrators for each interpretation, an exact CIR sampler, stable noise,
//! and a deterministic parallel ensemble harness with the statistics used
//! to compare the laws.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod covariance;
pub mod ensemble;
pub mod error;
pub mod fast_map;
pub mod func;
pub mod io;
pub mod levy;
pub mod rng;
pub mod sde;
pub mod slow;
pub mod stats;
pub mod transform;

pub mod cli;

pub use error::{Error, Result};
