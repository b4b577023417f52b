//! Tracking minimizers, minimum values and performative equilibria of
//! stochastically drifting strongly convex problems with online proximal
//! stochastic gradient methods.
//!
//! The crate is organised bottom-up:
//!
//! - [`mathkit`]: dense linear algebra helpers and seeded samplers.
//! - [`prox`]: proximal operators of the supported regularizers.
//! - [`problems`]: synthetic drifting problem families with exact references.
//! - [`algorithms`]: the four proximal stochastic gradient variants and the runner.
//! - [`schedules`]: critical step size, regime classification and step-decay schedules.
//! - [`theory`]: computable tracking envelopes (expectation and high probability).
//! - [`harness`]: Monte-Carlo experiments, aggregation, calibration and file outputs.

pub mod algorithms;
pub mod error;
pub mod harness;
pub mod mathkit;
pub mod problems;
pub mod prox;
pub mod schedules;
pub mod theory;

pub use error::{Error, Result};
pub use mathkit::{Matrix, RngStream, Vector};
