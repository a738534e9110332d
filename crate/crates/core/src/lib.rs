//! Synthesis of KKT-consistent electricity-market datasets and inference of
//! generator cost coefficients from published locational marginal prices.
//!
//! The crate is organised around five pieces:
//!
//! - [`case`]: grid data model, MATPOWER-subset and native (JSON) parsers, validation.
//! - [`dispatch`]: economic dispatch and DC-OPF solvers, KKT verification, dataset generation.
//! - [`scenario1`]: closed-form recovery of `(a, b)` and capacity limits from
//!   per-generator outputs.
//! - [`scenario2`]: multivariate fixed-point iteration (MFPI) recovering the
//!   quadratic coefficients from aggregate generation, with convergence checks.
//! - [`harness`]: experiment orchestration, metrics and report emission.
//!
//! Data-parallel loops (sample generation, per-generator attacks, pair search)
//! go through [`par::Execution`]; building without the `parallel` feature
//! makes every loop sequential.

pub mod case;
pub mod dispatch;
mod error;
pub mod harness;
pub mod par;
pub mod scenario1;
pub mod scenario2;

pub use error::{Error, Result};
