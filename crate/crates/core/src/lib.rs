//! Pricing-based user association for downlink heterogeneous cellular networks.
//!
//! The crate is organized bottom-up:
//!
//! - [`netmodel`]: seeded HetNet drops, SINR/rate evaluation, utility parameters.
//! - [`dcd`]: fixed-power association by dual coordinate descent, with the
//!   duality-gap certificate.
//! - [`baselines`]: max-SINR association and subgradient price updates.
//! - [`powerctl`]: diagonal-Hessian Newton power control under fixed association.
//! - [`joint`]: alternating association + power control, and a direct dual benchmark.
//! - [`mimo`]: two-stage association + per-cell WMMSE beamforming.
//! - [`harness`]: oracles, experiment runner and report emission used by the CLI.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dcd;
pub mod error;
pub mod harness;
pub mod joint;
pub mod mimo;
pub mod netmodel;
pub mod powerctl;

pub use error::{Error, Result};

/// Complex scalar used for MIMO channels and beamformers.
pub type C64 = nalgebra::Complex<f64>;
