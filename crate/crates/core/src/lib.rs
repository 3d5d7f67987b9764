//! Reduced-order modeling of two-phase porous-media transport with
//! Wasserstein barycenters of saturation profiles.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod greedy;
pub mod online;
pub mod pod;
pub mod simplex;
pub mod snapshot;
pub mod store;
pub mod transport;

pub use error::{Error, Result};
pub use snapshot::{ParameterPoint, Snapshot};
