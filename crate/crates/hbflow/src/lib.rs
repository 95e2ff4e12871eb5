//! Heavy-ball momentum and its continuous-time models.
//!
//! * [`problems`]: objectives with gradient, Hessian-vector and third-order oracles
//! * [`discrete`]: GD and heavy-ball iterations
//! * [`counterterms`]: the correction fields that make the flow track HB to a chosen order
//! * [`flows`]: fixed-step integration of GF, rescaled GF and the heavy-ball flow
//! * [`diagnostics`]: discretization error, empirical order, directional smoothness
//! * [`implicit_bias`]: diagonal linear networks, conserved quantities, potentials, KKT checks
//! * [`experiments`]: config-driven experiment runner behind the `hbflow` binary

pub mod counterterms;
pub mod diagnostics;
pub mod discrete;
pub mod error;
pub mod flows;
pub mod experiments;
pub mod implicit_bias;
pub mod linalg;
pub mod plot;
pub mod problems;

pub use error::{Error, Result};
