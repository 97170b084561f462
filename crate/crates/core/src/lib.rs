//! Path-integral moment closure for autonomous dynamical systems with
//! polynomial drift.
//!
//! Trial densities are Gaussian-tractable exponential families
//! `exp(lambda . Q(x) - beta psi(x)) / Z`. A path `lambda(t)` through the
//! family is scored by the Liouville residual Lagrangian `<R^2> / 2`; the
//! crate finds extremal paths, samples path space by Metropolis, and checks
//! everything against exact Gaussian transport and trajectory ensembles.

pub mod dynsys;
pub mod error;
pub mod lagrangian;
pub mod oracle;
pub mod pathspace;
pub mod polymoment;
pub mod trialdensity;

pub use error::{Error, Result};
