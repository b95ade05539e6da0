//! Hybrid copula estimation.
//!
//! A hybrid copula estimator composes an estimator of a joint distribution
//! function with estimators of the marginal distribution functions that need
//! not be the margins of the joint one:
//!
//! ```text
//! C_n(u) = H_n(F_{n,1}^{<-}(u_1), ..., F_{n,p}^{<-}(u_p))
//! ```
//!
//! The crate provides the estimators ([`estimators`]), the closed-form
//! copula and margin families used as ground truth ([`copulas`]), the
//! covariance kernels of the limiting Gaussian processes ([`asymptotics`]),
//! a seeded Monte Carlo harness that checks the limit theory numerically
//! ([`harness`]), and the command-line front end ([`cli`]).

pub mod asymptotics;
pub mod cli;
pub mod copulas;
pub mod distfun;
mod error;
pub mod estimators;
pub mod harness;
mod quad;

pub use copulas::{CopulaModel, MarginFamily, ParametricKind};
pub use distfun::{CdfHandle, EmpiricalCdf, ExtendedReal, UnivariateCdf};
pub use error::{Error, Result};
pub use estimators::{DataMatrix, HybridEstimator, JointScheme, MarginScheme};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
