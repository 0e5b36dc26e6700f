//! Pseudospectral simulation engine for a class of two-dimensional nonlocal
//! nonlinear wave equations arising in anti-plane shear motions of nonlocal
//! elastic media:
//!
//! ```text
//! w_tt = (beta * dF/dw_x)_x + (beta * dF/dw_y)_y
//! ```
//!
//! where `*` is spatial convolution with a kernel known through its Fourier
//! symbol. The crate provides the operator pipeline, kernels, strain-energy
//! models with global-existence / blow-up condition checkers, RK4 and
//! leapfrog integrators, conserved-energy and concavity-functional
//! diagnostics, slow reference oracles, and scenario-driven runs.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod initial;
pub mod integrator;
pub mod kernels;
pub mod nonlinearity;
pub mod operator;
pub mod oracle;
pub mod output;
pub mod runner;
pub mod scenario;

pub use error::{Error, Result};
