//! Frank-Wolfe minimization of functionals over probability measures in
//! 2-Wasserstein space, on equal-weight particle clouds.
//!
//! The pieces, bottom up:
//! - [`cloud`] and [`transport`]: particle clouds, exact optimal transport and geodesics.
//! - [`kernel`], [`sinkhorn`] and [`functional`]: MMD, entropic deconvolution and
//!   potential-interaction energies with their derivative oracles.
//! - [`moreau`]: accelerated prox steps and the dual function `g(lambda)`.
//! - [`dual`]: bisection and mirror-ascent dual solvers and the trust-region step.
//! - [`frank_wolfe`]: the outer loop.

// guards of the form `!(x > 0.0)` are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloud;
pub mod dual;
pub mod error;
pub mod frank_wolfe;
pub mod functional;
pub mod kernel;
pub mod moreau;
pub mod objective;
pub mod sinkhorn;
pub mod transport;

pub use cloud::{mean_squared_gradient_norm, ParticleCloud};
pub use error::{Error, Result};
pub use functional::{Functional, GradientModel, Interaction};
pub use objective::SmoothObjective;
