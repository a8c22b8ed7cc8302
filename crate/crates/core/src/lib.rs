//! Multiscale simulation and verification toolkit for a linear-quadratic
//! controlled particle system.
//!
//! The same damped dynamics is realized on three scales and the library
//! provides the machinery to simulate each one and to verify the decay
//! and stability estimates that connect them:
//!
//! - [`riccati`]: the matrix Riccati solve for the joint LQ objective, its
//!   structural collapse to a scalar gain `y(t)`, the closed-loop feedback
//!   law and the decay-rate functional `r(t)`.
//! - [`particle`]: adaptive RK2(3) integration of the controlled particle
//!   system and the particle-scale Lyapunov function.
//! - [`meanfield`]: exact characteristic flows acting on empirical
//!   measures, 1-Wasserstein distances, Dobrushin stability constants and
//!   the mean-field Lyapunov function.
//! - [`hydro`]: a relaxed finite-volume solver for the damped pressureless
//!   gas system (mono-kinetic closure, optional Grad closure) and the
//!   hydrodynamic Lyapunov functional.
//! - [`alignment`]: nonlinear second-order alignment models
//!   (Cucker-Smale, Motsch-Tadmor) under instantaneous receding-horizon
//!   control.
//!
//! All types are plain values; operations are pure functions and safe to
//! call from multiple threads.

// `!(x > 0.0)` rejects NaN along with the out-of-range values; the
// suggested `x <= 0.0` would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod error;
pub mod hydro;
pub mod meanfield;
pub mod ode;
pub mod particle;
pub mod quadrature;
pub mod riccati;

mod assignment;

pub use error::{Error, Result};
