//! Adaptive observer-based synchronization of nonlinear master systems.
//!
//! The crate simulates master systems in regressor form (including the
//! Lorenz system used for chaotic signal transmission), reconstructs their
//! unknown parameters through three adaptive observer schemes, and verifies
//! the schemes' convergence and robustness properties:
//!
//! * [`observers::AeObserver`] — augmented-error scheme for constant-matrix
//!   plants of any relative degree;
//! * [`observers::HotObserver`] — high-order-tuner scheme generating the
//!   parameter estimates together with their derivatives;
//! * [`observers::SdObserver`] — augmented-error scheme for plants with an
//!   output-dependent system matrix, the form the Lorenz experiments use;
//!
//! each with an optional dead-zone robustification against bounded channel
//! noise.
//!
//! [`transmission`] wires master, channel, observer and filters into one
//! jointly integrated scenario with recovery metrics; [`analysis`] holds
//! the verification toolkit (persistent excitation, Hurwitz/minimum-phase
//! checks, Lyapunov solves, residual bounds, noise propagation).

pub mod analysis;
pub mod error;
pub mod filters;
pub mod numerics;
pub mod observers;
pub mod plant;
pub mod poly;
pub mod transmission;

pub use error::{Error, Result};
