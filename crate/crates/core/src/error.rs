// Copyright 2026 The qdswitch Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised by the simulator, the closed-form routines and the fitters.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Population left outside the ground spin manifold when the reduced spin
    /// state was requested. Usually means the final time is too early.
    #[error("residual excitation {leaked:.3e} exceeds threshold {threshold:.3e}")]
    ResidualExcitation { leaked: f64, threshold: f64 },

    #[error("step size underflow at t = {t} ns (h = {step:.3e} ns); problem too stiff for the explicit integrator")]
    StepUnderflow { t: f64, step: f64 },

    #[error("integration failure at t = {t} ns: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    /// The cavity field had not decayed by the end of the trajectory.
    #[error("incomplete trajectory: photon number {last:.3e} at t_end (peak {peak:.3e})")]
    IncompleteTrajectory { last: f64, peak: f64 },

    #[error("fock truncation did not converge up to fock_dim = {max_fock_dim}")]
    TruncationFailure { max_fock_dim: usize },

    #[error("model sanity check failed: {0}")]
    ModelSanity(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
