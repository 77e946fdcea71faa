// Copyright 2026 The qdswitch Authors
// SPDX-License-Identifier: Apache-2.0

//! Open-system simulation of a charged quantum dot in a single-sided
//! nanophotonic cavity, operated as a spin-memory single-photon switch and
//! transistor.
//!
//! The crate is layered bottom-up:
//!
//! * [`qspace`]: dot ⊗ truncated-Fock Hilbert space, operators, density matrices.
//! * [`model`]: device parameters, pulse envelopes, Hamiltonian and Lindblad channels.
//! * [`evolve`]: adaptive Dormand–Prince integration of the master equation and
//!   the observables derived from a trajectory (transmittance, Ramsey
//!   visibility, spin-flip probability).
//! * [`steady`]: closed-form cavity spectra and reflection coefficients.
//! * [`protocol`]: Ramsey transmittance curves, contrast, switching contrast,
//!   transistor gain and photon-number calibration arithmetic.
//! * [`fitshop`]: bounded Levenberg–Marquardt engine and the calibration fits
//!   built on it.

pub mod error;
pub mod evolve;
pub mod fitshop;
pub mod model;
pub mod protocol;
pub mod qspace;
pub mod steady;

pub use error::{Error, Result};
