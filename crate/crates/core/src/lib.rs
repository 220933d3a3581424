// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! # remsim
//!
//! Desk-scale stochastic simulator for erbium emitters in a europium
//! co-doped yttrium orthosilicate membrane inside a high-finesse
//! Fabry-Perot resonator, together with the analysis machinery used to
//! extract linewidths, Purcell factors, photon correlations, spin splittings
//! and optical coherence times from simulated (or recorded) data.
//!
//! The crate is organised bottom-up:
//!
//! * [`crystal`]: emitter ensembles, co-dopant shifts and satellite lines.
//! * [`cavity`]: fundamental-mode geometry and position-dependent Purcell factors.
//! * [`spin`]: Zeeman-split optical transitions of the effective spin-1/2 doublets.
//! * [`dynamics`]: Bloch rotations, rapid adiabatic passage, decay branching,
//!   Ornstein-Uhlenbeck spectral diffusion and echo sequences.
//! * [`detection`]: detector model, time tags and pulse-wise correlation estimators.
//! * [`fit`]: Levenberg-Marquardt least squares and the model fits built on it.
//! * [`experiments`]: figure-level protocols, configuration, manifests and I/O.
//!
//! Every stochastic routine takes an explicit seed or RNG. Parallel kernels
//! derive one ChaCha substream per work item, so results do not depend on the
//! number of worker threads. Disable the default `parallel` feature to build
//! without rayon.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity;
pub mod crystal;
pub mod detection;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod faddeeva;
pub mod fit;
pub mod histogram;
pub mod oracle;
pub mod par;
pub mod spin;

pub use error::{Error, Result};
pub use histogram::Histogram;

/// Conversion factor between a Gaussian FWHM and its standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;
