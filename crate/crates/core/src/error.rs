// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate profile: both Lorentzian and Gaussian widths are zero")]
    DegenerateProfile,

    #[error("unstable geometry: effective length {l_eff} um is not below the radius of curvature {roc} um")]
    UnstableGeometry { l_eff: f64, roc: f64 },

    #[error("not a sweep: chirp rate is zero")]
    NotASweep,

    #[error("pulse shape mismatch: expected {expected}")]
    PulseShape { expected: &'static str },

    #[error("invalid pulse sequence: {0}")]
    InvalidSequence(String),

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("fit setup: {0}")]
    FitSetup(String),

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("tag file: {0}")]
    TagFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
