// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Single-emitter dynamics.
//!
//! Frequencies are in MHz (cycles per microsecond) and times in
//! microseconds throughout; angular quantities are formed locally.

mod bloch;
mod decay;
mod echo;
mod ou;
mod rap;

pub use bloch::{gaussian_pulse_rotation, rotate};
pub(crate) use decay::draw as draw_decay;
pub use decay::{sample_decay, DecayChannel, DecayEvent, SpinBranching};
pub use echo::{
    dd_coherence_scan, echo_amplitude, ou_chi, sequence_for, EchoEstimate, SequenceKind,
};
pub use ou::{ou_evolve, ou_evolve_integrated, ou_step};
pub use rap::{landau_zener, rap_excitation_probability, RapTable};

use serde::{Deserialize, Serialize};

use crate::spin::{Spin, Transition};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    SquareChirp,
    Gaussian,
}

/// One laser pulse. For a Gaussian pulse `duration_us` is the FWHM of the
/// Rabi-frequency envelope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    pub shape: PulseShape,
    pub duration_us: f64,
    pub chirp_mhz_per_us: f64,
    pub sweep_span_mhz: f64,
    pub rabi_peak_mhz: f64,
    pub carrier_detuning_mhz: f64,
    pub phase: f64,
    pub target: Transition,
}

impl PulseSpec {
    pub fn square_chirp(duration_us: f64, chirp_mhz_per_us: f64, rabi_peak_mhz: f64) -> Self {
        PulseSpec {
            shape: PulseShape::SquareChirp,
            duration_us,
            chirp_mhz_per_us,
            sweep_span_mhz: chirp_mhz_per_us * duration_us,
            rabi_peak_mhz,
            carrier_detuning_mhz: 0.0,
            phase: 0.0,
            target: Transition::SpLow,
        }
    }

    pub fn gaussian(fwhm_us: f64, rabi_peak_mhz: f64) -> Self {
        PulseSpec {
            shape: PulseShape::Gaussian,
            duration_us: fwhm_us,
            chirp_mhz_per_us: 0.0,
            sweep_span_mhz: 0.0,
            rabi_peak_mhz,
            carrier_detuning_mhz: 0.0,
            phase: 0.0,
            target: Transition::SpLow,
        }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_detuning(mut self, detuning_mhz: f64) -> Self {
        self.carrier_detuning_mhz = detuning_mhz;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_us > 0.0) {
            return Err(Error::param("duration_us", "must be positive"));
        }
        if self.shape == PulseShape::SquareChirp {
            let expected = self.chirp_mhz_per_us * self.duration_us;
            if (self.sweep_span_mhz - expected).abs() > 1e-9 * expected.abs().max(1.0) {
                return Err(Error::param(
                    "sweep_span_mhz",
                    "must equal chirp_mhz_per_us * duration_us",
                ));
            }
        }
        Ok(())
    }

    /// Integral of the Gaussian envelope normalised to unit peak (us).
    pub fn gaussian_effective_duration(&self) -> f64 {
        self.duration_us * (std::f64::consts::PI / (4.0 * std::f64::consts::LN_2)).sqrt()
    }

    /// Rotation angle of a resonant Gaussian pulse.
    pub fn gaussian_area(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.rabi_peak_mhz * self.gaussian_effective_duration()
    }

    /// Peak Rabi frequency that gives rotation angle `theta` for this envelope.
    pub fn rabi_for_area(&self, theta: f64) -> f64 {
        theta / (2.0 * std::f64::consts::PI * self.gaussian_effective_duration())
    }
}

/// A second, fast Ornstein-Uhlenbeck component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuComponent {
    pub sigma_mhz: f64,
    pub tau_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Stationary std of the slow spectral-diffusion process (MHz).
    pub ou_sigma_mhz: f64,
    /// Correlation time of the slow process (ms).
    pub ou_tau_ms: f64,
    pub fast: Option<OuComponent>,
    pub shf_depth: f64,
    pub shf_frequency_mhz: f64,
    pub pure_dephasing_enabled: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            ou_sigma_mhz: 0.17,
            ou_tau_ms: 1000.0,
            fast: None,
            shf_depth: 0.0,
            shf_frequency_mhz: 0.0,
            pure_dephasing_enabled: true,
        }
    }
}

impl NoiseModel {
    pub fn disabled() -> Self {
        NoiseModel {
            pure_dephasing_enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ou_sigma_mhz >= 0.0) {
            return Err(Error::param("ou_sigma_mhz", "must be non-negative"));
        }
        if !(self.ou_tau_ms > 0.0) {
            return Err(Error::param("ou_tau_ms", "must be positive"));
        }
        if let Some(f) = self.fast {
            if !(f.sigma_mhz >= 0.0 && f.tau_us > 0.0) {
                return Err(Error::param("fast", "need sigma >= 0 and tau > 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.shf_depth) {
            return Err(Error::param("shf_depth", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn slow_tau_us(&self) -> f64 {
        self.ou_tau_ms * 1e3
    }

    /// Active OU components as `(sigma_mhz, tau_us)`.
    pub fn components(&self) -> Vec<(f64, f64)> {
        if !self.pure_dephasing_enabled {
            return Vec::new();
        }
        let mut c = Vec::with_capacity(2);
        if self.ou_sigma_mhz > 0.0 {
            c.push((self.ou_sigma_mhz, self.slow_tau_us()));
        }
        if let Some(f) = self.fast.filter(|f| f.sigma_mhz > 0.0) {
            c.push((f.sigma_mhz, f.tau_us));
        }
        c
    }

    /// Superhyperfine echo-envelope modulation at total time `t_us`.
    pub fn shf_envelope(&self, t_us: f64) -> f64 {
        1.0 - self.shf_depth
            * (std::f64::consts::PI * self.shf_frequency_mhz * t_us)
                .sin()
                .powi(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Electronic {
    Ground,
    Excited,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmitterDynamicState {
    pub spin: Spin,
    pub electronic: Electronic,
    /// Bloch vector `(u, v, w)` of the driven transition; `w = -1` is ground.
    pub bloch: [f64; 3],
    pub ou_offset_mhz: f64,
    pub time_us: f64,
}

impl EmitterDynamicState {
    pub fn ground(spin: Spin) -> Self {
        EmitterDynamicState {
            spin,
            electronic: Electronic::Ground,
            bloch: [0.0, 0.0, -1.0],
            ou_offset_mhz: 0.0,
            time_us: 0.0,
        }
    }

    pub fn excited_population(&self) -> f64 {
        0.5 * (1.0 + self.bloch[2])
    }

    pub fn bloch_norm(&self) -> f64 {
        self.bloch.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}
