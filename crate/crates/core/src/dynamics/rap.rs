// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

use std::f64::consts::PI;

use super::bloch::rotate;
use super::{PulseShape, PulseSpec};
use crate::{Error, Result};

/// Asymptotic Landau-Zener transfer probability for an infinitely long
/// linear sweep, `1 - exp(-pi^2 f_R^2 / r)` with `f_R` in MHz and `r` in
/// MHz/us (equivalently `1 - exp(-pi Omega^2 / (2 alpha))` in angular units).
pub fn landau_zener(rabi_mhz: f64, chirp_mhz_per_us: f64) -> f64 {
    1.0 - (-PI * PI * rabi_mhz * rabi_mhz / chirp_mhz_per_us.abs()).exp()
}

/// Largest rotation angle per propagation step.
const MAX_STEP_ANGLE: f64 = 5e-3;

/// Excited-state population after a chirped square pulse, starting from
/// the ground state.
///
/// `emitter_detuning_mhz` is the emitter frequency (including any spectral
/// diffusion offset) relative to the centre of the sweep. The pulse is
/// propagated as a product of exact rotations about the instantaneous field
/// vector, so the finite sweep range and the abrupt switching are included;
/// for long sweeps that cross the emitter the result tends to
/// [`landau_zener`], and for emitters outside the sweep it reduces to the
/// small off-resonant excitation.
pub fn rap_excitation_probability(pulse: &PulseSpec, emitter_detuning_mhz: f64) -> Result<f64> {
    if pulse.shape != PulseShape::SquareChirp {
        return Err(Error::PulseShape {
            expected: "square_chirp",
        });
    }
    pulse.validate()?;
    if pulse.chirp_mhz_per_us == 0.0 {
        return Err(Error::NotASweep);
    }
    if pulse.rabi_peak_mhz == 0.0 {
        return Ok(0.0);
    }
    let t = pulse.duration_us;
    let offset = emitter_detuning_mhz - pulse.carrier_detuning_mhz;
    let omega = 2.0 * PI * pulse.rabi_peak_mhz;
    let max_detuning = 2.0 * PI * (0.5 * pulse.sweep_span_mhz.abs() + offset.abs());
    let max_field = (omega * omega + max_detuning * max_detuning).sqrt();
    let steps = ((max_field * t / MAX_STEP_ANGLE).ceil() as usize).max(64);
    let h = t / steps as f64;
    let (sp, cp) = pulse.phase.sin_cos();
    let mut r = [0.0, 0.0, -1.0];
    for i in 0..steps {
        let tm = (i as f64 + 0.5) * h;
        let d = 2.0 * PI * (pulse.chirp_mhz_per_us * (tm - 0.5 * t) - offset);
        let mag = (omega * omega + d * d).sqrt();
        r = rotate(r, [omega * cp / mag, omega * sp / mag, d / mag], mag * h);
    }
    Ok((0.5 * (1.0 + r[2])).clamp(0.0, 1.0))
}

/// Tabulated excitation probability against emitter detuning, for use
/// inside per-pulse Monte Carlo loops.
#[derive(Clone, Debug)]
pub struct RapTable {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl RapTable {
    /// Tabulates over `[-half_range, half_range]` MHz with `n >= 2` points;
    /// outside the range the end values are used.
    pub fn new(pulse: &PulseSpec, half_range_mhz: f64, n: usize) -> Result<Self> {
        let n = n.max(2);
        let step = 2.0 * half_range_mhz / (n - 1) as f64;
        let values = crate::par::map_indexed(n, |i| {
            rap_excitation_probability(pulse, -half_range_mhz + i as f64 * step)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(RapTable {
            lo: -half_range_mhz,
            step,
            values,
        })
    }

    pub fn eval(&self, detuning_mhz: f64) -> f64 {
        let x = ((detuning_mhz - self.lo) / self.step).max(0.0);
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}
