// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

use std::f64::consts::{LN_2, PI};

use super::{Electronic, EmitterDynamicState, PulseShape, PulseSpec};
use crate::{Error, Result};

/// Rotates `r` by `angle` about the unit vector `axis` (Rodrigues).
pub fn rotate(r: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let dot = axis[0] * r[0] + axis[1] * r[1] + axis[2] * r[2];
    let cross = [
        axis[1] * r[2] - axis[2] * r[1],
        axis[2] * r[0] - axis[0] * r[2],
        axis[0] * r[1] - axis[1] * r[0],
    ];
    std::array::from_fn(|i| r[i] * c + cross[i] * s + axis[i] * dot * (1.0 - c))
}

/// Steps per envelope FWHM for the detuned propagation.
const STEPS_PER_FWHM: usize = 400;
/// Half-width of the propagation window in units of the FWHM.
const WINDOW: f64 = 4.0;

/// Applies a Gaussian pulse to the Bloch vector of the driven transition.
///
/// On resonance the result is the exact rotation by the pulse area about
/// `(cos phase, sin phase, 0)`. With a detuning (carrier plus the state's OU
/// offset) the pulse is split into short exact rotations about the
/// instantaneous field vector, which conserves the Bloch norm.
pub fn gaussian_pulse_rotation(
    pulse: &PulseSpec,
    state: &EmitterDynamicState,
) -> Result<EmitterDynamicState> {
    if pulse.shape != PulseShape::Gaussian {
        return Err(Error::PulseShape {
            expected: "gaussian",
        });
    }
    pulse.validate()?;
    let (sp, cp) = pulse.phase.sin_cos();
    let detuning = 2.0 * PI * (pulse.carrier_detuning_mhz + state.ou_offset_mhz);
    let mut r = state.bloch;
    if detuning == 0.0 {
        r = rotate(r, [cp, sp, 0.0], pulse.gaussian_area());
    } else {
        let fwhm = pulse.duration_us;
        let steps = (2.0 * WINDOW) as usize * STEPS_PER_FWHM;
        let h = 2.0 * WINDOW * fwhm / steps as f64;
        let omega0 = 2.0 * PI * pulse.rabi_peak_mhz;
        for i in 0..steps {
            let t = -WINDOW * fwhm + (i as f64 + 0.5) * h;
            let omega = omega0 * (-4.0 * LN_2 * (t / fwhm).powi(2)).exp();
            let field = [omega * cp, omega * sp, detuning];
            let mag = field.iter().map(|x| x * x).sum::<f64>().sqrt();
            r = rotate(r, field.map(|x| x / mag), mag * h);
        }
    }
    let mut out = *state;
    out.bloch = r;
    out.electronic = if r[2] > 0.0 {
        Electronic::Excited
    } else {
        Electronic::Ground
    };
    out.time_us += pulse.duration_us;
    Ok(out)
}
