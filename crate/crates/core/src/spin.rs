// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Zeeman-split optical transitions of the effective spin-1/2 doublets.
//!
//! Linear effective-spin model only. Ground levels sit at `-/+ D_g/2`,
//! excited levels at `f0 -/+ D_e/2`, with `D = g mu_B B / h`.

use serde::{Deserialize, Serialize};

use crate::crystal::{EmitterRecord, SatelliteClass, SpinClass};
use crate::{Error, Result, FWHM_PER_SIGMA};

/// `mu_B / h` in GHz per tesla.
pub const BOHR_GHZ_PER_T: f64 = 13.996;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spin {
    Low,
    High,
}

impl Spin {
    pub fn flipped(self) -> Spin {
        match self {
            Spin::Low => Spin::High,
            Spin::High => Spin::Low,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    SpLow,
    SpHigh,
    SfRed,
    SfBlue,
}

impl Transition {
    /// Ground spin state the transition starts from.
    pub fn ground_spin(self) -> Spin {
        match self {
            Transition::SpLow | Transition::SfBlue => Spin::Low,
            Transition::SpHigh | Transition::SfRed => Spin::High,
        }
    }

    pub fn is_spin_preserving(self) -> bool {
        matches!(self, Transition::SpLow | Transition::SpHigh)
    }

    /// Spin-preserving transition driven from `spin`.
    pub fn preserving(spin: Spin) -> Transition {
        match spin {
            Spin::Low => Transition::SpLow,
            Spin::High => Transition::SpHigh,
        }
    }
}

/// `(class, dg_ground, dg_excited)` row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    from = "(SatelliteClass, f64, f64)",
    into = "(SatelliteClass, f64, f64)"
)]
pub struct SatelliteCorrection {
    pub class: SatelliteClass,
    pub d_ground: f64,
    pub d_excited: f64,
}

impl From<(SatelliteClass, f64, f64)> for SatelliteCorrection {
    fn from((class, d_ground, d_excited): (SatelliteClass, f64, f64)) -> Self {
        SatelliteCorrection {
            class,
            d_ground,
            d_excited,
        }
    }
}

impl From<SatelliteCorrection> for (SatelliteClass, f64, f64) {
    fn from(c: SatelliteCorrection) -> Self {
        (c.class, c.d_ground, c.d_excited)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinParams {
    pub g_ground: f64,
    pub g_excited: f64,
    pub b_field_mt: f64,
    /// Class I adds `+offset/2` to both g factors, class II subtracts it.
    pub class_g_offset: f64,
    pub satellite_g_correction: Vec<SatelliteCorrection>,
    pub bohr_ghz_per_t: f64,
    /// Spin inhomogeneous FWHM of the central line, as seen by hole burning (MHz).
    pub spin_hole_fwhm_mhz: f64,
}

impl Default for SpinParams {
    fn default() -> Self {
        SpinParams {
            g_ground: 9.0,
            g_excited: 10.0,
            b_field_mt: 350.0,
            class_g_offset: 0.02,
            satellite_g_correction: Vec::new(),
            bohr_ghz_per_t: BOHR_GHZ_PER_T,
            spin_hole_fwhm_mhz: 2.0,
        }
    }
}

impl SpinParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_ground > 0.0 && self.g_excited > 0.0) {
            return Err(Error::param("g factors", "must be positive"));
        }
        if !(self.b_field_mt >= 0.0) {
            return Err(Error::param("b_field_mt", "must be non-negative"));
        }
        if !(self.spin_hole_fwhm_mhz > 0.0) {
            return Err(Error::param("spin_hole_fwhm_mhz", "must be positive"));
        }
        Ok(())
    }

    /// Effective `(g_ground, g_excited)` for a given class and satellite.
    pub fn effective_g(&self, spin_class: SpinClass, satellite: SatelliteClass) -> (f64, f64) {
        let half = 0.5
            * match spin_class {
                SpinClass::I => self.class_g_offset,
                SpinClass::II => -self.class_g_offset,
            };
        let (dg, de) = self
            .satellite_g_correction
            .iter()
            .find(|c| c.class == satellite)
            .map_or((0.0, 0.0), |c| (c.d_ground, c.d_excited));
        (self.g_ground + half + dg, self.g_excited + half + de)
    }

    /// `(D_ground, D_excited)` in GHz.
    pub fn level_splittings(&self, spin_class: SpinClass, satellite: SatelliteClass) -> (f64, f64) {
        let (gg, ge) = self.effective_g(spin_class, satellite);
        let scale = self.bohr_ghz_per_t * self.b_field_mt * 1e-3;
        (gg * scale, ge * scale)
    }
}

/// Transition frequencies in GHz relative to the zero-field line centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionFrequencies {
    pub f_sp_low: f64,
    pub f_sp_high: f64,
    pub f_sf_red: f64,
    pub f_sf_blue: f64,
}

impl TransitionFrequencies {
    pub fn get(&self, t: Transition) -> f64 {
        match t {
            Transition::SpLow => self.f_sp_low,
            Transition::SpHigh => self.f_sp_high,
            Transition::SfRed => self.f_sf_red,
            Transition::SfBlue => self.f_sf_blue,
        }
    }
}

pub fn transition_frequencies(p: &SpinParams, emitter: &EmitterRecord) -> TransitionFrequencies {
    let (dg, de) = p.level_splittings(emitter.spin_class, emitter.satellite);
    let f0 = emitter.frequency_offset;
    TransitionFrequencies {
        f_sp_low: f0 - 0.5 * (de - dg),
        f_sp_high: f0 + 0.5 * (de - dg),
        f_sf_red: f0 - 0.5 * (de + dg),
        f_sf_blue: f0 + 0.5 * (de + dg),
    }
}

/// `(delta_sp, delta_sf)` in MHz.
pub fn splittings(p: &SpinParams, emitter: &EmitterRecord) -> (f64, f64) {
    let t = transition_frequencies(p, emitter);
    (
        (t.f_sp_high - t.f_sp_low).abs() * 1e3,
        (t.f_sf_blue - t.f_sf_red).abs() * 1e3,
    )
}

/// Gaussian hole of unit depth and FWHM `fwhm_mhz`, centred at zero pump
/// detuning (measured from the ensemble spin-flip splitting).
pub fn hole_spectrum(fwhm_mhz: f64, grid_mhz: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !(fwhm_mhz > 0.0) {
        return Err(Error::param("spin_hole_fwhm_mhz", "must be positive"));
    }
    let sigma = fwhm_mhz / FWHM_PER_SIGMA;
    Ok(grid_mhz
        .iter()
        .map(|&d| (d, (-0.5 * (d / sigma).powi(2)).exp()))
        .collect())
}

/// Comparison of a satellite's spin-flip splitting against the hole band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoleComparison {
    pub offset_mhz: f64,
    pub hole_fwhm_mhz: f64,
    pub resolved: bool,
}

pub fn compare_to_holes(offset_mhz: f64, hole_fwhm_mhz: f64) -> HoleComparison {
    HoleComparison {
        offset_mhz,
        hole_fwhm_mhz,
        resolved: offset_mhz.abs() > hole_fwhm_mhz,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn emitter(offset: f64, class: SpinClass, sat: SatelliteClass) -> EmitterRecord {
        EmitterRecord {
            id: 0,
            frequency_offset: offset,
            satellite: sat,
            radial_um: 0.0,
            axial_um: 0.0,
            purcell: 0.0,
            sd_sigma: 0.2,
            spin_class: class,
        }
    }

    fn no_class() -> SpinParams {
        SpinParams {
            class_g_offset: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_field_is_degenerate() {
        let p = SpinParams {
            b_field_mt: 0.0,
            ..Default::default()
        };
        let t = transition_frequencies(&p, &emitter(1.25, SpinClass::I, SatelliteClass::Main));
        for tr in [
            Transition::SpLow,
            Transition::SpHigh,
            Transition::SfRed,
            Transition::SfBlue,
        ] {
            assert_eq!(t.get(tr), 1.25);
        }
    }

    #[test]
    fn high_field_splittings() {
        let (sp, sf) = splittings(
            &no_class(),
            &emitter(0.0, SpinClass::I, SatelliteClass::Main),
        );
        assert!((sp - 4898.6).abs() < 0.1, "{sp}");
        assert!((sf / sp - 19.0).abs() < 1e-9);
    }

    #[test]
    fn class_branches() {
        let p = SpinParams::default();
        let e1 = emitter(0.0, SpinClass::I, SatelliteClass::Main);
        let e2 = emitter(0.0, SpinClass::II, SatelliteClass::Main);
        let (sp1, sf1) = splittings(&p, &e1);
        let (sp2, sf2) = splittings(&p, &e2);
        let expected = 2.0 * p.class_g_offset * BOHR_GHZ_PER_T * 0.35 * 1e3;
        assert!((sf1 - sf2 - expected).abs() < 1e-6);
        assert!((sp1 - sp2).abs() < 1e-9);
    }

    #[test]
    fn satellite_correction_resolved() {
        let p = SpinParams {
            b_field_mt: 2.5,
            satellite_g_correction: vec![(SatelliteClass::D, 0.1, 0.1).into()],
            ..Default::default()
        };
        let (_, main) = splittings(&p, &emitter(0.0, SpinClass::I, SatelliteClass::Main));
        let (_, d) = splittings(&p, &emitter(1.5, SpinClass::I, SatelliteClass::D));
        let c = compare_to_holes(d - main, p.spin_hole_fwhm_mhz);
        assert!(c.resolved, "{c:?}");
    }

    #[test]
    fn hole_profile() {
        let h = hole_spectrum(2.0, &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(h[1].1, 1.0);
        assert!((h[0].1 - 0.5).abs() < 1e-12 && (h[2].1 - 0.5).abs() < 1e-12);
        assert!(hole_spectrum(0.0, &[0.0]).is_err());
    }
}
