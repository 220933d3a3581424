// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Plano-concave Fabry-Perot fundamental mode and Purcell factors.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::crystal::{EmitterRecord, ModeRegion};
use crate::{par, Error, Histogram, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityGeometry {
    pub radius_of_curvature_um: f64,
    pub mirror_separation_um: f64,
    pub wavelength_nm: f64,
    pub membrane_thickness_um: f64,
    pub membrane_index: f64,
    pub cavity_fwhm_mhz: f64,
    pub peak_purcell: f64,
    pub outcoupling_efficiency: f64,
    /// Position of a field antinode, measured from the membrane surface (um).
    pub antinode_reference_um: f64,
    /// Replace the membrane section by its optical path when computing the waist.
    pub membrane_correction: bool,
    /// Free-space (bulk crystal) lifetime of the emitters (ms).
    pub bulk_lifetime_ms: f64,
}

impl Default for CavityGeometry {
    fn default() -> Self {
        CavityGeometry {
            radius_of_curvature_um: 65.0,
            mirror_separation_um: 24.0,
            wavelength_nm: 1536.48,
            membrane_thickness_um: 10.0,
            membrane_index: 1.8,
            cavity_fwhm_mhz: 65.0,
            peak_purcell: 116.0,
            outcoupling_efficiency: 0.75,
            antinode_reference_um: 0.0,
            membrane_correction: true,
            bulk_lifetime_ms: 11.4,
        }
    }
}

impl CavityGeometry {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("radius_of_curvature_um", self.radius_of_curvature_um),
            ("mirror_separation_um", self.mirror_separation_um),
            ("wavelength_nm", self.wavelength_nm),
            ("membrane_index", self.membrane_index),
            ("cavity_fwhm_mhz", self.cavity_fwhm_mhz),
            ("peak_purcell", self.peak_purcell),
            ("outcoupling_efficiency", self.outcoupling_efficiency),
            ("bulk_lifetime_ms", self.bulk_lifetime_ms),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be positive and finite"));
            }
        }
        if self.outcoupling_efficiency > 1.0 {
            return Err(Error::param("outcoupling_efficiency", "must not exceed 1"));
        }
        if !(0.0..self.mirror_separation_um).contains(&self.membrane_thickness_um) {
            return Err(Error::param(
                "membrane_thickness_um",
                "must be non-negative and below the mirror separation",
            ));
        }
        if self.mirror_separation_um >= self.radius_of_curvature_um {
            return Err(Error::UnstableGeometry {
                l_eff: self.mirror_separation_um,
                roc: self.radius_of_curvature_um,
            });
        }
        Ok(())
    }

    pub fn wavelength_um(&self) -> f64 {
        self.wavelength_nm * 1e-3
    }

    /// Length entering the Gaussian-beam formula (um).
    pub fn effective_length_um(&self) -> f64 {
        let (l, d) = (self.mirror_separation_um, self.membrane_thickness_um);
        if self.membrane_correction {
            (l - d) + d / self.membrane_index
        } else {
            l
        }
    }

    /// Standing-wave wavenumber inside the membrane (rad/um).
    pub fn k_medium(&self) -> f64 {
        2.0 * PI * self.membrane_index / self.wavelength_um()
    }
}

/// Waist radius of the fundamental mode (um).
pub fn fundamental_waist(g: &CavityGeometry) -> Result<f64> {
    let l = g.effective_length_um();
    let r = g.radius_of_curvature_um;
    if !(l > 0.0) || l >= r {
        return Err(Error::UnstableGeometry { l_eff: l, roc: r });
    }
    Ok(((g.wavelength_um() / PI) * (l * (r - l)).sqrt()).sqrt())
}

/// Evaluated mode: geometry plus its waist.
#[derive(Clone, Debug)]
pub struct CavityMode {
    pub geometry: CavityGeometry,
    pub waist_um: f64,
    k: f64,
}

impl CavityMode {
    pub fn new(geometry: &CavityGeometry) -> Result<Self> {
        geometry.validate()?;
        let waist_um = fundamental_waist(geometry)?;
        Ok(CavityMode {
            geometry: geometry.clone(),
            waist_um,
            k: geometry.k_medium(),
        })
    }

    /// Purcell factor at radial distance `radial_um` and depth `axial_um`.
    pub fn purcell_at(&self, radial_um: f64, axial_um: f64) -> f64 {
        let g = &self.geometry;
        let radial = (-2.0 * radial_um * radial_um / (self.waist_um * self.waist_um)).exp();
        let axial = (self.k * (axial_um - g.antinode_reference_um))
            .cos()
            .powi(2);
        g.peak_purcell * radial * axial
    }

    /// Region of radius twice the waist through the full membrane.
    pub fn sampling_region(&self) -> ModeRegion {
        ModeRegion {
            radius_um: 2.0 * self.waist_um,
            thickness_um: self.geometry.membrane_thickness_um,
        }
    }
}

/// Purcell factor at `(radial, axial)` in um.
pub fn purcell_factor_at(position: (f64, f64), g: &CavityGeometry) -> Result<f64> {
    Ok(CavityMode::new(g)?.purcell_at(position.0, position.1))
}

/// Purcell-shortened lifetime, same unit as `bulk_lifetime`.
pub fn enhanced_lifetime(purcell: f64, bulk_lifetime: f64) -> f64 {
    bulk_lifetime / (1.0 + purcell)
}

/// Purcell factor implied by a measured lifetime.
pub fn purcell_from_lifetime(lifetime: f64, bulk_lifetime: f64) -> f64 {
    bulk_lifetime / lifetime - 1.0
}

/// Relative cavity enhancement at `detuning_mhz` from the resonance.
pub fn cavity_line_filter(detuning_mhz: f64, g: &CavityGeometry) -> f64 {
    let x = 2.0 * detuning_mhz / g.cavity_fwhm_mhz;
    1.0 / (1.0 + x * x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurcellAssignment {
    pub emitter_id: u64,
    pub purcell: f64,
    pub lifetime_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PurcellCensus {
    pub assignments: Vec<PurcellAssignment>,
    pub histogram: Histogram,
    pub threshold: f64,
    pub count_above: usize,
}

/// Assigns Purcell factors and lifetimes, histograms the Purcell factors
/// (bin width `bin_width`) and counts emitters strictly above `threshold`.
pub fn purcell_census(
    emitters: &[EmitterRecord],
    g: &CavityGeometry,
    bin_width: f64,
    threshold: f64,
) -> Result<PurcellCensus> {
    let mode = CavityMode::new(g)?;
    const CHUNK: usize = 1 << 14;
    let chunks = par::chunk_ranges(emitters.len(), CHUNK);
    let assignments: Vec<PurcellAssignment> = par::map_indexed(chunks.len(), |c| {
        emitters[chunks[c].clone()]
            .iter()
            .map(|e| {
                let purcell = mode.purcell_at(e.radial_um, e.axial_um);
                PurcellAssignment {
                    emitter_id: e.id,
                    purcell,
                    lifetime_ms: enhanced_lifetime(purcell, g.bulk_lifetime_ms),
                }
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let histogram = Histogram::from_values(bin_width, assignments.iter().map(|a| a.purcell))?;
    let count_above = assignments.iter().filter(|a| a.purcell > threshold).count();
    Ok(PurcellCensus {
        assignments,
        histogram,
        threshold,
        count_above,
    })
}

/// Writes Purcell factors back into the emitter records.
pub fn assign_purcell(emitters: &mut [EmitterRecord], g: &CavityGeometry) -> Result<()> {
    let mode = CavityMode::new(g)?;
    for e in emitters {
        e.purcell = mode.purcell_at(e.radial_um, e.axial_um);
    }
    Ok(())
}
