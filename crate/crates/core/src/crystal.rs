// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Emitter ensembles in the co-doped crystal.
//!
//! The optical frequency of an erbium emitter is shifted by strain from
//! europium co-dopants. Co-dopants on a handful of near lattice shells give
//! discrete shifts (the satellite lines); all farther co-dopants are lumped
//! into a Lorentzian continuum whose width grows linearly with the europium
//! fraction. A Gaussian term collects the remaining microscopic disorder.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Cauchy, Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::par::{self, domain, SimRng};
use crate::{faddeeva, Error, Histogram, Result, FWHM_PER_SIGMA};

/// Spectral class of an emitter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SatelliteClass {
    #[serde(rename = "main")]
    Main,
    A,
    B,
    C,
    D,
    #[serde(rename = "other")]
    Other,
}

impl SatelliteClass {
    pub const SATELLITES: [SatelliteClass; 4] = [
        SatelliteClass::A,
        SatelliteClass::B,
        SatelliteClass::C,
        SatelliteClass::D,
    ];

    /// Label of the shell at `position` in the shell table.
    pub fn for_shell(position: usize) -> SatelliteClass {
        Self::SATELLITES
            .get(position)
            .copied()
            .unwrap_or(SatelliteClass::Other)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SatelliteClass::Main => "main",
            SatelliteClass::A => "A",
            SatelliteClass::B => "B",
            SatelliteClass::C => "C",
            SatelliteClass::D => "D",
            SatelliteClass::Other => "other",
        }
    }
}

impl std::str::FromStr for SatelliteClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "main" => SatelliteClass::Main,
            "A" => SatelliteClass::A,
            "B" => SatelliteClass::B,
            "C" => SatelliteClass::C,
            "D" => SatelliteClass::D,
            "other" => SatelliteClass::Other,
            _ => {
                return Err(Error::param(
                    "satellite_class",
                    format!("unknown label `{s}`"),
                ))
            }
        })
    }
}

/// Magnetic subclass of the erbium site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpinClass {
    I,
    II,
}

/// One near co-dopant shell: `site_count` equivalent lattice sites that
/// each shift the erbium line by `shift_ghz` when occupied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(u32, u32, f64)", into = "(u32, u32, f64)")]
pub struct Shell {
    pub index: u32,
    pub site_count: u32,
    pub shift_ghz: f64,
}

impl From<(u32, u32, f64)> for Shell {
    fn from((index, site_count, shift_ghz): (u32, u32, f64)) -> Self {
        Shell {
            index,
            site_count,
            shift_ghz,
        }
    }
}

impl From<Shell> for (u32, u32, f64) {
    fn from(s: Shell) -> Self {
        (s.index, s.site_count, s.shift_ghz)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrystalConfig {
    /// Emitter fraction of yttrium sites (studied crystallographic site).
    pub erbium_concentration: f64,
    pub europium_concentration: f64,
    /// Near shells as `(index, site_count, shift_ghz)` rows, labelled A, B, C, D in order.
    pub shells: Vec<Shell>,
    /// Lorentzian FWHM of the far co-dopant continuum per unit europium fraction (GHz).
    pub lorentzian_per_concentration: f64,
    /// Lorentzian FWHM from sources other than the co-dopant (GHz).
    pub residual_lorentzian_fwhm: f64,
    pub gaussian_fwhm: f64,
    pub center_wavelength_nm: f64,
    /// Log-uniform range of the stationary spectral-diffusion std (MHz).
    pub sd_sigma_range_mhz: (f64, f64),
}

impl Default for CrystalConfig {
    fn default() -> Self {
        CrystalConfig {
            erbium_concentration: 2.66e-7,
            europium_concentration: 1e-4,
            shells: vec![
                Shell::from((1, 1, -1.6)),
                Shell::from((2, 2, -0.9)),
                Shell::from((3, 3, 0.9)),
                Shell::from((4, 1, 1.5)),
            ],
            lorentzian_per_concentration: 1.1e3,
            residual_lorentzian_fwhm: 0.03,
            gaussian_fwhm: 0.27,
            center_wavelength_nm: 1536.48,
            sd_sigma_range_mhz: (0.095, 0.38),
        }
    }
}

/// Number density of yttrium sites in YSO (per cubic micrometre).
pub const YTTRIUM_SITE_DENSITY_PER_UM3: f64 = 1.878e10;

impl CrystalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, c) in [
            ("erbium_concentration", self.erbium_concentration),
            ("europium_concentration", self.europium_concentration),
        ] {
            if !(0.0..1.0).contains(&c) {
                return Err(Error::param(name, "must lie in [0, 1)"));
            }
        }
        for (i, s) in self.shells.iter().enumerate() {
            if s.site_count < 1 {
                return Err(Error::param("shells", format!("row {i} has zero sites")));
            }
            if !s.shift_ghz.is_finite() {
                return Err(Error::param(
                    "shells",
                    format!("row {i} has a non-finite shift"),
                ));
            }
            if self.shells[..i].iter().any(|o| o.shift_ghz == s.shift_ghz) {
                return Err(Error::param("shells", "shell shifts must be distinct"));
            }
        }
        if self.gaussian_fwhm < 0.0
            || self.lorentzian_per_concentration < 0.0
            || self.residual_lorentzian_fwhm < 0.0
        {
            return Err(Error::param("widths", "must be non-negative"));
        }
        let (lo, hi) = self.sd_sigma_range_mhz;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::param("sd_sigma_range_mhz", "need 0 < low <= high"));
        }
        Ok(())
    }

    /// FWHM of the far co-dopant Lorentzian continuum (GHz).
    pub fn continuum_lorentzian_fwhm(&self) -> f64 {
        self.lorentzian_per_concentration * self.europium_concentration
    }

    /// Total Lorentzian FWHM of the main line (GHz).
    pub fn total_lorentzian_fwhm(&self) -> f64 {
        self.continuum_lorentzian_fwhm() + self.residual_lorentzian_fwhm
    }

    pub fn total_sites(&self) -> u32 {
        self.shells.iter().map(|s| s.site_count).sum()
    }

    /// Exact probability that an emitter falls into `class`.
    pub fn class_probability(&self, class: SatelliteClass) -> f64 {
        let p = self.europium_concentration;
        let n = self.total_sites() as i32;
        let empty = (1.0 - p).powi(n);
        match class {
            SatelliteClass::Main => empty,
            SatelliteClass::Other => {
                let single: f64 = SatelliteClass::SATELLITES
                    .iter()
                    .map(|&c| self.class_probability(c))
                    .sum();
                (1.0 - empty - single).max(0.0)
            }
            c => self
                .shells
                .iter()
                .enumerate()
                .filter(|(i, _)| SatelliteClass::for_shell(*i) == c)
                .map(|(_, s)| s.site_count as f64 * p * (1.0 - p).powi(n - 1))
                .sum(),
        }
    }

    pub fn shell_shift(&self, class: SatelliteClass) -> Option<f64> {
        self.shells
            .iter()
            .enumerate()
            .find(|(i, _)| SatelliteClass::for_shell(*i) == class)
            .map(|(_, s)| s.shift_ghz)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmitterRecord {
    pub id: u64,
    /// Optical offset from the line centre (GHz).
    pub frequency_offset: f64,
    pub satellite: SatelliteClass,
    pub radial_um: f64,
    pub axial_um: f64,
    pub purcell: f64,
    /// Stationary spectral-diffusion std (MHz).
    pub sd_sigma: f64,
    pub spin_class: SpinClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoigtParams {
    pub lorentzian_fwhm: f64,
    pub gaussian_fwhm: f64,
    pub center: f64,
    pub area: f64,
}

impl VoigtParams {
    pub fn new(lorentzian_fwhm: f64, gaussian_fwhm: f64) -> Self {
        VoigtParams {
            lorentzian_fwhm,
            gaussian_fwhm,
            center: 0.0,
            area: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lorentzian_fwhm < 0.0 || self.gaussian_fwhm < 0.0 {
            return Err(Error::param("voigt widths", "must be non-negative"));
        }
        if self.lorentzian_fwhm == 0.0 && self.gaussian_fwhm == 0.0 {
            return Err(Error::DegenerateProfile);
        }
        Ok(())
    }
}

/// Unit-area Voigt profile at `offset` from its centre. Depends on
/// `|offset|` only.
pub fn voigt_profile(offset: f64, lorentzian_fwhm: f64, gaussian_fwhm: f64) -> f64 {
    let d = offset.abs();
    let hwhm = 0.5 * lorentzian_fwhm;
    if gaussian_fwhm == 0.0 {
        return hwhm / (PI * (d * d + hwhm * hwhm));
    }
    let sigma = gaussian_fwhm / FWHM_PER_SIGMA;
    if hwhm == 0.0 {
        return (-0.5 * (d / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt());
    }
    let scale = sigma * std::f64::consts::SQRT_2;
    faddeeva::w(Complex64::new(d / scale, hwhm / scale)).re / (sigma * (2.0 * PI).sqrt())
}

/// Voigt line shape scaled by `p.area`.
pub fn voigt_density(x: f64, p: &VoigtParams) -> Result<f64> {
    p.validate()?;
    Ok(p.area * voigt_profile(x - p.center, p.lorentzian_fwhm, p.gaussian_fwhm))
}

/// Full width at half maximum of the unit Voigt profile, by bisection.
pub fn voigt_fwhm(lorentzian_fwhm: f64, gaussian_fwhm: f64) -> Result<f64> {
    VoigtParams::new(lorentzian_fwhm, gaussian_fwhm).validate()?;
    let half = 0.5 * voigt_profile(0.0, lorentzian_fwhm, gaussian_fwhm);
    let (mut lo, mut hi) = (0.0, lorentzian_fwhm + gaussian_fwhm);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if voigt_profile(mid, lorentzian_fwhm, gaussian_fwhm) > half {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo + hi)
}

/// Draws which near-shell sites hold a co-dopant. Returns one shell
/// position per occupied site.
pub fn draw_occupancy<R: Rng + ?Sized>(config: &CrystalConfig, rng: &mut R) -> Vec<usize> {
    let p = config.europium_concentration;
    let mut occupied = Vec::new();
    for (i, shell) in config.shells.iter().enumerate() {
        for _ in 0..shell.site_count {
            if rng.random::<f64>() < p {
                occupied.push(i);
            }
        }
    }
    occupied
}

/// Frequency shift and spectral class from the co-dopant environment.
///
/// `occupied` lists the shell position of every occupied near site. The
/// continuum terms (far co-dopant Lorentzian, Gaussian disorder) are drawn
/// from `rng`.
pub fn codopant_shift<R: Rng + ?Sized>(
    occupied: &[usize],
    config: &CrystalConfig,
    rng: &mut R,
) -> (f64, SatelliteClass) {
    let discrete: f64 = occupied.iter().map(|&i| config.shells[i].shift_ghz).sum();
    let class = class_of(occupied);
    let shift = discrete
        + lorentzian_sample(config.continuum_lorentzian_fwhm(), rng)
        + gaussian_sample(config.gaussian_fwhm, rng);
    (shift, class)
}

fn lorentzian_sample<R: Rng + ?Sized>(fwhm: f64, rng: &mut R) -> f64 {
    if fwhm > 0.0 {
        Cauchy::new(0.0, 0.5 * fwhm).unwrap().sample(rng)
    } else {
        0.0
    }
}

fn gaussian_sample<R: Rng + ?Sized>(fwhm: f64, rng: &mut R) -> f64 {
    if fwhm > 0.0 {
        Normal::new(0.0, fwhm / FWHM_PER_SIGMA).unwrap().sample(rng)
    } else {
        0.0
    }
}

/// Cylinder in mode coordinates in which emitter positions are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRegion {
    pub radius_um: f64,
    pub thickness_um: f64,
}

impl ModeRegion {
    pub fn volume_um3(&self) -> f64 {
        PI * self.radius_um * self.radius_um * self.thickness_um
    }
}

fn sample_position<R: Rng + ?Sized>(region: &ModeRegion, rng: &mut R) -> (f64, f64) {
    let r = region.radius_um * rng.random::<f64>().sqrt();
    let z = region.thickness_um * rng.random::<f64>();
    (r, z)
}

fn sample_sd_sigma<R: Rng + ?Sized>(config: &CrystalConfig, rng: &mut R) -> f64 {
    let (lo, hi) = config.sd_sigma_range_mhz;
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

/// Emitter `id` of the ensemble drawn with `seed`; identical to element
/// `id` of [`sample_ensemble`].
pub fn sample_emitter(
    id: u64,
    config: &CrystalConfig,
    region: &ModeRegion,
    seed: u64,
) -> EmitterRecord {
    let mut rng = par::substream(seed, domain::ENSEMBLE, id);
    let occupied = draw_occupancy(config, &mut rng);
    let (shift, satellite) = codopant_shift(&occupied, config, &mut rng);
    finish_record(id, shift, satellite, config, region, &mut rng)
}

/// Spectral class and frequency offset (GHz) of emitter `id`, without
/// drawing its position; agrees with [`sample_emitter`].
pub fn sample_offset(id: u64, config: &CrystalConfig, seed: u64) -> (f64, SatelliteClass) {
    let mut rng = par::substream(seed, domain::ENSEMBLE, id);
    let occupied = draw_occupancy(config, &mut rng);
    let (shift, satellite) = codopant_shift(&occupied, config, &mut rng);
    (
        shift + lorentzian_sample(config.residual_lorentzian_fwhm, &mut rng),
        satellite,
    )
}

fn class_of(occupied: &[usize]) -> SatelliteClass {
    match occupied {
        [] => SatelliteClass::Main,
        [only] => SatelliteClass::for_shell(*only),
        _ => SatelliteClass::Other,
    }
}

/// Emitters with ids in `ids` whose spectral class passes `keep`; the
/// records equal the corresponding elements of [`sample_ensemble`].
pub fn sample_ensemble_where<F>(
    ids: std::ops::Range<u64>,
    config: &CrystalConfig,
    region: &ModeRegion,
    seed: u64,
    keep: F,
) -> Vec<EmitterRecord>
where
    F: Fn(SatelliteClass) -> bool + Sync,
{
    const CHUNK: u64 = 1 << 16;
    let n_chunks = (ids.end.saturating_sub(ids.start)).div_ceil(CHUNK) as usize;
    par::map_indexed(n_chunks, |c| {
        let lo = ids.start + c as u64 * CHUNK;
        let hi = (lo + CHUNK).min(ids.end);
        let mut out = Vec::new();
        for id in lo..hi {
            let mut rng = par::substream(seed, domain::ENSEMBLE, id);
            let occupied = draw_occupancy(config, &mut rng);
            if !keep(class_of(&occupied)) {
                continue;
            }
            let (shift, satellite) = codopant_shift(&occupied, config, &mut rng);
            out.push(finish_record(
                id, shift, satellite, config, region, &mut rng,
            ));
        }
        out
    })
    .into_iter()
    .flatten()
    .collect()
}

fn finish_record(
    id: u64,
    codopant: f64,
    satellite: SatelliteClass,
    config: &CrystalConfig,
    region: &ModeRegion,
    rng: &mut SimRng,
) -> EmitterRecord {
    let frequency_offset = codopant + lorentzian_sample(config.residual_lorentzian_fwhm, rng);
    let (radial_um, axial_um) = sample_position(region, rng);
    let sd_sigma = sample_sd_sigma(config, rng);
    let spin_class = if rng.random::<bool>() {
        SpinClass::I
    } else {
        SpinClass::II
    };
    EmitterRecord {
        id,
        frequency_offset,
        satellite,
        radial_um,
        axial_um,
        purcell: 0.0,
        sd_sigma,
        spin_class,
    }
}

/// Samples `n` independent emitters. Emitter `i` uses its own RNG
/// substream, so the result does not depend on how the work is split.
pub fn sample_ensemble(
    n: usize,
    config: &CrystalConfig,
    region: &ModeRegion,
    seed: u64,
) -> Vec<EmitterRecord> {
    const CHUNK: usize = 4096;
    par::map_indexed(n.div_ceil(CHUNK), |c| {
        (c * CHUNK..((c + 1) * CHUNK).min(n))
            .map(|i| sample_emitter(i as u64, config, region, seed))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Samples `n` emitters conditioned on belonging to `class`
/// (one occupied site of that shell, all other near sites empty).
pub fn sample_class(
    n: usize,
    class: SatelliteClass,
    config: &CrystalConfig,
    region: &ModeRegion,
    seed: u64,
    id_offset: u64,
) -> Result<Vec<EmitterRecord>> {
    let shift = match class {
        SatelliteClass::Main => 0.0,
        SatelliteClass::Other => {
            return Err(Error::param("class", "cannot condition on `other`"));
        }
        c => config
            .shell_shift(c)
            .ok_or_else(|| Error::param("class", format!("no shell labelled {}", c.as_str())))?,
    };
    Ok(par::map_indexed(n, |i| {
        let id = id_offset + i as u64;
        let mut rng = par::substream(seed, domain::ENSEMBLE, id);
        let codopant = shift
            + lorentzian_sample(config.continuum_lorentzian_fwhm(), &mut rng)
            + gaussian_sample(config.gaussian_fwhm, &mut rng);
        finish_record(id, codopant, class, config, region, &mut rng)
    }))
}

/// Weighted histogram of emitter frequency offsets (GHz).
pub fn spectrum_histogram<F>(
    emitters: &[EmitterRecord],
    bin_width: f64,
    weight: F,
) -> Result<Histogram>
where
    F: Fn(&EmitterRecord) -> f64,
{
    Histogram::from_weighted(
        bin_width,
        emitters.iter().map(|e| (e.frequency_offset, weight(e))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::SeedableRng;

    #[test]
    fn pure_gaussian_when_lorentzian_is_zero() {
        let p = VoigtParams::new(0.0, 0.27);
        let sigma = 0.27 / FWHM_PER_SIGMA;
        for x in [-0.5, -0.1, 0.0, 0.2, 0.9] {
            let g = (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt());
            assert!((voigt_density(x, &p).unwrap() - g).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_profile_is_an_error() {
        let p = VoigtParams::new(0.0, 0.0);
        assert!(matches!(
            voigt_density(0.0, &p),
            Err(Error::DegenerateProfile)
        ));
    }

    #[test]
    fn peak_matches_convolution_oracle() {
        let p = VoigtParams::new(0.14, 0.27);
        let oracle = oracle::voigt_by_convolution(0.0, 0.14, 0.27);
        let v = voigt_density(0.0, &p).unwrap();
        assert!(((v - oracle) / oracle).abs() < 1e-6, "{v} vs {oracle}");
    }

    #[test]
    fn fwhm_matches_oracle_bisection() {
        let oracle = oracle::fwhm_by_bisection(|x| oracle::voigt_by_convolution(x, 0.14, 0.27));
        // Frozen from the quadrature oracle: 0.35253 GHz.
        assert!((oracle - 0.35253).abs() < 1e-4, "oracle fwhm {oracle}");
        let fwhm = voigt_fwhm(0.14, 0.27).unwrap();
        assert!((fwhm - oracle).abs() < 1e-5, "{fwhm} vs {oracle}");
    }

    #[test]
    fn no_codopant_gives_pure_gaussian_shift() {
        let cfg = CrystalConfig {
            europium_concentration: 0.0,
            ..CrystalConfig::default()
        };
        let mut rng = SimRng::seed_from_u64(3);
        let occ = draw_occupancy(&cfg, &mut rng);
        assert!(occ.is_empty());
        let (_, class) = codopant_shift(&occ, &cfg, &mut rng);
        assert_eq!(class, SatelliteClass::Main);
        assert_eq!(cfg.continuum_lorentzian_fwhm(), 0.0);
    }

    #[test]
    fn class_labels_follow_occupancy() {
        let cfg = CrystalConfig::default();
        let mut rng = SimRng::seed_from_u64(1);
        assert_eq!(codopant_shift(&[3], &cfg, &mut rng).1, SatelliteClass::D);
        assert_eq!(codopant_shift(&[0], &cfg, &mut rng).1, SatelliteClass::A);
        assert_eq!(
            codopant_shift(&[1, 3], &cfg, &mut rng).1,
            SatelliteClass::Other
        );
        assert_eq!(
            codopant_shift(&[2, 2], &cfg, &mut rng).1,
            SatelliteClass::Other
        );
    }

    #[test]
    fn single_site_shift_is_added() {
        let cfg = CrystalConfig {
            lorentzian_per_concentration: 0.0,
            gaussian_fwhm: 0.0,
            ..CrystalConfig::default()
        };
        let mut rng = SimRng::seed_from_u64(1);
        assert_eq!(codopant_shift(&[3], &cfg, &mut rng).0, 1.5);
    }

    #[test]
    fn class_probabilities_sum_to_one() {
        let cfg = CrystalConfig::default();
        let total: f64 = [
            SatelliteClass::Main,
            SatelliteClass::A,
            SatelliteClass::B,
            SatelliteClass::C,
            SatelliteClass::D,
            SatelliteClass::Other,
        ]
        .iter()
        .map(|&c| cfg.class_probability(c))
        .sum();
        assert!((total - 1.0).abs() < 1e-12);
        let ratio =
            cfg.class_probability(SatelliteClass::B) / cfg.class_probability(SatelliteClass::A);
        assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_ensemble() {
        let region = ModeRegion {
            radius_um: 7.6,
            thickness_um: 10.0,
        };
        assert!(sample_ensemble(0, &CrystalConfig::default(), &region, 1).is_empty());
        let h = spectrum_histogram(&[], 0.02, |_| 1.0).unwrap();
        assert!(h.is_empty());
    }

    #[test]
    fn single_emitter_histogram() {
        let region = ModeRegion {
            radius_um: 7.6,
            thickness_um: 10.0,
        };
        let mut e = sample_ensemble(1, &CrystalConfig::default(), &region, 1);
        e[0].frequency_offset = 0.0;
        let h = spectrum_histogram(&e, 0.02, |_| 1.0).unwrap();
        assert_eq!(h.bins, vec![(0, 1.0)]);
    }

    #[test]
    fn ensemble_fields_are_in_range() {
        let cfg = CrystalConfig::default();
        let region = ModeRegion {
            radius_um: 7.6,
            thickness_um: 10.0,
        };
        let e = sample_ensemble(5000, &cfg, &region, 9);
        assert_eq!(e.len(), 5000);
        for (i, r) in e.iter().enumerate() {
            assert_eq!(r.id, i as u64);
            assert!(r.radial_um >= 0.0 && r.radial_um <= 7.6);
            assert!(r.axial_um >= 0.0 && r.axial_um <= 10.0);
            assert!(r.sd_sigma >= 0.095 && r.sd_sigma <= 0.38);
            assert!(r.purcell == 0.0);
        }
        let n_i = e.iter().filter(|r| r.spin_class == SpinClass::I).count();
        assert!((n_i as f64 - 2500.0).abs() < 4.0 * 2500f64.sqrt());
    }

    #[test]
    fn conditioned_class_sampling_sets_shift() {
        let cfg = CrystalConfig::default();
        let region = ModeRegion {
            radius_um: 7.6,
            thickness_um: 10.0,
        };
        let e = sample_class(2000, SatelliteClass::D, &cfg, &region, 5, 0).unwrap();
        let mean = e.iter().map(|r| r.frequency_offset).sum::<f64>() / e.len() as f64;
        // Lorentzian tails make the mean noisy; the median is robust.
        let mut offs: Vec<f64> = e.iter().map(|r| r.frequency_offset).collect();
        offs.sort_by(f64::total_cmp);
        assert!((offs[1000] - 1.5).abs() < 0.02, "median {}", offs[1000]);
        assert!(mean.is_finite());
        assert!(sample_class(1, SatelliteClass::Other, &cfg, &region, 5, 0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = CrystalConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.shells[1].shift_ghz = cfg.shells[0].shift_ghz;
        assert!(cfg.validate().is_err());
        let cfg = CrystalConfig {
            europium_concentration: 1.0,
            ..CrystalConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn filtered_and_offset_sampling_agree_with_full_ensemble() {
        let cfg = CrystalConfig {
            europium_concentration: 0.05,
            ..Default::default()
        };
        let region = ModeRegion {
            radius_um: 8.0,
            thickness_um: 10.0,
        };
        let all = sample_ensemble(3000, &cfg, &region, 11);
        let sats = sample_ensemble_where(0..3000, &cfg, &region, 11, |c| c != SatelliteClass::Main);
        let expected: Vec<_> = all
            .iter()
            .filter(|e| e.satellite != SatelliteClass::Main)
            .cloned()
            .collect();
        assert_eq!(sats, expected);
        for e in all.iter().take(50) {
            assert_eq!(
                sample_offset(e.id, &cfg, 11),
                (e.frequency_offset, e.satellite)
            );
        }
    }
}
