// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Swept-cavity fluorescence spectrum of the ensemble and the satellite
//! census.

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{csv_table, ExperimentConfig, Outcome};
use crate::cavity::{cavity_line_filter, CavityMode};
use crate::crystal::{self, voigt_profile, SatelliteClass};
use crate::fit::{self, FitOptions, FitResult};
use crate::histogram::Histogram;
use crate::par::{self, domain};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub n_emitters: usize,
    pub step_mhz: f64,
    pub half_range_ghz: f64,
    /// Laser sweep span at each cavity position.
    pub sweep_mhz: f64,
    pub repetitions: u32,
    /// Excitation probability of an emitter inside the sweep.
    pub excitation_probability: f64,
    /// Half width of the window used for the Voigt fit.
    pub fit_half_width_ghz: f64,
    /// Half width of the window used for each satellite fit.
    pub satellite_half_width_ghz: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            n_emitters: 1_000_000,
            step_mhz: 20.0,
            half_range_ghz: 2.5,
            sweep_mhz: 100.0,
            repetitions: 200,
            excitation_probability: 0.9,
            fit_half_width_ghz: 0.6,
            satellite_half_width_ghz: 0.35,
        }
    }
}

impl SpectrumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_mhz > 0.0 && self.half_range_ghz > 0.0 && self.sweep_mhz >= 0.0) {
            return Err(Error::param("step_mhz", "scan grid must be positive"));
        }
        if self.repetitions == 0 {
            return Err(Error::param("repetitions", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.excitation_probability) {
            return Err(Error::param("excitation_probability", "must lie in [0, 1]"));
        }
        if !(self.fit_half_width_ghz > 0.0 && self.satellite_half_width_ghz > 0.0) {
            return Err(Error::param("fit_half_width_ghz", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SatelliteScanConfig {
    pub n_draws: u64,
    pub bin_ghz: f64,
    /// Offsets beyond this distance from the line centre are counted but
    /// not histogrammed.
    pub half_range_ghz: f64,
}

impl Default for SatelliteScanConfig {
    fn default() -> Self {
        SatelliteScanConfig {
            n_draws: 10_000_000,
            bin_ghz: 0.02,
            half_range_ghz: 2.5,
        }
    }
}

/// Detected photons per pulse from one emitter of Purcell factor `p`
/// excited with probability `p_exc`, counted in a gate of `gate_us`.
pub(crate) fn emitter_signal(
    cfg: &ExperimentConfig,
    purcell: f64,
    p_exc: f64,
    gate_us: f64,
) -> f64 {
    let tau = cfg.cavity.bulk_lifetime_ms * 1e3 / (1.0 + purcell);
    let gate = -(-gate_us / tau).exp_m1();
    p_exc * purcell / (1.0 + purcell)
        * gate
        * cfg
            .detector
            .click_probability(cfg.cavity.outcoupling_efficiency)
}

fn scan_grid(sc: &SpectrumConfig) -> Vec<f64> {
    let half_steps = (sc.half_range_ghz * 1e3 / sc.step_mhz).round() as i64;
    (-half_steps..=half_steps)
        .map(|k| k as f64 * sc.step_mhz * 1e-3)
        .collect()
}

/// Fluorescence against cavity/laser frequency.
///
/// At each scan position the laser sweeps `sweep_mhz` around the cavity
/// resonance; every emitter inside the sweep is excited with
/// `excitation_probability` and emits with its Purcell factor reduced by
/// the cavity line at its detuning. Counts per position are Poisson over
/// all repetitions, plus dark counts. The spectrum is also reported in
/// units of the mean single-emitter signal.
pub fn inhomogeneous_scan(cfg: &ExperimentConfig, seed: u64, _oracle: bool) -> Result<Outcome> {
    let sc = &cfg.spectrum;
    sc.validate()?;
    let mode = CavityMode::new(&cfg.cavity)?;
    let region = mode.sampling_region();
    let grid = scan_grid(sc);
    let step = sc.step_mhz * 1e-3;
    let lo = grid[0];
    let half_sweep = 0.5 * sc.sweep_mhz * 1e-3;
    let p_exc = sc.excitation_probability;
    let gate_us = cfg.detector.gate_window_us;

    const CHUNK: usize = 1 << 15;
    let chunks = par::chunk_ranges(sc.n_emitters, CHUNK);
    let partial = par::map_indexed(chunks.len(), |c| {
        let mut sums = vec![0.0; grid.len()];
        let mut single = 0.0;
        let (mut m1, mut m2) = (0.0, 0.0);
        for id in chunks[c].clone() {
            let e = crystal::sample_emitter(id as u64, &cfg.crystal, &region, seed);
            let p = mode.purcell_at(e.radial_um, e.axial_um);
            single += emitter_signal(cfg, p, p_exc, gate_us);
            let f = e.frequency_offset;
            let k_lo = ((f - half_sweep - lo) / step).ceil().max(0.0) as usize;
            let k_hi = ((f + half_sweep - lo) / step).floor();
            if k_hi < 0.0 {
                continue;
            }
            let mut total = 0.0;
            for (k, s) in sums
                .iter_mut()
                .enumerate()
                .take((k_hi as usize + 1).min(grid.len()))
                .skip(k_lo)
            {
                let detuning_mhz = (f - grid[k]) * 1e3;
                let v = emitter_signal(
                    cfg,
                    p * cavity_line_filter(detuning_mhz, &cfg.cavity),
                    p_exc,
                    gate_us,
                );
                *s += v;
                total += v;
            }
            m1 += total;
            m2 += total * total;
        }
        (sums, single, m1, m2)
    });
    let mut expected = vec![0.0; grid.len()];
    let mut single = 0.0;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (s, one, a, b) in partial {
        m1 += a;
        m2 += b;
        for (a, b) in expected.iter_mut().zip(s) {
            *a += b;
        }
        single += one;
    }
    let mean_single = if sc.n_emitters > 0 {
        single / sc.n_emitters as f64
    } else {
        0.0
    };
    let reps = sc.repetitions as f64;
    // Photons per emitter, second moment over first: the variance inflation
    // from the random number of emitters behind each scan point.
    let granularity = if m1 > 0.0 { reps * m2 / m1 } else { 0.0 };
    let darks = cfg.detector.darks_per_window() * reps;
    let counts: Vec<f64> = par::map_indexed(grid.len(), |k| {
        let mean = expected[k] * reps + darks;
        if mean > 0.0 {
            let mut rng = par::substream(seed, domain::SCAN, k as u64);
            Poisson::new(mean).unwrap().sample(&mut rng)
        } else {
            0.0
        }
    });

    let unit = (mean_single * reps).max(f64::MIN_POSITIVE);
    let mut out = Outcome::new("spectrum");
    out.file(
        "spectrum.csv",
        csv_table(
            &["frequency_ghz", "counts", "normalized"],
            grid.iter()
                .zip(&counts)
                .map(|(&f, &c)| vec![f, c, c / unit]),
        ),
    );
    out.metric("n_emitters", sc.n_emitters as f64);
    out.metric("mean_single_emitter_signal", mean_single);
    out.metric("dark_counts_per_point", darks);
    let floor = (darks / unit).max(1.0 / unit);
    let peak = counts.iter().cloned().fold(0.0, f64::max) / unit;
    out.metric("dynamic_range_decades", (peak / floor).log10());

    let centre: Vec<(f64, f64)> = grid
        .iter()
        .zip(&counts)
        .filter(|(f, _)| f.abs() <= sc.fit_half_width_ghz)
        .map(|(&f, &c)| (f, (c - darks).max(0.0)))
        .collect();
    let voigt = match fit::fit_voigt(&centre) {
        Ok(v) => v,
        Err(Error::InsufficientStatistics(why)) => {
            out.note("voigt_fit", format!("skipped: {why}"));
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    out.metric("lorentzian_fwhm_ghz", voigt.value("lorentzian_fwhm"));
    out.metric(
        "lorentzian_fwhm_stderr_ghz",
        voigt.stderr("lorentzian_fwhm"),
    );
    out.metric("gaussian_fwhm_ghz", voigt.value("gaussian_fwhm"));
    out.metric("gaussian_fwhm_stderr_ghz", voigt.stderr("gaussian_fwhm"));
    out.metric("center_ghz", voigt.value("center"));
    if let Ok(lor) = fit::fit_lorentzian(&centre) {
        out.metric("lorentzian_only_residual", lor.residual_norm);
        out.metric("voigt_residual", voigt.residual_norm);
        out.fit("lorentzian_only", lor);
    }

    let all: Vec<(f64, f64)> = grid.iter().cloned().zip(counts.iter().cloned()).collect();
    for class in SatelliteClass::SATELLITES {
        let Some(shift) = cfg.crystal.shell_shift(class) else {
            continue;
        };
        let name = class.as_str();
        match satellite_ratio(
            &all,
            &voigt,
            shift,
            darks,
            sc.satellite_half_width_ghz,
            granularity,
        ) {
            Ok((fit, sigma)) => {
                let expected = cfg.crystal.class_probability(class)
                    / cfg.crystal.class_probability(SatelliteClass::Main);
                let r = fit.value("ratio");
                out.metric(&format!("ratio_{name}"), r);
                out.metric(&format!("ratio_{name}_stderr"), sigma);
                out.metric(&format!("ratio_{name}_expected"), expected);
                out.metric(&format!("ratio_{name}_z"), (r - expected) / sigma);
                out.fit(&format!("satellite_{name}"), fit);
            }
            Err(e) => out.note(&format!("satellite_{name}"), e.to_string()),
        }
    }
    out.fit("voigt", voigt);
    Ok(out)
}

/// Amplitude ratio of the satellite at `shift` to the main line, fitting
/// `A * (V(x) + r V(x - shift)) + darks` with the main-line Voigt `V` of
/// fitted area `A`.
///
/// The returned std propagates the count variance `y + g (y - darks)`
/// through the linear estimator, where `g` is the photon granularity of one
/// emitter; the fit's own stderr treats points as independent and misses
/// the emitter-number noise shared by neighbouring scan points.
fn satellite_ratio(
    points: &[(f64, f64)],
    main: &FitResult,
    shift: f64,
    darks: f64,
    half_width: f64,
    granularity: f64,
) -> Result<(FitResult, f64)> {
    let (c0, l, g) = (
        main.value("center"),
        main.value("lorentzian_fwhm"),
        main.value("gaussian_fwhm"),
    );
    let window: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|(x, _)| (x - c0 - shift).abs() <= half_width)
        .map(|&(x, y)| (x, y, 1.0 / y.max(1.0)))
        .collect();
    let v = |x: f64| voigt_profile(x - c0, l, g);
    let area = main.value("area");
    let fit = fit::least_squares(
        |x, p| area * (v(x) + p[0] * v(x - shift)) + darks,
        &window,
        &["ratio"],
        &[0.0],
        &FitOptions::default(),
    )?;
    let norm: f64 = window
        .iter()
        .map(|&(x, _, w)| w * (area * v(x - shift)).powi(2))
        .sum();
    let var: f64 = window
        .iter()
        .map(|&(x, y, w)| {
            let a = w * area * v(x - shift) / norm;
            a * a * (y + granularity * (y - darks).max(0.0))
        })
        .sum();
    Ok((fit, var.sqrt()))
}

/// Draws spectral classes and offsets for `n_draws` emitters and compares
/// the satellite populations with the binomial prediction.
pub fn satellite_scan(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let sc = &cfg.satellite_scan;
    if sc.n_draws == 0 || !(sc.bin_ghz > 0.0 && sc.half_range_ghz > sc.bin_ghz) {
        return Err(Error::param(
            "satellite_scan",
            "need n_draws > 0 and 0 < bin_ghz < half_range_ghz",
        ));
    }
    const CHUNK: u64 = 1 << 16;
    let n_chunks = sc.n_draws.div_ceil(CHUNK) as usize;
    let classes = [
        SatelliteClass::Main,
        SatelliteClass::A,
        SatelliteClass::B,
        SatelliteClass::C,
        SatelliteClass::D,
        SatelliteClass::Other,
    ];
    let seed = par::derive_seed(seed, domain::SATELLITE_SCAN);
    let parts = par::map_indexed(n_chunks, |c| {
        let lo = c as u64 * CHUNK;
        let hi = (lo + CHUNK).min(sc.n_draws);
        let mut counts = [0u64; 6];
        let mut offsets = Vec::with_capacity((hi - lo) as usize);
        for id in lo..hi {
            let (f, class) = crystal::sample_offset(id, &cfg.crystal, seed);
            counts[classes.iter().position(|&k| k == class).unwrap()] += 1;
            if f.abs() <= sc.half_range_ghz {
                offsets.push(f);
            }
        }
        (counts, Histogram::from_values(sc.bin_ghz, offsets))
    });
    let mut counts = [0u64; 6];
    let mut hist = Histogram::empty(sc.bin_ghz);
    for (c, h) in parts {
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
        hist = hist.merge(&h?)?;
    }
    let mut out = Outcome::new("satellite-scan");
    out.file(
        "satellite_histogram.csv",
        hist.to_csv("frequency_ghz", "count"),
    );
    let n = sc.n_draws as f64;
    let main = counts[0] as f64;
    let p_main = cfg.crystal.class_probability(SatelliteClass::Main);
    out.metric("count_main", main);
    out.metric("histogrammed_fraction", hist.total() / n);
    let mut rows = Vec::new();
    for (i, class) in classes.iter().enumerate().skip(1) {
        let name = class.as_str();
        let k = counts[i] as f64;
        let p = cfg.crystal.class_probability(*class);
        out.metric(&format!("count_{name}"), k);
        out.metric(
            &format!("count_{name}_z"),
            (k - n * p) / (n * p * (1.0 - p)).sqrt().max(f64::MIN_POSITIVE),
        );
        if *class == SatelliteClass::Other || main == 0.0 {
            continue;
        }
        let ratio = k / main;
        let expected = p / p_main;
        // Delta-method std of a ratio of multinomial counts.
        let std = expected * (1.0 / (n * p) + 1.0 / (n * p_main)).sqrt();
        let sites = cfg
            .crystal
            .shells
            .iter()
            .enumerate()
            .filter(|(j, _)| SatelliteClass::for_shell(*j) == *class)
            .map(|(_, s)| s.site_count)
            .sum::<u32>() as f64;
        out.metric(&format!("ratio_{name}"), ratio);
        out.metric(&format!("ratio_{name}_expected"), expected);
        out.metric(
            &format!("ratio_{name}_concentration_times_sites"),
            cfg.crystal.europium_concentration * sites,
        );
        out.metric(&format!("ratio_{name}_std"), std);
        out.metric(&format!("ratio_{name}_z"), (ratio - expected) / std);
        rows.push(vec![i as f64, k, ratio, expected, std]);
    }
    out.file(
        "satellite_ratios.csv",
        csv_table(&["class_index", "count", "ratio", "expected", "std"], rows),
    );
    Ok(out)
}
