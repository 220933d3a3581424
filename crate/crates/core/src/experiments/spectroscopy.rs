// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! High-resolution single-emitter scans: spectral-diffusion linewidths,
//! Zeeman-resolved spectra and the pump-probe splitting measurement.

use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::spectrum::emitter_signal;
use super::{csv_table, thermal_low_fraction, ExperimentConfig, Outcome};
use crate::cavity::CavityMode;
use crate::crystal::{self, EmitterRecord, SatelliteClass, SpinClass};
use crate::fit::{self, FitOptions, FitResult};
use crate::par::{self, domain, SimRng};
use crate::spin::{self, compare_to_holes, SpinParams};
use crate::{Error, Result, FWHM_PER_SIGMA};

/// Sweeps per work item of [`sweep_average`].
const SWEEP_CHUNK: u64 = 1 << 16;

/// One spectral line seen by a scan: centre (MHz), coupling to the
/// spectral-diffusion offset, and relative brightness.
#[derive(Clone, Copy, Debug)]
struct Line {
    center: f64,
    noise_multiplier: f64,
    weight: f64,
}

/// Scan grid `lo + k * step` for `k < n`.
#[derive(Clone, Copy, Debug)]
struct Grid {
    lo: f64,
    step: f64,
    n: usize,
}

impl Grid {
    fn centered(half_range: f64, step: f64) -> Self {
        let half = (half_range / step).round() as i64;
        Grid {
            lo: -(half as f64) * step,
            step,
            n: (2 * half + 1) as usize,
        }
    }

    fn x(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step
    }

    fn index(&self, f: f64) -> Option<usize> {
        let k = ((f - self.lo) / self.step).round();
        (k >= 0.0 && (k as usize) < self.n).then_some(k as usize)
    }
}

/// Excitations per grid point summed over `n_sweeps` fast sweeps.
///
/// Each sweep takes one exact OU step of `sweep_us` and then visits every
/// point once; the laser covers one grid step per point, so a line is
/// excited (with weight times `p_exc`) at the point nearest to its
/// instantaneous frequency. Work items start from the stationary law.
#[allow(clippy::too_many_arguments)]
fn sweep_average(
    grid: Grid,
    lines: &[Line],
    sigma: f64,
    tau_us: f64,
    sweep_us: f64,
    n_sweeps: u64,
    p_exc: f64,
    seed: u64,
) -> Vec<f64> {
    let mu = (-sweep_us / tau_us).exp();
    let kick = sigma * (-(-2.0 * sweep_us / tau_us).exp_m1()).sqrt();
    let n_chunks = n_sweeps.div_ceil(SWEEP_CHUNK) as usize;
    let parts = par::map_indexed(n_chunks, |c| {
        let mut rng = par::substream(seed, domain::SPECTRAL_DIFFUSION, c as u64);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let len = SWEEP_CHUNK.min(n_sweeps - c as u64 * SWEEP_CHUNK);
        let mut acc = vec![0.0; grid.n];
        let mut x = sigma * normal.sample(&mut rng);
        for _ in 0..len {
            x = mu * x + kick * normal.sample(&mut rng);
            for l in lines {
                if let Some(k) = grid.index(l.center + l.noise_multiplier * x) {
                    acc[k] += l.weight * p_exc;
                }
            }
        }
        acc
    });
    let mut total = vec![0.0; grid.n];
    for p in parts {
        for (a, b) in total.iter_mut().zip(p) {
            *a += b;
        }
    }
    total
}

/// Poisson counts for expected excitations `acc`, detection probability
/// `click` per excitation and `darks` per point.
fn draw_counts(acc: &[f64], click: f64, darks: f64, rng: &mut SimRng) -> Vec<f64> {
    acc.iter()
        .map(|&a| {
            let m = a * click + darks;
            if m > 0.0 {
                Poisson::new(m).unwrap().sample(rng)
            } else {
                0.0
            }
        })
        .collect()
}

fn gaussian_fit(grid: Grid, counts: &[f64], window: Option<(f64, f64)>) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = (0..grid.n)
        .map(|k| (grid.x(k), counts[k]))
        .filter(|(x, _)| window.is_none_or(|(a, b)| *x >= a && *x <= b))
        .collect();
    fit::fit_gaussian_peak(&fit::poisson_weighted(&pts))
}

fn gauss_on(x: f64, background: f64, p: &[f64]) -> f64 {
    background + p[2] * (-4.0 * std::f64::consts::LN_2 * ((x - p[0]) / p[1]).powi(2)).exp()
}

/// Gaussian fit with the background held at the calibrated dark level.
/// Weights are refreshed twice from the model (Pearson chi-square), which
/// removes the low-count bias of data-derived Poisson weights.
fn gaussian_fit_on_background(grid: Grid, counts: &[f64], background: f64) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = (0..grid.n).map(|k| (grid.x(k), counts[k])).collect();
    let free = fit::fit_gaussian_peak(&fit::poisson_weighted(&pts))?;
    let mut init = [
        free.value("center"),
        free.value("fwhm"),
        free.value("amplitude"),
    ];
    if !free.converged || !init.iter().all(|v| v.is_finite()) || init[1] <= 0.0 {
        let signal: Vec<f64> = counts.iter().map(|c| (c - background).max(0.0)).collect();
        let total: f64 = signal.iter().sum::<f64>().max(1.0);
        let mean = (0..grid.n).map(|k| grid.x(k) * signal[k]).sum::<f64>() / total;
        let var = (0..grid.n)
            .map(|k| (grid.x(k) - mean).powi(2) * signal[k])
            .sum::<f64>()
            / total;
        let peak = signal.iter().cloned().fold(0.0, f64::max);
        init = [mean, FWHM_PER_SIGMA * var.sqrt().max(grid.step), peak];
    }
    let names = ["center", "fwhm", "amplitude"];
    let mut weights: Vec<f64> = counts.iter().map(|c| 1.0 / c.max(1.0)).collect();
    let mut f = None;
    for _ in 0..3 {
        let data: Vec<fit::Point> = pts
            .iter()
            .zip(&weights)
            .map(|(&(x, y), &w)| (x, y, w))
            .collect();
        let r = fit::least_squares(
            |x, p| gauss_on(x, background, p),
            &data,
            &names,
            &init,
            &FitOptions::default(),
        )?;
        if !r.converged {
            return Ok(r);
        }
        init = [
            r.value("center"),
            r.value("fwhm").abs(),
            r.value("amplitude"),
        ];
        weights = pts
            .iter()
            .map(|&(x, _)| 1.0 / gauss_on(x, background, &init).max(0.5))
            .collect();
        f = Some(r);
    }
    let mut f = f.expect("at least one pass");
    f.set("fwhm", init[1]);
    Ok(f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdConfig {
    pub n_emitters: usize,
    pub satellite: SatelliteClass,
    pub min_purcell: f64,
    pub frame_minutes: f64,
    pub scan_half_range_mhz: f64,
    pub scan_points: usize,
    pub pulse_period_us: f64,
    pub excitation_probability: f64,
    /// Overrides the per-emitter spectral-diffusion std when set.
    pub fixed_sd_sigma_mhz: Option<f64>,
    pub drift_emitters: usize,
    pub drift_frames: usize,
    pub drift_frame_minutes: f64,
    pub histogram_bin_mhz: f64,
    pub band_mhz: (f64, f64),
}

impl Default for SdConfig {
    fn default() -> Self {
        SdConfig {
            n_emitters: 400,
            satellite: SatelliteClass::D,
            min_purcell: 30.0,
            frame_minutes: 10.0,
            scan_half_range_mhz: 1.5,
            scan_points: 61,
            pulse_period_us: 260.0,
            excitation_probability: 0.9,
            fixed_sd_sigma_mhz: None,
            drift_emitters: 4,
            drift_frames: 6,
            drift_frame_minutes: 20.0,
            histogram_bin_mhz: 0.05,
            band_mhz: (0.2, 1.0),
        }
    }
}

impl SdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scan_points < 5 || !(self.scan_half_range_mhz > 0.0) {
            return Err(Error::param(
                "scan_points",
                "need at least 5 points over a positive range",
            ));
        }
        if !(self.frame_minutes > 0.0
            && self.pulse_period_us > 0.0
            && self.drift_frame_minutes > 0.0)
        {
            return Err(Error::param("frame_minutes", "durations must be positive"));
        }
        if !(0.0..=1.0).contains(&self.excitation_probability) {
            return Err(Error::param("excitation_probability", "must lie in [0, 1]"));
        }
        if self.fixed_sd_sigma_mhz.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::param("fixed_sd_sigma_mhz", "must be positive"));
        }
        if !(self.histogram_bin_mhz > 0.0 && self.band_mhz.0 < self.band_mhz.1) {
            return Err(Error::param(
                "band_mhz",
                "need a positive bin and an ordered band",
            ));
        }
        Ok(())
    }

    fn grid(&self) -> Grid {
        let step = 2.0 * self.scan_half_range_mhz / (self.scan_points - 1) as f64;
        Grid::centered(self.scan_half_range_mhz, step)
    }

    fn sweep_us(&self) -> f64 {
        self.scan_points as f64 * self.pulse_period_us
    }

    fn sweeps(&self, minutes: f64) -> u64 {
        ((minutes * 60e6 / self.sweep_us()).round() as u64).max(1)
    }
}

/// `n` emitters of `class` with Purcell factor above `min_purcell`, drawn
/// in batches from the conditional class distribution.
pub(crate) fn bright_emitters(
    cfg: &ExperimentConfig,
    class: SatelliteClass,
    min_purcell: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<EmitterRecord>> {
    let mode = CavityMode::new(&cfg.cavity)?;
    let region = mode.sampling_region();
    const BATCH: usize = 4096;
    let mut out = Vec::with_capacity(n);
    let mut offset = 0u64;
    while out.len() < n {
        if offset > 1 << 32 {
            return Err(Error::InsufficientStatistics(format!(
                "no emitters above P = {min_purcell} in the mode"
            )));
        }
        let batch = crystal::sample_class(BATCH, class, &cfg.crystal, &region, seed, offset)?;
        offset += BATCH as u64;
        for mut e in batch {
            e.purcell = mode.purcell_at(e.radial_um, e.axial_um);
            if e.purcell > min_purcell && out.len() < n {
                out.push(e);
            }
        }
    }
    Ok(out)
}

/// Spectral-diffusion linewidths of bright emitters from Gaussian fits to
/// frame-averaged high-resolution scans, and the stability of the line
/// centres over consecutive frames.
pub fn spectral_diffusion(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let sd = &cfg.sd;
    sd.validate()?;
    let emitters = bright_emitters(
        cfg,
        sd.satellite,
        sd.min_purcell,
        sd.n_emitters,
        par::derive_seed(seed, 1),
    )?;
    let grid = sd.grid();
    let tau = cfg.noise.slow_tau_us();
    let gate = cfg.detector.gate_window_us;
    let n_sweeps = sd.sweeps(sd.frame_minutes);
    let darks = n_sweeps as f64 * cfg.detector.darks_per_window();
    let sigma_of = |e: &EmitterRecord| sd.fixed_sd_sigma_mhz.unwrap_or(e.sd_sigma);
    let lines = [Line {
        center: 0.0,
        noise_multiplier: 1.0,
        weight: 1.0,
    }];

    let results: Vec<Option<FitResult>> = emitters
        .iter()
        .map(|e| {
            let s = par::derive_seed(seed, 1000 + e.id);
            let acc = sweep_average(
                grid,
                &lines,
                sigma_of(e),
                tau,
                sd.sweep_us(),
                n_sweeps,
                sd.excitation_probability,
                s,
            );
            let mut rng = par::substream(s, domain::SCAN, 0);
            let counts = draw_counts(
                &acc,
                emitter_signal(cfg, e.purcell, 1.0, gate),
                darks,
                &mut rng,
            );
            gaussian_fit_on_background(grid, &counts, darks)
                .ok()
                .filter(|f| f.converged)
        })
        .collect();

    let mut out = Outcome::new("sd");
    let (lo, hi) = sd.band_mhz;
    let mut rows = Vec::new();
    let mut widths = Vec::new();
    let mut outside = 0usize;
    let mut failed = 0usize;
    for (e, r) in emitters.iter().zip(&results) {
        let truth = FWHM_PER_SIGMA * sigma_of(e);
        match r {
            Some(f) => {
                let w = f.value("fwhm");
                if !(lo..=hi).contains(&w) {
                    outside += 1;
                }
                widths.push(w);
                rows.push(vec![e.id as f64, e.purcell, truth, w, f.stderr("fwhm")]);
            }
            None => {
                failed += 1;
                rows.push(vec![e.id as f64, e.purcell, truth, f64::NAN, f64::NAN]);
            }
        }
    }
    let n = emitters.len().max(1) as f64;
    out.file(
        "sd_linewidths.csv",
        csv_table(
            &[
                "emitter_id",
                "purcell",
                "true_fwhm_mhz",
                "fitted_fwhm_mhz",
                "fwhm_stderr_mhz",
            ],
            rows,
        ),
    );
    let hist = crate::Histogram::from_values(sd.histogram_bin_mhz, widths.iter().cloned())?;
    out.file("sd_histogram.csv", hist.to_csv("fwhm_mhz", "emitters"));
    out.metric("n_emitters", emitters.len() as f64);
    out.metric("sweeps_per_frame", n_sweeps as f64);
    out.metric("failed_fits", failed as f64);
    out.metric("outlier_fraction", (outside + failed) as f64 / n);
    let true_outside = emitters
        .iter()
        .filter(|e| !(lo..=hi).contains(&(FWHM_PER_SIGMA * sigma_of(e))))
        .count();
    out.metric("true_outlier_fraction", true_outside as f64 / n);
    if !widths.is_empty() {
        let mean = widths.iter().sum::<f64>() / widths.len() as f64;
        out.metric("mean_fwhm_mhz", mean);
        out.metric(
            "min_fwhm_mhz",
            widths.iter().cloned().fold(f64::INFINITY, f64::min),
        );
        out.metric(
            "max_fwhm_mhz",
            widths.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
    }
    if failed > 0 {
        out.unconverged.push(format!("{failed} linewidth fits"));
    }
    drift_frames(cfg, &emitters, seed, &mut out)?;
    Ok(out)
}

/// Consecutive frames of the first few emitters with one continuous
/// spectral-diffusion trajectory; reports whether every frame shows the
/// line and how far the fitted centres wander.
fn drift_frames(
    cfg: &ExperimentConfig,
    emitters: &[EmitterRecord],
    seed: u64,
    out: &mut Outcome,
) -> Result<()> {
    let sd = &cfg.sd;
    if sd.drift_emitters == 0 || sd.drift_frames == 0 {
        return Ok(());
    }
    let grid = sd.grid();
    let tau = cfg.noise.slow_tau_us();
    let sweeps = sd.sweeps(sd.drift_frame_minutes);
    let darks = sweeps as f64 * cfg.detector.darks_per_window();
    let mu = (-sd.sweep_us() / tau).exp();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut with_signal = 0usize;
    let mut frames = 0usize;
    let (mut ss, mut ou_ss, mut expected_ss) = (0.0, 0.0, 0.0);
    let mut rows = Vec::new();
    for e in emitters.iter().take(sd.drift_emitters) {
        let sigma = sd.fixed_sd_sigma_mhz.unwrap_or(e.sd_sigma);
        let kick = sigma * (1.0 - mu * mu).sqrt();
        let click = emitter_signal(cfg, e.purcell, 1.0, cfg.detector.gate_window_us);
        let mut rng = par::substream(seed, domain::SPECTRAL_DIFFUSION, (1 << 40) + e.id);
        let mut x = sigma * normal.sample(&mut rng);
        let mut centres = Vec::new();
        let mut errs = Vec::new();
        for frame in 0..sd.drift_frames {
            let mut acc = vec![0.0; grid.n];
            for _ in 0..sweeps {
                x = mu * x + kick * normal.sample(&mut rng);
                if let Some(k) = grid.index(x) {
                    acc[k] += sd.excitation_probability;
                }
            }
            let counts = draw_counts(&acc, click, darks, &mut rng);
            frames += 1;
            if let Ok(f) = gaussian_fit_on_background(grid, &counts, darks) {
                let amp = f.value("amplitude");
                if f.converged && amp > 3.0 * f.stderr("amplitude") {
                    with_signal += 1;
                    centres.push(f.value("center"));
                    errs.push(f.stderr("center").powi(2));
                    rows.push(vec![
                        e.id as f64,
                        frame as f64,
                        f.value("center"),
                        f.value("fwhm"),
                    ]);
                }
            }
        }
        if centres.len() > 1 {
            let m = centres.iter().sum::<f64>() / centres.len() as f64;
            ss += centres.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (centres.len() - 1) as f64;
            // Variance of an OU time average over a frame of length T.
            let t = sd.drift_frame_minutes * 60e6;
            let r = t / tau;
            let ou = 2.0 * sigma * sigma * (r - 1.0 + (-r).exp()) / (r * r);
            ou_ss += ou;
            expected_ss += ou + errs.iter().sum::<f64>() / errs.len() as f64;
        }
    }
    out.file(
        "sd_drift.csv",
        csv_table(&["emitter_id", "frame", "center_mhz", "fwhm_mhz"], rows),
    );
    out.metric(
        "frames_with_signal_fraction",
        with_signal as f64 / frames as f64,
    );
    let k = sd.drift_emitters.min(emitters.len()).max(1) as f64;
    out.metric("drift_center_rms_mhz", (ss / k).sqrt());
    out.metric("drift_center_ou_rms_mhz", (ou_ss / k).sqrt());
    out.metric("drift_center_expected_rms_mhz", (expected_ss / k).sqrt());
    if expected_ss > 0.0 {
        out.metric("drift_rms_ratio", (ss / expected_ss).sqrt());
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinSpectrumConfig {
    pub b_field_mt: f64,
    pub temperature_k: f64,
    pub purcell: f64,
    pub sd_sigma_mhz: f64,
    /// Spectral-diffusion coupling of the spin-flip lines relative to the
    /// spin-preserving ones.
    pub sf_sensitivity: f64,
    /// Brightness of the spin-flip lines relative to the spin-preserving ones.
    pub sf_strength: f64,
    pub half_range_mhz: f64,
    pub step_mhz: f64,
    pub n_sweeps: u64,
    pub pulse_period_us: f64,
    pub excitation_probability: f64,
}

impl Default for SpinSpectrumConfig {
    fn default() -> Self {
        SpinSpectrumConfig {
            b_field_mt: 0.2,
            temperature_k: 1.7,
            purcell: 100.0,
            sd_sigma_mhz: 0.5 / FWHM_PER_SIGMA,
            sf_sensitivity: 6.4,
            sf_strength: 0.3,
            half_range_mhz: 35.0,
            step_mhz: 0.1,
            n_sweeps: 4_000_000,
            pulse_period_us: 260.0,
            excitation_probability: 0.9,
        }
    }
}

impl SpinSpectrumConfig {
    fn validate(&self) -> Result<()> {
        if !(self.half_range_mhz > 0.0 && self.step_mhz > 0.0 && self.n_sweeps > 0) {
            return Err(Error::param(
                "spin_spectrum",
                "scan grid and sweeps must be positive",
            ));
        }
        if !(self.sd_sigma_mhz >= 0.0 && self.sf_sensitivity > 0.0 && self.sf_strength >= 0.0) {
            return Err(Error::param(
                "spin_spectrum",
                "noise and line parameters must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Reference emitter on the main line at zero offset.
fn reference_emitter(spin_class: SpinClass, satellite: SatelliteClass) -> EmitterRecord {
    EmitterRecord {
        id: 0,
        frequency_offset: 0.0,
        satellite,
        radial_um: 0.0,
        axial_um: 0.0,
        purcell: 0.0,
        sd_sigma: 0.2,
        spin_class,
    }
}

/// Fluorescence of one emitter against laser detuning at low field,
/// showing the two spin-preserving and the two spin-flip lines.
pub fn spin_spectrum(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let sc = &cfg.spin_spectrum;
    sc.validate()?;
    let spin = SpinParams {
        b_field_mt: sc.b_field_mt,
        ..cfg.spin.clone()
    };
    let t = spin::transition_frequencies(
        &spin,
        &reference_emitter(SpinClass::I, SatelliteClass::Main),
    );
    let low = thermal_low_fraction(&spin, sc.b_field_mt, sc.temperature_k);
    let sp_fwhm = FWHM_PER_SIGMA * sc.sd_sigma_mhz;
    // (name, centre, noise multiplier, weight, expected fwhm)
    let specs = [
        ("sp_low", t.f_sp_low * 1e3, 1.0, low, sp_fwhm),
        ("sp_high", t.f_sp_high * 1e3, 1.0, 1.0 - low, sp_fwhm),
        (
            "sf_red",
            t.f_sf_red * 1e3,
            sc.sf_sensitivity,
            sc.sf_strength * (1.0 - low),
            sc.sf_sensitivity * sp_fwhm,
        ),
        (
            "sf_blue",
            t.f_sf_blue * 1e3,
            sc.sf_sensitivity,
            sc.sf_strength * low,
            sc.sf_sensitivity * sp_fwhm,
        ),
    ];
    let lines: Vec<Line> = specs
        .iter()
        .map(|s| Line {
            center: s.1,
            noise_multiplier: s.2,
            weight: s.3,
        })
        .collect();
    let grid = Grid::centered(sc.half_range_mhz, sc.step_mhz);
    let sweep_us = grid.n as f64 * sc.pulse_period_us;
    let acc = sweep_average(
        grid,
        &lines,
        sc.sd_sigma_mhz,
        cfg.noise.slow_tau_us(),
        sweep_us,
        sc.n_sweeps,
        sc.excitation_probability,
        par::derive_seed(seed, domain::SPIN_SCAN),
    );
    let darks = sc.n_sweeps as f64 * cfg.detector.darks_per_window();
    let mut rng = par::substream(seed, domain::SPIN_SCAN, 0);
    let click = emitter_signal(cfg, sc.purcell, 1.0, cfg.detector.gate_window_us);
    let counts = draw_counts(&acc, click, darks, &mut rng);

    let mut out = Outcome::new("spin-spectrum");
    out.file(
        "spin_spectrum.csv",
        csv_table(
            &["detuning_mhz", "counts"],
            (0..grid.n).map(|k| vec![grid.x(k), counts[k]]),
        ),
    );
    out.metric("frame_minutes", sc.n_sweeps as f64 * sweep_us / 60e6);

    // Lines closer than their mean FWHM are not resolved and are fitted
    // together.
    let mut order: Vec<usize> = (0..specs.len()).collect();
    order.sort_by(|&a, &b| specs[a].1.total_cmp(&specs[b].1));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g)
                if g.iter().any(|&j| {
                    (specs[i].1 - specs[j].1).abs() < 0.5 * (specs[i].4 + specs[j].4)
                }) =>
            {
                g.push(i)
            }
            _ => groups.push(vec![i]),
        }
    }
    let mut resolved = 0;
    let (mut sp_w, mut sf_w, mut sp_a, mut sf_a) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for g in &groups {
        let width = g.iter().map(|&i| specs[i].4).fold(0.0, f64::max);
        let lo = g.iter().map(|&i| specs[i].1).fold(f64::INFINITY, f64::min) - 2.5 * width;
        let hi = g
            .iter()
            .map(|&i| specs[i].1)
            .fold(f64::NEG_INFINITY, f64::max)
            + 2.5 * width;
        let name = g.iter().map(|&i| specs[i].0).collect::<Vec<_>>().join("+");
        let fit = match gaussian_fit(grid, &counts, Some((lo, hi))) {
            Ok(f) => f,
            Err(e) => {
                out.note(&format!("fit_{name}"), e.to_string());
                continue;
            }
        };
        if fit.converged && fit.value("amplitude") > 5.0 * fit.stderr("amplitude") {
            resolved += 1;
        }
        if g.len() == 1 {
            let (w, a) = (fit.value("fwhm"), fit.value("amplitude"));
            if specs[g[0]].0.starts_with("sp") {
                sp_w.push(w);
                sp_a.push(a);
            } else {
                sf_w.push(w);
                sf_a.push(a);
            }
            out.metric(&format!("{name}_fwhm_mhz"), w);
            out.metric(&format!("{name}_center_mhz"), fit.value("center"));
        }
        out.fit(&name, fit);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    out.metric("n_resolved_lines", resolved as f64);
    if !sp_w.is_empty() {
        out.metric("sp_fwhm_mhz", mean(&sp_w));
    }
    if !sf_w.is_empty() {
        out.metric("sf_fwhm_mhz", mean(&sf_w));
    }
    if !sp_a.is_empty() && !sf_a.is_empty() {
        out.metric("sf_sp_amplitude_ratio", mean(&sf_a) / mean(&sp_a));
    }
    let (d_sp, d_sf) = spin::splittings(
        &spin,
        &reference_emitter(SpinClass::I, SatelliteClass::Main),
    );
    out.metric("delta_sp_mhz", d_sp);
    out.metric("delta_sf_mhz", d_sf);
    let base = SpinParams {
        class_g_offset: 0.0,
        satellite_g_correction: Vec::new(),
        ..spin.clone()
    };
    let (b_sp, b_sf) = spin::splittings(
        &base,
        &reference_emitter(SpinClass::I, SatelliteClass::Main),
    );
    if b_sp > 0.0 {
        out.metric("sf_sp_ratio", b_sf / b_sp);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplittingConfig {
    pub b_field_mt: f64,
    pub scan_half_range_mhz: f64,
    pub step_mhz: f64,
    pub shots_per_point: u32,
    /// FWHM of the pump response on the spin-flip transition.
    pub pump_fwhm_mhz: f64,
    pub pump_probability: f64,
    /// Readout click probability for an emitter in the pumped spin state.
    pub readout_click_probability: f64,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        SplittingConfig {
            b_field_mt: 2.5,
            scan_half_range_mhz: 6.0,
            step_mhz: 0.1,
            shots_per_point: 20_000,
            pump_fwhm_mhz: 0.5,
            pump_probability: 0.9,
            readout_click_probability: 0.02,
        }
    }
}

/// Pump-probe measurement of the excited-state splitting of every
/// satellite and spin class.
///
/// After initialisation into the low spin level, a narrowband pump on the
/// blue spin-flip transition at detuning `d` from the nominal excited-state
/// splitting transfers the spin with a Gaussian response broadened by the
/// spin-flip spectral diffusion; the spin-preserving readout then counts
/// the transferred population. A Gaussian fit of the counts gives the
/// excited-state splitting `D_e`, and `D_sf = 2 D_e - D_sp`.
pub fn splitting_probe(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let sp = &cfg.splitting;
    if !(sp.scan_half_range_mhz > 0.0
        && sp.step_mhz > 0.0
        && sp.pump_fwhm_mhz > 0.0
        && sp.shots_per_point > 0)
    {
        return Err(Error::param(
            "splitting",
            "scan, pump width and shots must be positive",
        ));
    }
    let spin = SpinParams {
        b_field_mt: sp.b_field_mt,
        ..cfg.spin.clone()
    };
    let nominal = SpinParams {
        class_g_offset: 0.0,
        satellite_g_correction: Vec::new(),
        ..spin.clone()
    };
    let de_ref = nominal
        .level_splittings(SpinClass::I, SatelliteClass::Main)
        .1
        * 1e3;
    let grid = Grid::centered(sp.scan_half_range_mhz, sp.step_mhz);
    let sf_sigma = cfg.spin_spectrum.sf_sensitivity * cfg.spin_spectrum.sd_sigma_mhz;
    let pump_sigma = sp.pump_fwhm_mhz / FWHM_PER_SIGMA;
    let width = (pump_sigma * pump_sigma + sf_sigma * sf_sigma).sqrt();
    let peak = sp.pump_probability * pump_sigma / width;
    let darks = cfg.detector.darks_per_window();
    let shots = sp.shots_per_point as f64;

    let mut out = Outcome::new("splitting");
    let mut rows = Vec::new();
    let mut main_sf = [0.0; 2];
    let classes = [
        SatelliteClass::Main,
        SatelliteClass::A,
        SatelliteClass::B,
        SatelliteClass::C,
        SatelliteClass::D,
    ];
    let mut max_rule: f64 = 0.0;
    for (ci, class) in classes.iter().enumerate() {
        for (si, sclass) in [SpinClass::I, SpinClass::II].into_iter().enumerate() {
            let e = reference_emitter(sclass, *class);
            let (_, de) = spin.level_splittings(sclass, *class);
            let de = de * 1e3;
            let mut rng = par::substream(seed, domain::SPLITTING, (ci * 2 + si) as u64);
            let counts: Vec<f64> = (0..grid.n)
                .map(|k| {
                    let d = grid.x(k) + de_ref - de;
                    let p = peak * (-0.5 * (d / width).powi(2)).exp();
                    let m = shots * (p * sp.readout_click_probability + darks);
                    Poisson::new(m.max(1e-300)).unwrap().sample(&mut rng)
                })
                .collect();
            let fit = gaussian_fit(grid, &counts, None)?;
            let de_fit = de_ref + fit.value("center");
            let (d_sp, d_sf_true) = spin::splittings(&spin, &e);
            let d_sf = 2.0 * de_fit - d_sp;
            let t = spin::transition_frequencies(&spin, &e);
            let rule = ((t.f_sf_blue - t.f_sf_red) - 2.0 * (t.f_sf_blue - t.f_sp_low)
                + (t.f_sp_high - t.f_sp_low))
                .abs()
                * 1e3;
            max_rule = max_rule.max(rule);
            let cls = match sclass {
                SpinClass::I => "I",
                SpinClass::II => "II",
            };
            let tag = format!("{}_{cls}", class.as_str());
            if *class == SatelliteClass::Main {
                main_sf[si] = d_sf;
            }
            let offset = d_sf - main_sf[si];
            let cmp = compare_to_holes(offset, spin.spin_hole_fwhm_mhz);
            out.metric(&format!("delta_sf_{tag}_mhz"), d_sf);
            out.metric(&format!("delta_sf_{tag}_true_mhz"), d_sf_true);
            out.metric(&format!("offset_{tag}_mhz"), offset);
            out.metric(
                &format!("resolved_{tag}"),
                if cmp.resolved { 1.0 } else { 0.0 },
            );
            rows.push(vec![
                ci as f64,
                si as f64,
                de_fit,
                d_sp,
                d_sf,
                offset,
                if cmp.resolved { 1.0 } else { 0.0 },
            ]);
            out.fit(&format!("pump_{tag}"), fit);
        }
    }
    out.metric("sum_rule_residual_mhz", max_rule);
    let (b_sp, b_sf) = spin::splittings(
        &nominal,
        &reference_emitter(SpinClass::I, SatelliteClass::Main),
    );
    out.metric("sf_sp_ratio", b_sf / b_sp);
    out.file(
        "splittings.csv",
        csv_table(
            &[
                "class_index",
                "spin_class_index",
                "de_mhz",
                "delta_sp_mhz",
                "delta_sf_mhz",
                "offset_vs_main_mhz",
                "resolved",
            ],
            rows,
        ),
    );
    Ok(out)
}
