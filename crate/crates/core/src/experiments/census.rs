// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Purcell census of the mode volume and lifetime measurements.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::correlation::high_field_source;
use super::source::simulate_emitter;
use super::spectrum::emitter_signal;
use super::{csv_table, ExperimentConfig, Outcome};
use crate::cavity::{enhanced_lifetime, purcell_from_lifetime, CavityMode};
use crate::crystal::{self, EmitterRecord, SatelliteClass};
use crate::detection::{detect_stream, fit_fluorescence_decay, fluorescence_bins};
use crate::fit::{self, ExponentialModel};
use crate::oracle;
use crate::par::{self, domain};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifetimeConfig {
    pub bin_width: f64,
    pub max_purcell_bin: f64,
    /// Emitters of the B, C and D satellites above this are counted.
    pub threshold: f64,
    /// Visibility cut for the satellite-D peak count.
    pub d_threshold: f64,
    pub photons_per_emitter: u32,
    pub gate_window_us: f64,
    pub decay_bin_us: f64,
    /// Lifetime of the emitter measured through the full detection chain.
    pub single_lifetime_us: f64,
    pub single_photons: u32,
    pub single_bin_us: f64,
    pub oracle_grid_xy: usize,
    pub oracle_grid_z: usize,
}

impl Default for LifetimeConfig {
    fn default() -> Self {
        LifetimeConfig {
            bin_width: 10.0,
            max_purcell_bin: 120.0,
            threshold: 35.0,
            d_threshold: 30.0,
            photons_per_emitter: 5000,
            gate_window_us: 1000.0,
            decay_bin_us: 10.0,
            single_lifetime_us: 131.0,
            single_photons: 20_000,
            single_bin_us: 5.0,
            oracle_grid_xy: 400,
            oracle_grid_z: 1600,
        }
    }
}

impl LifetimeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0 && self.max_purcell_bin > self.bin_width) {
            return Err(Error::param(
                "bin_width",
                "need 0 < bin_width < max_purcell_bin",
            ));
        }
        if !(self.gate_window_us > 0.0 && self.decay_bin_us > 0.0 && self.single_bin_us > 0.0) {
            return Err(Error::param("gate_window_us", "times must be positive"));
        }
        if self.photons_per_emitter < 10 || self.single_photons < 10 {
            return Err(Error::param(
                "photons_per_emitter",
                "need at least 10 photons",
            ));
        }
        if !(self.single_lifetime_us > 0.0) || self.oracle_grid_xy < 2 || self.oracle_grid_z < 2 {
            return Err(Error::param(
                "single_lifetime_us",
                "must be positive, grids >= 2",
            ));
        }
        Ok(())
    }

    fn edges(&self) -> Vec<f64> {
        let n = (self.max_purcell_bin / self.bin_width).round() as usize;
        (0..=n).map(|i| i as f64 * self.bin_width).collect()
    }
}

fn is_bcd(c: SatelliteClass) -> bool {
    matches!(c, SatelliteClass::B | SatelliteClass::C | SatelliteClass::D)
}

/// Lifetime measurement of one emitter: delays from the truncated
/// exponential inside the gate plus uniformly distributed dark counts for
/// the number of pulses needed to collect the photons.
fn measured_purcell(cfg: &ExperimentConfig, e: &EmitterRecord, seed: u64) -> Result<(f64, f64)> {
    let lc = &cfg.lifetimes;
    let bulk = cfg.cavity.bulk_lifetime_ms * 1e3;
    let tau = enhanced_lifetime(e.purcell, bulk);
    let gate = lc.gate_window_us;
    let mut rng = par::substream(seed, domain::LIFETIME, e.id);
    let n = lc.photons_per_emitter as usize;
    let nbins = (gate / lc.decay_bin_us).floor() as usize;
    let mut counts = vec![0.0; nbins];
    let trunc = -(-gate / tau).exp_m1();
    for _ in 0..n {
        let t = -tau * (1.0 - trunc * rng.random::<f64>()).ln();
        counts[((t / lc.decay_bin_us) as usize).min(nbins - 1)] += 1.0;
    }
    let mut det = cfg.detector.clone();
    det.gate_window_us = gate;
    let per_pulse = emitter_signal(cfg, e.purcell, 1.0, gate);
    let dark_mean = n as f64 / per_pulse.max(1e-12) * det.darks_per_window();
    let darks = if dark_mean > 0.0 {
        Poisson::new(dark_mean).unwrap().sample(&mut rng) as usize
    } else {
        0
    };
    for _ in 0..darks {
        counts[rng.random_range(0..nbins)] += 1.0;
    }
    let bins: Vec<(f64, f64)> = counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| ((k as f64 + 0.5) * lc.decay_bin_us, c))
        .collect();
    let f = fit::fit_exponential(&fit::poisson_weighted(&bins), ExponentialModel::Decay)?;
    if !f.converged {
        return Err(Error::InsufficientStatistics(format!(
            "emitter {} lifetime fit did not converge",
            e.id
        )));
    }
    Ok((purcell_from_lifetime(f.value("tau"), bulk), f.value("tau")))
}

/// Purcell factors of every emitter in the mode region, the count above
/// threshold among the B-D satellites, simulated lifetime measurements of
/// those emitters, and one emitter measured through the full chain.
pub fn lifetime_census(cfg: &ExperimentConfig, seed: u64, _oracle: bool) -> Result<Outcome> {
    let lc = &cfg.lifetimes;
    lc.validate()?;
    let mode = CavityMode::new(&cfg.cavity)?;
    let region = mode.sampling_region();
    let n_total = cfg.emitters_in_mode()?.round() as u64;
    let edges = lc.edges();
    let nb = edges.len() - 1;
    let ensemble_seed = par::derive_seed(seed, domain::CENSUS);

    const CHUNK: u64 = 1 << 16;
    let n_chunks = n_total.div_ceil(CHUNK) as usize;
    let parts = par::map_indexed(n_chunks, |c| {
        let lo = c as u64 * CHUNK;
        let hi = (lo + CHUNK).min(n_total);
        let mut hist = vec![0u64; nb];
        let mut max_p: f64 = 0.0;
        let mut kept = Vec::new();
        for id in lo..hi {
            let mut e = crystal::sample_emitter(id, &cfg.crystal, &region, ensemble_seed);
            e.purcell = mode.purcell_at(e.radial_um, e.axial_um);
            max_p = max_p.max(e.purcell);
            let k = (e.purcell / lc.bin_width).floor() as usize;
            if k < nb {
                hist[k] += 1;
            }
            if is_bcd(e.satellite) && e.purcell > lc.threshold.min(lc.d_threshold) {
                kept.push(e);
            }
        }
        (hist, max_p, kept)
    });
    let mut hist = vec![0u64; nb];
    let mut max_p: f64 = 0.0;
    let mut kept: Vec<EmitterRecord> = Vec::new();
    for (h, m, k) in parts {
        for (a, b) in hist.iter_mut().zip(h) {
            *a += b;
        }
        max_p = max_p.max(m);
        kept.extend(k);
    }

    let mut out = Outcome::new("lifetimes");
    out.metric("emitters_in_mode", n_total as f64);
    out.metric("max_purcell_observed", max_p);
    let peak = mode.purcell_at(0.0, cfg.cavity.antinode_reference_um);
    out.metric("max_purcell_geometry", peak);
    out.metric(
        "center_lifetime_us",
        enhanced_lifetime(peak, cfg.cavity.bulk_lifetime_ms * 1e3),
    );

    let fractions = oracle::purcell_volume_fractions(
        cfg.cavity.peak_purcell,
        mode.waist_um,
        cfg.cavity.k_medium(),
        cfg.cavity.antinode_reference_um,
        region.radius_um,
        region.thickness_um,
        &edges,
        lc.oracle_grid_xy,
        lc.oracle_grid_z,
    );
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for i in 0..nb {
        let expected = fractions[i] * n_total as f64;
        let dev = if expected > 0.0 {
            (hist[i] as f64 - expected) / expected
        } else {
            0.0
        };
        worst = worst.max(dev.abs());
        rows.push(vec![
            0.5 * (edges[i] + edges[i + 1]),
            hist[i] as f64,
            expected,
            dev,
        ]);
    }
    out.metric("histogram_oracle_max_rel_deviation", worst);
    out.file(
        "purcell_histogram.csv",
        csv_table(
            &["purcell", "count", "oracle_count", "relative_deviation"],
            rows,
        ),
    );

    let above: Vec<&EmitterRecord> = kept.iter().filter(|e| e.purcell > lc.threshold).collect();
    let d_above = kept
        .iter()
        .filter(|e| e.satellite == SatelliteClass::D && e.purcell > lc.d_threshold)
        .count();
    out.metric("count_p_gt_threshold", above.len() as f64);
    out.metric("count_d_p_gt_d_threshold", d_above as f64);

    let measured = par::map_indexed(above.len(), |i| measured_purcell(cfg, above[i], seed))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let max_fit = measured
        .iter()
        .map(|m| m.0)
        .fold(f64::NEG_INFINITY, f64::max);
    out.metric("max_fitted_purcell", max_fit);
    out.file(
        "lifetimes.csv",
        csv_table(
            &[
                "emitter_id",
                "purcell",
                "fitted_purcell",
                "fitted_lifetime_us",
            ],
            above
                .iter()
                .zip(&measured)
                .map(|(e, m)| vec![e.id as f64, e.purcell, m.0, m.1]),
        ),
    );

    // Density scale: least-squares factor between the fitted-Purcell
    // histogram above threshold and the oracle curve for the B-D classes.
    let p_bcd: f64 = [SatelliteClass::B, SatelliteClass::C, SatelliteClass::D]
        .iter()
        .map(|&c| cfg.crystal.class_probability(c))
        .sum();
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in 0..nb {
        if edges[i] < lc.threshold {
            continue;
        }
        let model = fractions[i] * n_total as f64 * p_bcd;
        let obs = measured
            .iter()
            .filter(|m| m.0 >= edges[i] && m.0 < edges[i + 1])
            .count() as f64;
        let w = 1.0 / model.max(1.0);
        sxy += w * model * obs;
        sxx += w * model * model;
    }
    out.metric("density_scale", if sxx > 0.0 { sxy / sxx } else { 0.0 });

    single_emitter_lifetime(cfg, seed, &mut out)?;
    Ok(out)
}

/// The reference emitter through source, detector and histogram fit.
fn single_emitter_lifetime(cfg: &ExperimentConfig, seed: u64, out: &mut Outcome) -> Result<()> {
    let lc = &cfg.lifetimes;
    let bulk = cfg.cavity.bulk_lifetime_ms * 1e3;
    let purcell = purcell_from_lifetime(lc.single_lifetime_us, bulk);
    let (model, mut schedule) =
        high_field_source(cfg, purcell, cfg.noise.ou_sigma_mhz, lc.gate_window_us, 1);
    let per_pulse = model.mean_excitation(&model.pulse_a)?
        * model.thermal_low
        * emitter_signal(cfg, purcell, 1.0, lc.gate_window_us);
    schedule.n_pulses = (lc.single_photons as f64 / per_pulse).ceil() as u64;
    let emissions = simulate_emitter(&model, &schedule, par::derive_seed(seed, 40))?;
    let mut det = cfg.detector.clone();
    det.gate_window_us = lc.gate_window_us;
    let series = detect_stream(
        &emissions,
        &det,
        cfg.cavity.outcoupling_efficiency,
        &schedule,
        par::derive_seed(seed, 41),
    )?;
    let bins = fluorescence_bins(&series, lc.single_bin_us)?;
    let fit = fit_fluorescence_decay(&bins)?;
    out.metric("single_detected_photons", series.tags.len() as f64);
    out.metric("single_lifetime_us", fit.value("tau"));
    out.metric("single_lifetime_stderr_us", fit.stderr("tau"));
    out.metric("single_true_lifetime_us", lc.single_lifetime_us);
    out.file(
        "single_emitter_decay.csv",
        csv_table(
            &["delay_us", "counts"],
            bins.iter().map(|&(t, c)| vec![t, c]),
        ),
    );
    out.fit("single_emitter_decay", fit);
    Ok(())
}
