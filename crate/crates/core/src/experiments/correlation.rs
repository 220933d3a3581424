// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Photon autocorrelation of a single emitter and spin-pumping shoulders.

use serde::{Deserialize, Serialize};

use super::source::{simulate_emitter, SourceModel};
use super::{chirped_pulse, select_emitter, thermal_low_fraction, ExperimentConfig, Outcome};
use crate::crystal::{EmitterRecord, SatelliteClass};
use crate::detection::{
    antibunching_fit, background_correct, bunching_fit, dark_calibration, detect_stream, pulsed_g2,
    signal_fraction, CorrelationEstimate, PulsePattern, PulseSchedule, ShoulderFit, TimeTagSeries,
};
use crate::dynamics::PulseSpec;
use crate::fit::{self, FitOptions, FitResult, Point};
use crate::oracle;
use crate::par;
use crate::spin::Transition;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinPumpingConfig {
    pub enabled: bool,
    pub b_field_mt: f64,
    pub gate_window_us: f64,
    pub n_pulses: u64,
    pub max_lag: usize,
    pub rabi_mhz: f64,
    pub chirp_mhz_per_us: f64,
    pub span_mhz: f64,
    /// Excitation attempts over which the spin memory decays; sets q_flip.
    pub memory_attempts: f64,
}

impl Default for SpinPumpingConfig {
    fn default() -> Self {
        SpinPumpingConfig {
            enabled: true,
            b_field_mt: 1.0,
            gate_window_us: 400.0,
            n_pulses: 4_000_000,
            max_lag: 1000,
            rabi_mhz: 0.3,
            chirp_mhz_per_us: 0.25,
            span_mhz: 1.0,
            memory_attempts: 205.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct G2Config {
    pub b_field_mt: f64,
    pub temperature_k: f64,
    pub satellite: SatelliteClass,
    /// Emitters are chosen at random among those above this Purcell factor.
    pub min_purcell: f64,
    pub rabi_mhz: f64,
    pub chirp_mhz_per_us: f64,
    pub span_mhz: f64,
    /// Delay between the end of the pulse and the start of the gate.
    pub gate_delay_us: f64,
    /// Dead interval after the gate before the next pulse.
    pub guard_us: f64,
    pub spin_t1_ms: f64,
    pub n_pulses: u64,
    pub max_lag: usize,
    pub spin_pumping: SpinPumpingConfig,
}

impl Default for G2Config {
    fn default() -> Self {
        G2Config {
            b_field_mt: 350.0,
            temperature_k: 1.7,
            satellite: SatelliteClass::D,
            min_purcell: 100.0,
            rabi_mhz: 0.5,
            chirp_mhz_per_us: 0.6,
            span_mhz: 2.5,
            gate_delay_us: 1.0,
            guard_us: 5.0,
            spin_t1_ms: 2.0,
            n_pulses: 4_000_000,
            max_lag: 20,
            spin_pumping: SpinPumpingConfig::default(),
        }
    }
}

impl G2Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.rabi_mhz > 0.0 && self.chirp_mhz_per_us > 0.0 && self.span_mhz > 0.0) {
            return Err(Error::param(
                "rabi_mhz",
                "pulse parameters must be positive",
            ));
        }
        if !(self.gate_delay_us >= 0.0 && self.guard_us >= 0.0 && self.spin_t1_ms > 0.0) {
            return Err(Error::param(
                "gate_delay_us",
                "timings must be non-negative",
            ));
        }
        if !(self.temperature_k >= 0.0 && self.b_field_mt >= 0.0) {
            return Err(Error::param("temperature_k", "must be non-negative"));
        }
        if self.max_lag < 1 || self.n_pulses < 2 {
            return Err(Error::param(
                "max_lag",
                "need max_lag >= 1 and at least two pulses",
            ));
        }
        let sp = &self.spin_pumping;
        if !(sp.rabi_mhz > 0.0
            && sp.chirp_mhz_per_us > 0.0
            && sp.span_mhz > 0.0
            && sp.memory_attempts >= 1.0)
        {
            return Err(Error::param(
                "spin_pumping",
                "pulse parameters must be positive, memory >= 1",
            ));
        }
        if sp.max_lag < 1 || !(sp.gate_window_us > 0.0) {
            return Err(Error::param(
                "spin_pumping",
                "need max_lag >= 1 and a positive gate",
            ));
        }
        Ok(())
    }
}

/// Drive and schedule of the high-field measurement for an emitter of
/// Purcell factor `purcell`.
pub(crate) fn high_field_source(
    cfg: &ExperimentConfig,
    purcell: f64,
    sd_sigma_mhz: f64,
    gate_window_us: f64,
    n_pulses: u64,
) -> (SourceModel, PulseSchedule) {
    let g = &cfg.g2;
    let pulse = chirped_pulse(g.rabi_mhz, g.chirp_mhz_per_us, g.span_mhz);
    let model = SourceModel {
        purcell,
        bulk_lifetime_us: cfg.cavity.bulk_lifetime_ms * 1e3,
        pulse_a: pulse,
        pulse_b: pulse,
        sd_sigma_mhz,
        sd_tau_us: cfg.noise.slow_tau_us(),
        spin_t1_us: g.spin_t1_ms * 1e3,
        thermal_low: thermal_low_fraction(&cfg.spin, g.b_field_mt, g.temperature_k),
        q_flip: 0.0,
    };
    let gate_start = pulse.duration_us + g.gate_delay_us;
    let schedule = PulseSchedule {
        n_pulses,
        period_us: gate_start + gate_window_us + g.guard_us,
        gate_start_us: gate_start,
        gate_window_us,
        pattern: PulsePattern::Single,
    };
    (model, schedule)
}

fn measure(
    cfg: &ExperimentConfig,
    model: &SourceModel,
    schedule: &PulseSchedule,
    seed: u64,
) -> Result<TimeTagSeries> {
    let emissions = simulate_emitter(model, schedule, seed)?;
    let mut det = cfg.detector.clone();
    det.gate_window_us = schedule.gate_window_us;
    detect_stream(
        &emissions,
        &det,
        cfg.cavity.outcoupling_efficiency,
        schedule,
        par::derive_seed(seed, 1),
    )
}

fn record_shoulder(out: &mut Outcome, name: &str, s: &ShoulderFit) {
    out.metric(&format!("{name}_amplitude"), s.amplitude);
    out.metric(
        &format!("{name}_significant"),
        if s.significant { 1.0 } else { 0.0 },
    );
    if s.significant {
        out.metric(&format!("{name}_k0"), s.decay_attempts);
        out.metric(&format!("{name}_k0_stderr"), s.decay_stderr);
        if let Some(f) = &s.fit {
            out.fit(name, f.clone());
        }
    }
}

fn describe(e: &EmitterRecord) -> String {
    format!(
        "id {} class {} purcell {:.2} offset {:.4} GHz sd_sigma {:.3} MHz",
        e.id,
        e.satellite.as_str(),
        e.purcell,
        e.frequency_offset,
        e.sd_sigma
    )
}

/// Autocorrelation of a randomly selected bright emitter at high field,
/// dark-count correction, and the low-field spin-pumping measurement.
pub fn autocorrelation(cfg: &ExperimentConfig, seed: u64, oracle_checks: bool) -> Result<Outcome> {
    let g = &cfg.g2;
    g.validate()?;
    let mut out = Outcome::new("g2");
    let emitter = select_emitter(cfg, g.satellite, g.min_purcell, seed)?;
    out.note("selected_emitter", describe(&emitter));
    out.metric("emitter_purcell", emitter.purcell);

    let (model, schedule) = high_field_source(
        cfg,
        emitter.purcell,
        emitter.sd_sigma,
        cfg.detector.gate_window_us,
        g.n_pulses,
    );
    out.metric("thermal_bright_fraction", model.thermal_low);
    out.metric(
        "mean_excitation_probability",
        model.mean_excitation(&model.pulse_a)?,
    );
    let series = measure(cfg, &model, &schedule, par::derive_seed(seed, 10))?;
    let est = pulsed_g2(&series, g.max_lag, true)?;
    let (raw, raw_err) = est.at(0).expect("lag 0 present");
    let mut det = cfg.detector.clone();
    det.gate_window_us = schedule.gate_window_us;
    let darks = dark_calibration(&det, &schedule, par::derive_seed(seed, 11))?;
    let rho = signal_fraction(&series, darks)?;
    out.metric("click_probability", series.mean_clicks());
    out.metric("darks_per_window", darks);
    out.metric("signal_fraction", rho);
    out.metric("g2_raw", raw);
    out.metric("g2_raw_stderr", raw_err);
    out.metric("g2_corrected", background_correct(raw, rho)?);
    out.metric("g2_corrected_stderr", raw_err / (rho * rho));
    record_shoulder(&mut out, "bunching", &bunching_fit(&est)?);
    out.file("g2.csv", est.to_csv());
    let mut tags = Vec::new();
    series.write_csv(&mut tags)?;
    out.file("tags.csv", String::from_utf8(tags).expect("csv is utf-8"));

    if oracle_checks {
        two_emitter_check(cfg, &model, seed, &mut out)?;
    }
    if g.spin_pumping.enabled {
        spin_pumping(cfg, &emitter, seed, &mut out)?;
    }
    Ok(out)
}

/// Two independent copies of the emitter without dark counts, compared
/// with exact enumeration of the click patterns.
fn two_emitter_check(
    cfg: &ExperimentConfig,
    model: &SourceModel,
    seed: u64,
    out: &mut Outcome,
) -> Result<()> {
    let n = (cfg.g2.n_pulses / 4).max(2);
    let (_, schedule) = high_field_source(
        cfg,
        model.purcell,
        model.sd_sigma_mhz,
        cfg.detector.gate_window_us,
        n,
    );
    let mut e1 = simulate_emitter(model, &schedule, par::derive_seed(seed, 20))?;
    let e2 = simulate_emitter(model, &schedule, par::derive_seed(seed, 21))?;
    let mut det = cfg.detector.clone();
    det.dark_rate_hz = 0.0;
    det.dead_time_us = 0.0;
    det.gate_window_us = schedule.gate_window_us;
    let eta = cfg.cavity.outcoupling_efficiency;
    let s1 = detect_stream(&e1, &det, eta, &schedule, par::derive_seed(seed, 22))?;
    let s2 = detect_stream(&e2, &det, eta, &schedule, par::derive_seed(seed, 23))?;
    e1.extend(e2);
    let both = detect_stream(&e1, &det, eta, &schedule, par::derive_seed(seed, 24))?;
    let (g0, err) = pulsed_g2(&both, 1, true)?.at(0).expect("lag 0 present");
    out.metric("two_emitter_g2", g0);
    out.metric("two_emitter_g2_stderr", err);
    out.metric(
        "two_emitter_oracle",
        oracle::two_emitter_g2_zero(s1.mean_clicks(), s2.mean_clicks()),
    );
    Ok(())
}

/// Alternating excitation of the two spin-preserving transitions at low
/// field, with the spin-flip branching chosen so that the spin memory
/// lasts `memory_attempts` excitation attempts.
/// Lag offset that separates cross-channel points from same-channel points
/// in the joint fit.
const CROSS_OFFSET: f64 = 1e7;

/// Fits of the same-channel bunching and the cross-channel antibunching on
/// top of the brightness correlation `B(k)` from spectral diffusion.
/// Exactly one pulse per pair matches the spin, so the sum of the two
/// estimators carries only the brightness term and the difference only the
/// spin memory: `1 + B(k) + a_s exp(-k / k_s)` and
/// `1 + B(k) - a_c exp(-k / k_c)` with `k = |lag + 1/2|` for the cross
/// channel. `half_lag_corr[j]` holds `B(j / 2)`.
fn joint_spin_fit(
    same: &CorrelationEstimate,
    cross: &CorrelationEstimate,
    half_lag_corr: &[f64],
) -> Result<FitResult> {
    let mut pts: Vec<Point> = Vec::new();
    for (i, &k) in same.lags.iter().enumerate() {
        if k > 0 && same.stderr[i] > 0.0 {
            pts.push((k as f64, same.g2[i], same.stderr[i].powi(-2)));
        }
    }
    for (i, &k) in cross.lags.iter().enumerate() {
        if cross.stderr[i] > 0.0 {
            pts.push((
                CROSS_OFFSET + (k as f64 + 0.5).abs(),
                cross.g2[i],
                cross.stderr[i].powi(-2),
            ));
        }
    }
    let b0 = bunching_fit(same)?;
    let a0 = antibunching_fit(cross)?;
    if !(b0.significant && a0.significant) {
        return Err(Error::InsufficientStatistics(
            "no significant spin-pumping shoulders".into(),
        ));
    }
    let corr = |k: f64| {
        half_lag_corr
            .get((2.0 * k).round() as usize)
            .copied()
            .unwrap_or(0.0)
    };
    fit::least_squares(
        |x, p| {
            if x >= CROSS_OFFSET {
                let k = x - CROSS_OFFSET;
                1.0 + corr(k) - p[2] * (-k / p[3]).exp()
            } else {
                1.0 + corr(x) + p[0] * (-x / p[1]).exp()
            }
        },
        &pts,
        &[
            "bunching_amplitude",
            "bunching_decay",
            "antibunching_amplitude",
            "antibunching_decay",
        ],
        &[
            b0.amplitude,
            b0.decay_attempts,
            a0.amplitude,
            a0.decay_attempts,
        ],
        &FitOptions::default(),
    )
}

fn low_field_model(
    cfg: &ExperimentConfig,
    emitter: &EmitterRecord,
    pulse: &PulseSpec,
) -> SourceModel {
    let g = &cfg.g2;
    SourceModel {
        purcell: emitter.purcell,
        bulk_lifetime_us: cfg.cavity.bulk_lifetime_ms * 1e3,
        pulse_a: *pulse,
        pulse_b: PulseSpec {
            target: Transition::SpHigh,
            ..*pulse
        },
        sd_sigma_mhz: emitter.sd_sigma,
        sd_tau_us: cfg.noise.slow_tau_us(),
        spin_t1_us: f64::INFINITY,
        thermal_low: thermal_low_fraction(&cfg.spin, g.spin_pumping.b_field_mt, g.temperature_k),
        q_flip: 0.0,
    }
}

fn spin_pumping(
    cfg: &ExperimentConfig,
    emitter: &EmitterRecord,
    seed: u64,
    out: &mut Outcome,
) -> Result<()> {
    let g = &cfg.g2;
    let sp = &g.spin_pumping;
    let pulse = chirped_pulse(sp.rabi_mhz, sp.chirp_mhz_per_us, sp.span_mhz);
    let mut model = low_field_model(cfg, emitter, &pulse);
    let p_exc = model.mean_excitation(&pulse)?;
    // The memory is measured from detected photons, which arrive
    // preferentially while the emitter is well excited: the relevant
    // excitation probability is the photon-weighted mean E[p^2] / E[p].
    let c0 = model.brightness_correlation(&pulse, &[0.0])?[0];
    let p_photon = p_exc * (1.0 + c0);
    model.q_flip = (1.0 / (sp.memory_attempts * p_photon)).min(1.0);
    out.metric("sp_mean_excitation_probability", p_exc);
    out.metric("sp_photon_weighted_excitation_probability", p_photon);
    out.metric("sp_q_flip", model.q_flip);
    let gate_start = pulse.duration_us + g.gate_delay_us;
    let schedule = PulseSchedule {
        n_pulses: sp.n_pulses,
        period_us: gate_start + sp.gate_window_us + g.guard_us,
        gate_start_us: gate_start,
        gate_window_us: sp.gate_window_us,
        pattern: PulsePattern::Alternating,
    };
    let series = measure(cfg, &model, &schedule, par::derive_seed(seed, 30))?;
    out.metric("sp_click_probability", series.mean_clicks());
    let same = pulsed_g2(&series, sp.max_lag, true)?;
    let cross = pulsed_g2(&series, sp.max_lag, false)?;
    record_shoulder(out, "sp_bunching", &bunching_fit(&same)?);
    record_shoulder(out, "sp_antibunching", &antibunching_fit(&cross)?);
    let lags: Vec<f64> = (0..=2 * (sp.max_lag + 1))
        .map(|j| j as f64 * schedule.period_us)
        .collect();
    // Dark counts dilute the brightness correlation by the squared signal
    // fraction.
    let mut det = cfg.detector.clone();
    det.gate_window_us = schedule.gate_window_us;
    let rho = signal_fraction(
        &series,
        dark_calibration(&det, &schedule, par::derive_seed(seed, 31))?,
    )?;
    let mut corr = model.brightness_correlation(&pulse, &lags)?;
    out.metric("sp_brightness_correlation_zero", corr[0]);
    out.metric("sp_signal_fraction", rho);
    corr.iter_mut().for_each(|c| *c *= rho * rho);
    match joint_spin_fit(&same, &cross, &corr) {
        Ok(f) => {
            for (name, key) in [
                ("sp_joint_bunching_k0", "bunching_decay"),
                ("sp_joint_antibunching_k0", "antibunching_decay"),
            ] {
                out.metric(name, f.value(key));
                out.metric(&format!("{name}_stderr"), f.stderr(key));
            }
            out.fit("sp_joint", f);
        }
        Err(e) => out.note("sp_joint", e.to_string()),
    }
    out.file("spin_pumping_same.csv", same.to_csv());
    out.file("spin_pumping_cross.csv", cross.to_csv());
    Ok(())
}
