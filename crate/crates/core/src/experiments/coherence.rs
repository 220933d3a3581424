// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Rabi oscillations, Hahn echoes and XY4 decoupling on single emitters.

use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{csv_table, ExperimentConfig, Outcome};
use crate::dynamics::{
    dd_coherence_scan, gaussian_pulse_rotation, ou_chi, sequence_for, EchoEstimate,
    EmitterDynamicState, NoiseModel, OuComponent, PulseSpec, SequenceKind,
};
use crate::fit::{self, ExponentialModel, FitResult, Point};
use crate::par::{self, domain};
use crate::spin::Spin;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceKind {
    Rabi,
    Hahn,
    Xy4,
}

/// Linear grid of total sequence lengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayGrid {
    pub start_us: f64,
    pub stop_us: f64,
    pub points: usize,
}

impl DelayGrid {
    fn validate(&self) -> Result<()> {
        if !(self.start_us > 0.0 && self.stop_us > self.start_us && self.points >= 3) {
            return Err(Error::param(
                "delays",
                "need 0 < start < stop and at least 3 points",
            ));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let step = (self.stop_us - self.start_us) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| self.start_us + i as f64 * step)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RabiConfig {
    pub pulse_fwhm_us: f64,
    pub max_area_pi: f64,
    pub points: usize,
    pub shots_per_point: u32,
    pub click_probability: f64,
    /// Static detuning samples drawn from the slow spectral diffusion;
    /// zero gives resonant pulses.
    pub detuning_samples: usize,
}

impl Default for RabiConfig {
    fn default() -> Self {
        RabiConfig {
            pulse_fwhm_us: 0.32,
            max_area_pi: 4.0,
            points: 61,
            shots_per_point: 4000,
            click_probability: 0.05,
            detuning_samples: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HahnConfig {
    pub t1_us: f64,
    pub delays: DelayGrid,
    pub trajectories: usize,
}

impl Default for HahnConfig {
    fn default() -> Self {
        HahnConfig {
            t1_us: 131.0,
            delays: DelayGrid {
                start_us: 10.0,
                stop_us: 600.0,
                points: 24,
            },
            trajectories: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Xy4Config {
    pub t1_us: f64,
    /// Fitted Hahn decay time the fast noise is calibrated to.
    pub hahn_target_t2_us: f64,
    pub fast_tau_us: f64,
    pub delays: DelayGrid,
    pub trajectories: usize,
}

impl Default for Xy4Config {
    fn default() -> Self {
        Xy4Config {
            t1_us: 290.0,
            hahn_target_t2_us: 500.0,
            fast_tau_us: 20_000.0,
            delays: DelayGrid {
                start_us: 40.0,
                stop_us: 1800.0,
                points: 24,
            },
            trajectories: 10_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoherenceConfig {
    pub rabi: RabiConfig,
    pub hahn: HahnConfig,
    pub xy4: Xy4Config,
}

impl CoherenceConfig {
    pub fn validate(&self) -> Result<()> {
        let r = &self.rabi;
        if !(r.pulse_fwhm_us > 0.0 && r.max_area_pi > 0.0 && r.points >= 6 && r.shots_per_point > 0)
        {
            return Err(Error::param(
                "rabi",
                "need a positive pulse, area, shots and at least 6 points",
            ));
        }
        if !(0.0..=1.0).contains(&r.click_probability) {
            return Err(Error::param("click_probability", "must lie in [0, 1]"));
        }
        self.hahn.delays.validate()?;
        self.xy4.delays.validate()?;
        for (t1, n) in [
            (self.hahn.t1_us, self.hahn.trajectories),
            (self.xy4.t1_us, self.xy4.trajectories),
        ] {
            if !(t1 > 0.0) || n == 0 {
                return Err(Error::param(
                    "t1_us",
                    "need a positive lifetime and trajectories",
                ));
            }
        }
        if !(self.xy4.hahn_target_t2_us > 0.0 && self.xy4.hahn_target_t2_us < 2.0 * self.xy4.t1_us)
        {
            return Err(Error::param(
                "hahn_target_t2_us",
                "must lie below the lifetime limit 2 T1",
            ));
        }
        if !(self.xy4.fast_tau_us > 0.0) {
            return Err(Error::param("fast_tau_us", "must be positive"));
        }
        Ok(())
    }
}

/// Fast OU noise that reproduces the Hahn decay of the decoupling emitter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastNoiseCalibration {
    pub sigma_mhz: f64,
    pub tau_us: f64,
    /// Fitted Hahn decay time of the analytic echo under the calibrated noise.
    pub hahn_t2_us: f64,
}

impl FastNoiseCalibration {
    pub fn noise(&self) -> NoiseModel {
        fast_noise(self.sigma_mhz, self.tau_us)
    }
}

fn fast_noise(sigma: f64, tau: f64) -> NoiseModel {
    NoiseModel {
        ou_sigma_mhz: 0.0,
        fast: Some(OuComponent {
            sigma_mhz: sigma,
            tau_us: tau,
        }),
        ..NoiseModel::default()
    }
}

/// Analytic echo `exp(-T / 2 T1) * envelope * exp(-chi)`.
pub fn analytic_echo(kind: SequenceKind, total_us: f64, noise: &NoiseModel, t1_us: f64) -> f64 {
    let seq = sequence_for(kind, total_us);
    (-total_us / (2.0 * t1_us)).exp()
        * noise.shf_envelope(total_us)
        * (-ou_chi(&seq, total_us, noise)).exp()
}

fn fit_t2(points: &[Point]) -> Result<FitResult> {
    fit::fit_exponential(points, ExponentialModel::EchoEnvelope)
}

fn analytic_t2(kind: SequenceKind, delays: &[f64], noise: &NoiseModel, t1: f64) -> Result<f64> {
    let pts: Vec<Point> = delays
        .iter()
        .map(|&d| (d, analytic_echo(kind, d, noise, t1), 1.0))
        .collect();
    Ok(fit_t2(&pts)?.value("tau"))
}

/// Finds the fast-noise amplitude (at the configured correlation time)
/// for which the fitted analytic Hahn decay time equals the target.
pub fn calibrate_fast_noise(cfg: &Xy4Config) -> Result<FastNoiseCalibration> {
    let delays = cfg.delays.values();
    let t2 = |s: f64| {
        analytic_t2(
            SequenceKind::Hahn,
            &delays,
            &fast_noise(s, cfg.fast_tau_us),
            cfg.t1_us,
        )
    };
    let (mut lo, mut hi) = (0.0, 0.01);
    while t2(hi)? > cfg.hahn_target_t2_us {
        hi *= 2.0;
        if hi > 100.0 {
            return Err(Error::param(
                "hahn_target_t2_us",
                "not reachable with the fast noise",
            ));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if t2(mid)? > cfg.hahn_target_t2_us {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma = 0.5 * (lo + hi);
    Ok(FastNoiseCalibration {
        sigma_mhz: sigma,
        tau_us: cfg.fast_tau_us,
        hahn_t2_us: t2(sigma)?,
    })
}

/// Rabi oscillations, a Hahn echo scan or an XY4 scan.
pub fn coherence(
    cfg: &ExperimentConfig,
    kind: CoherenceKind,
    seed: u64,
    oracle: bool,
) -> Result<Outcome> {
    cfg.coherence.validate()?;
    let seed = par::derive_seed(seed, domain::COHERENCE);
    match kind {
        CoherenceKind::Rabi => rabi(cfg, seed),
        CoherenceKind::Hahn => hahn(cfg, seed, oracle),
        CoherenceKind::Xy4 => xy4(cfg, seed),
    }
}

fn echo_points(scan: &[(f64, EchoEstimate)]) -> Vec<Point> {
    scan.iter()
        .map(|(d, e)| (*d, e.amplitude, 1.0 / (e.stderr * e.stderr + 1e-8)))
        .collect()
}

fn echo_csv(scan: &[(f64, EchoEstimate)], analytic: impl Fn(f64) -> f64) -> String {
    csv_table(
        &["total_us", "amplitude", "stderr", "analytic"],
        scan.iter()
            .map(|(d, e)| vec![*d, e.amplitude, e.stderr, analytic(*d)]),
    )
}

fn rabi_scan(cfg: &ExperimentConfig, fwhm: f64, seed: u64) -> Result<(Vec<(f64, f64)>, f64)> {
    let r = &cfg.coherence.rabi;
    let template = PulseSpec::gaussian(fwhm, 1.0);
    let max_rabi = template.rabi_for_area(r.max_area_pi * PI);
    let mut rng = par::substream(seed, domain::COHERENCE, 0);
    let sigma = if cfg.noise.pure_dephasing_enabled {
        cfg.noise.ou_sigma_mhz
    } else {
        0.0
    };
    let offsets: Vec<f64> = if sigma > 0.0 && r.detuning_samples > 0 {
        let n = Normal::new(0.0, sigma).unwrap();
        (0..r.detuning_samples)
            .map(|_| n.sample(&mut rng))
            .collect()
    } else {
        vec![0.0]
    };
    let darks = cfg.detector.darks_per_window();
    let shots = r.shots_per_point as f64;
    let mut out = Vec::with_capacity(r.points);
    for i in 0..r.points {
        let rabi = max_rabi * i as f64 / (r.points - 1) as f64;
        let pulse = PulseSpec::gaussian(fwhm, rabi);
        let mut pop = 0.0;
        for &o in &offsets {
            let state = EmitterDynamicState {
                ou_offset_mhz: o,
                ..EmitterDynamicState::ground(Spin::Low)
            };
            pop += gaussian_pulse_rotation(&pulse, &state)?.excited_population();
        }
        pop /= offsets.len() as f64;
        let mean = shots * (pop * r.click_probability + darks);
        let c = if mean > 0.0 {
            Poisson::new(mean).unwrap().sample(&mut rng)
        } else {
            0.0
        };
        out.push((rabi, c));
    }
    Ok((out, 1.0 / template.gaussian_effective_duration()))
}

fn rabi(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let r = &cfg.coherence.rabi;
    let mut out = Outcome::new("rabi");
    let (scan, expected) = rabi_scan(cfg, r.pulse_fwhm_us, seed)?;
    out.file(
        "rabi.csv",
        csv_table(
            &["rabi_peak_mhz", "counts"],
            scan.iter().map(|p| vec![p.0, p.1]),
        ),
    );
    let pts = fit::poisson_weighted(&scan);
    let sine = fit::fit_sinusoid(&pts)?;
    let damped = fit::fit_damped_sinusoid(&pts)?;
    out.metric("period_mhz", sine.value("period"));
    out.metric("period_stderr_mhz", sine.stderr("period"));
    out.metric("expected_period_mhz", expected);
    out.metric("damping_per_mhz", damped.value("damping"));
    out.metric("damping_stderr_per_mhz", damped.stderr("damping"));
    out.metric(
        "damping_significant",
        if damped.value("damping").abs() > 3.0 * damped.stderr("damping") {
            1.0
        } else {
            0.0
        },
    );
    let (long, _) = rabi_scan(cfg, 2.0 * r.pulse_fwhm_us, par::derive_seed(seed, 2))?;
    let long_fit = fit::fit_sinusoid(&fit::poisson_weighted(&long))?;
    out.metric(
        "period_ratio_double_duration",
        sine.value("period") / long_fit.value("period"),
    );
    out.file(
        "rabi_double_duration.csv",
        csv_table(
            &["rabi_peak_mhz", "counts"],
            long.iter().map(|p| vec![p.0, p.1]),
        ),
    );
    out.fit("sinusoid", sine);
    out.fit("damped_sinusoid", damped);
    out.fit("sinusoid_double_duration", long_fit);
    Ok(out)
}

fn hahn(cfg: &ExperimentConfig, seed: u64, oracle: bool) -> Result<Outcome> {
    let h = &cfg.coherence.hahn;
    let mut out = Outcome::new("hahn");
    let delays = h.delays.values();

    let quiet = NoiseModel::disabled();
    let scan = dd_coherence_scan(
        SequenceKind::Hahn,
        &delays,
        h.t1_us,
        &quiet,
        h.trajectories,
        seed,
    )?;
    let f = fit_t2(&fit::uniform_weighted(
        &scan
            .iter()
            .map(|(d, e)| (*d, e.amplitude))
            .collect::<Vec<_>>(),
    ))?;
    out.metric("t1_us", h.t1_us);
    out.metric("t2_us", f.value("tau"));
    out.metric("t2_stderr_us", f.stderr("tau"));
    out.metric("t2_over_2t1", f.value("tau") / (2.0 * h.t1_us));
    out.file(
        "hahn.csv",
        echo_csv(&scan, |d| {
            analytic_echo(SequenceKind::Hahn, d, &quiet, h.t1_us)
        }),
    );
    out.fit("lifetime_limited", f);

    // The decoupling emitter under its calibrated noise: Monte Carlo
    // against the analytic Gaussian echo.
    let x = &cfg.coherence.xy4;
    let cal = calibrate_fast_noise(x)?;
    let noise = NoiseModel {
        shf_depth: cfg.noise.shf_depth,
        shf_frequency_mhz: cfg.noise.shf_frequency_mhz,
        ..cal.noise()
    };
    let xd = x.delays.values();
    let scan = dd_coherence_scan(
        SequenceKind::Hahn,
        &xd,
        x.t1_us,
        &noise,
        h.trajectories,
        par::derive_seed(seed, 1),
    )?;
    let mut max_z: f64 = 0.0;
    for (d, e) in &scan {
        let a = analytic_echo(SequenceKind::Hahn, *d, &noise, x.t1_us);
        if e.stderr > 0.0 {
            max_z = max_z.max((e.amplitude - a).abs() / e.stderr);
        }
    }
    let f = fit_t2(&echo_points(&scan))?;
    out.metric("dephased_t1_us", x.t1_us);
    out.metric("dephased_t2_us", f.value("tau"));
    out.metric("dephased_t2_stderr_us", f.stderr("tau"));
    out.metric("dephased_max_abs_z", max_z);
    out.metric("fast_noise_sigma_mhz", cal.sigma_mhz);
    out.file(
        "hahn_dephased.csv",
        echo_csv(&scan, |d| {
            analytic_echo(SequenceKind::Hahn, d, &noise, x.t1_us)
        }),
    );
    out.fit("dephased", f);

    if oracle {
        let seq = sequence_for(SequenceKind::Hahn, x.delays.stop_us);
        let flips: Vec<f64> = seq.iter().map(|p| p.0).collect();
        let brute = crate::oracle::ou_chi_double_integral(
            cal.sigma_mhz,
            cal.tau_us,
            x.delays.stop_us,
            &flips,
            2000,
        );
        let chi = ou_chi(&seq, x.delays.stop_us, &noise);
        out.metric("chi_oracle_rel_deviation", (chi / brute - 1.0).abs());
    }
    Ok(out)
}

fn xy4(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let x = &cfg.coherence.xy4;
    let mut out = Outcome::new("xy4");
    let cal = calibrate_fast_noise(x)?;
    let noise = cal.noise();
    let delays = x.delays.values();
    let scan = dd_coherence_scan(
        SequenceKind::Xy4,
        &delays,
        x.t1_us,
        &noise,
        x.trajectories,
        seed,
    )?;
    let f = fit_t2(&echo_points(&scan))?;
    out.metric("t1_us", x.t1_us);
    out.metric("lifetime_limit_us", 2.0 * x.t1_us);
    out.metric("fast_noise_sigma_mhz", cal.sigma_mhz);
    out.metric("fast_noise_tau_us", cal.tau_us);
    out.metric("hahn_t2_us", cal.hahn_t2_us);
    out.metric("t2_us", f.value("tau"));
    out.metric("t2_stderr_us", f.stderr("tau"));
    out.metric(
        "analytic_t2_us",
        analytic_t2(SequenceKind::Xy4, &delays, &noise, x.t1_us)?,
    );
    out.file(
        "xy4.csv",
        echo_csv(&scan, |d| {
            analytic_echo(SequenceKind::Xy4, d, &noise, x.t1_us)
        }),
    );
    out.file(
        "xy4_hahn_reference.csv",
        csv_table(
            &["total_us", "hahn_analytic"],
            delays
                .iter()
                .map(|&d| vec![d, analytic_echo(SequenceKind::Hahn, d, &noise, x.t1_us)]),
        ),
    );
    out.fit("xy4", f);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_hits_target() {
        let cfg = Xy4Config::default();
        let c = calibrate_fast_noise(&cfg).unwrap();
        assert!((c.hahn_t2_us - cfg.hahn_target_t2_us).abs() < 0.5);
        assert!(c.sigma_mhz > 0.0);
    }

    #[test]
    fn quiet_echo_is_lifetime_envelope() {
        let a = analytic_echo(SequenceKind::Xy4, 262.0, &NoiseModel::disabled(), 131.0);
        assert!((a - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn rejects_target_above_limit() {
        let mut c = CoherenceConfig::default();
        c.xy4.hahn_target_t2_us = 700.0;
        assert!(c.validate().is_err());
    }
}
