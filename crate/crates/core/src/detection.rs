// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Detector model, time tags and pulse-wise correlation estimators.
//!
//! The experiment is a train of excitation pulses at a fixed period. Each
//! pulse `i` at time `i * period` opens a detection gate
//! `[i * period + gate_start, i * period + gate_start + gate_window)`.
//! Photons and dark counts are only registered inside gates. Estimators
//! work on per-pulse click counts and never look at the channel label of a
//! tag, so they apply unchanged to recorded tag files.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::dynamics::DecayChannel;
use crate::fit::{self, FitResult, Point};
use crate::par::{self, domain};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub dead_time_us: f64,
    pub gate_window_us: f64,
    /// Transmission from the cavity output to the detector.
    pub path_efficiency: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            efficiency: 0.40,
            dark_rate_hz: 10.2,
            dead_time_us: 0.1,
            gate_window_us: 250.0,
            path_efficiency: 0.155,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("efficiency", self.efficiency),
            ("path_efficiency", self.path_efficiency),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, "must lie in [0, 1]"));
            }
        }
        if !(self.dark_rate_hz >= 0.0) || !self.dark_rate_hz.is_finite() {
            return Err(Error::param("dark_rate_hz", "must be non-negative"));
        }
        if !(self.dead_time_us >= 0.0) {
            return Err(Error::param("dead_time_us", "must be non-negative"));
        }
        if !(self.gate_window_us > 0.0) {
            return Err(Error::param("gate_window_us", "must be positive"));
        }
        Ok(())
    }

    /// Probability that a photon emitted into the cavity mode is detected.
    pub fn click_probability(&self, outcoupling: f64) -> f64 {
        self.efficiency * self.path_efficiency * outcoupling
    }

    /// Mean number of dark counts per gate.
    pub fn darks_per_window(&self) -> f64 {
        self.dark_rate_hz * 1e-6 * self.gate_window_us
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    FreqA,
    FreqB,
    /// Ground-truth label of a dark count; estimators ignore labels.
    Dark,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tag {
    pub timestamp_us: f64,
    pub pulse_index: u64,
    pub channel: Channel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulsePattern {
    /// Every pulse drives the same transition.
    Single,
    /// Even pulses drive frequency A, odd pulses frequency B.
    Alternating,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSchedule {
    pub n_pulses: u64,
    pub period_us: f64,
    pub gate_start_us: f64,
    pub gate_window_us: f64,
    pub pattern: PulsePattern,
}

impl PulseSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.period_us > 0.0) {
            return Err(Error::param("period_us", "must be positive"));
        }
        if !(self.gate_start_us >= 0.0 && self.gate_window_us > 0.0) {
            return Err(Error::param(
                "gate_window_us",
                "gate must start at or after the pulse",
            ));
        }
        if self.gate_start_us + self.gate_window_us > self.period_us {
            return Err(Error::param(
                "gate_window_us",
                "gate must end before the next pulse",
            ));
        }
        Ok(())
    }

    pub fn pulse_time(&self, i: u64) -> f64 {
        i as f64 * self.period_us
    }

    pub fn window_start(&self, i: u64) -> f64 {
        self.pulse_time(i) + self.gate_start_us
    }

    /// Pulse whose gate contains `t`, if any.
    pub fn window_of(&self, t: f64) -> Option<u64> {
        if t < 0.0 {
            return None;
        }
        let i = (t / self.period_us).floor() as u64;
        let d = t - self.window_start(i);
        (i < self.n_pulses && d >= 0.0 && d < self.gate_window_us).then_some(i)
    }

    pub fn label(&self, i: u64) -> Channel {
        match self.pattern {
            PulsePattern::Single => Channel::FreqA,
            PulsePattern::Alternating if i.is_multiple_of(2) => Channel::FreqA,
            PulsePattern::Alternating => Channel::FreqB,
        }
    }

    pub fn duty_cycle(&self) -> f64 {
        self.gate_window_us / self.period_us
    }

    pub fn run_length_us(&self) -> f64 {
        self.n_pulses as f64 * self.period_us
    }
}

/// A photon leaving the emitter at absolute time `time_us`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub time_us: f64,
    pub channel: DecayChannel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeTagSeries {
    pub schedule: PulseSchedule,
    pub tags: Vec<Tag>,
}

impl TimeTagSeries {
    /// Writes `timestamp_us,pulse_index,channel` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for t in &self.tags {
            wr.serialize(t)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a tag file; the pulse schedule is supplied by the caller.
    pub fn read_csv<R: Read>(r: R, schedule: PulseSchedule) -> Result<Self> {
        schedule.validate()?;
        let mut rd = csv::Reader::from_reader(r);
        let mut tags = Vec::new();
        for (row, rec) in rd.deserialize::<Tag>().enumerate() {
            let t = rec?;
            if let Some(prev) = tags.last() {
                let prev: &Tag = prev;
                if t.timestamp_us < prev.timestamp_us || t.pulse_index < prev.pulse_index {
                    return Err(Error::TagFormat(format!(
                        "row {}: timestamps must be nondecreasing",
                        row + 1
                    )));
                }
            }
            if t.pulse_index >= schedule.n_pulses {
                return Err(Error::TagFormat(format!(
                    "row {}: pulse index {} beyond {} pulses",
                    row + 1,
                    t.pulse_index,
                    schedule.n_pulses
                )));
            }
            tags.push(t);
        }
        Ok(TimeTagSeries { schedule, tags })
    }

    /// Sparse `(pulse_index, clicks)` list in increasing pulse order.
    pub fn counts_per_pulse(&self) -> Vec<(u64, u32)> {
        let mut out: Vec<(u64, u32)> = Vec::new();
        for t in &self.tags {
            match out.last_mut() {
                Some((i, n)) if *i == t.pulse_index => *n += 1,
                _ => out.push((t.pulse_index, 1)),
            }
        }
        out
    }

    /// Mean clicks per gate.
    pub fn mean_clicks(&self) -> f64 {
        self.tags.len() as f64 / self.schedule.n_pulses.max(1) as f64
    }

    /// Copy with every timestamp shifted by whole pulse periods.
    pub fn shifted(&self, pulses: u64) -> Self {
        let dt = pulses as f64 * self.schedule.period_us;
        TimeTagSeries {
            schedule: PulseSchedule {
                n_pulses: self.schedule.n_pulses + pulses,
                ..self.schedule
            },
            tags: self
                .tags
                .iter()
                .map(|t| Tag {
                    timestamp_us: t.timestamp_us + dt,
                    pulse_index: t.pulse_index + pulses,
                    channel: t.channel,
                })
                .collect(),
        }
    }
}

/// Pulses per detection work item.
const BLOCK: u64 = 1 << 16;

/// Converts emissions into gated detector tags.
///
/// A cavity photon inside a gate is detected with probability
/// `efficiency * path_efficiency * outcoupling`. Dark counts form a
/// Poisson process at `dark_rate_hz` over the gated time only. Within a
/// gate, tags closer than `dead_time_us` to the previously accepted tag are
/// dropped. Blocks of pulses are processed in parallel with one substream
/// each.
pub fn detect_stream(
    emissions: &[Emission],
    cfg: &DetectorConfig,
    outcoupling: f64,
    schedule: &PulseSchedule,
    seed: u64,
) -> Result<TimeTagSeries> {
    cfg.validate()?;
    schedule.validate()?;
    if !(0.0..=1.0).contains(&outcoupling) {
        return Err(Error::param("outcoupling", "must lie in [0, 1]"));
    }
    let sorted_copy;
    let emissions = if emissions.windows(2).all(|w| w[0].time_us <= w[1].time_us) {
        emissions
    } else {
        let mut v = emissions.to_vec();
        v.sort_by(|a, b| a.time_us.total_cmp(&b.time_us));
        sorted_copy = v;
        &sorted_copy
    };
    let eta = cfg.click_probability(outcoupling);
    let dark_rate_per_us = cfg.dark_rate_hz * 1e-6;
    let gw = schedule.gate_window_us;
    let n_blocks = schedule.n_pulses.div_ceil(BLOCK) as usize;
    let blocks = par::map_indexed(n_blocks, |b| {
        let mut rng = par::substream(seed, domain::DETECTION, b as u64);
        let first = b as u64 * BLOCK;
        let last = (first + BLOCK).min(schedule.n_pulses);
        let (t0, t1) = (schedule.pulse_time(first), schedule.pulse_time(last));
        let lo = emissions.partition_point(|e| e.time_us < t0);
        let hi = emissions.partition_point(|e| e.time_us < t1);
        let mut tags = Vec::new();
        for e in &emissions[lo..hi] {
            if e.channel != DecayChannel::SpCavity {
                continue;
            }
            if let Some(i) = schedule.window_of(e.time_us) {
                if rng.random::<f64>() < eta {
                    tags.push(Tag {
                        timestamp_us: e.time_us,
                        pulse_index: i,
                        channel: schedule.label(i),
                    });
                }
            }
        }
        if dark_rate_per_us > 0.0 {
            let gap = Exp::new(dark_rate_per_us).unwrap();
            let gated = (last - first) as f64 * gw;
            let mut u = gap.sample(&mut rng);
            while u < gated {
                let k = ((u / gw).floor() as u64).min(last - first - 1);
                let i = first + k;
                tags.push(Tag {
                    timestamp_us: schedule.window_start(i) + (u - k as f64 * gw),
                    pulse_index: i,
                    channel: Channel::Dark,
                });
                u += gap.sample(&mut rng);
            }
        }
        tags.sort_by(|a, b| a.timestamp_us.total_cmp(&b.timestamp_us));
        apply_dead_time(tags, cfg.dead_time_us)
    });
    Ok(TimeTagSeries {
        schedule: *schedule,
        tags: blocks.into_iter().flatten().collect(),
    })
}

fn apply_dead_time(tags: Vec<Tag>, dead_time_us: f64) -> Vec<Tag> {
    let mut out: Vec<Tag> = Vec::with_capacity(tags.len());
    for t in tags {
        match out.last() {
            Some(prev)
                if prev.pulse_index == t.pulse_index
                    && t.timestamp_us - prev.timestamp_us < dead_time_us => {}
            _ => out.push(t),
        }
    }
    out
}

/// Dark counts per gate measured in a laser-off calibration run of the
/// same schedule.
pub fn dark_calibration(cfg: &DetectorConfig, schedule: &PulseSchedule, seed: u64) -> Result<f64> {
    let series = detect_stream(
        &[],
        cfg,
        0.0,
        schedule,
        par::derive_seed(seed, domain::DARK_CALIBRATION),
    )?;
    Ok(series.mean_clicks())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    /// Pulse separations; for alternating schedules in units of pulse pairs.
    pub lags: Vec<i64>,
    pub g2: Vec<f64>,
    pub stderr: Vec<f64>,
    pub coincidences: Vec<f64>,
    pub same_channel: bool,
}

impl CorrelationEstimate {
    pub fn at(&self, lag: i64) -> Option<(f64, f64)> {
        self.lags
            .iter()
            .position(|&l| l == lag)
            .map(|i| (self.g2[i], self.stderr[i]))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lag,g2,stderr,coincidences\n");
        for i in 0..self.lags.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.lags[i], self.g2[i], self.stderr[i], self.coincidences[i]
            ));
        }
        s
    }
}

/// Sparse count stream `(slot, clicks)` over `len` slots.
struct Stream {
    counts: Vec<(u64, f64)>,
    len: u64,
}

impl Stream {
    fn mean(&self) -> f64 {
        self.counts.iter().map(|c| c.1).sum::<f64>() / self.len as f64
    }
}

/// `sum_j x_j y_(j+k)` for `k` in `-max..=max` and the number of
/// overlapping slot pairs per lag.
fn cross_sums(x: &Stream, y: &Stream, max: i64) -> (Vec<f64>, Vec<f64>) {
    let width = (2 * max + 1) as usize;
    let mut c = vec![0.0; width];
    for &(jx, nx) in &x.counts {
        let lo = (jx as i64 - max).max(0) as u64;
        let start = y.counts.partition_point(|e| e.0 < lo);
        for &(jy, ny) in &y.counts[start..] {
            let k = jy as i64 - jx as i64;
            if k > max {
                break;
            }
            c[(k + max) as usize] += nx * ny;
        }
    }
    let pairs = (-max..=max)
        .map(|k| {
            // j in [0, x.len) and j + k in [0, y.len)
            let lo = (-k).max(0);
            let hi = (x.len as i64).min(y.len as i64 - k);
            (hi - lo).max(0) as f64
        })
        .collect();
    (c, pairs)
}

fn split_streams(series: &TimeTagSeries) -> Vec<Stream> {
    let counts = series.counts_per_pulse();
    let n = series.schedule.n_pulses;
    match series.schedule.pattern {
        PulsePattern::Single => vec![Stream {
            counts: counts.into_iter().map(|(i, c)| (i, c as f64)).collect(),
            len: n,
        }],
        PulsePattern::Alternating => {
            let pick = |parity: u64| Stream {
                counts: counts
                    .iter()
                    .filter(|(i, _)| i % 2 == parity)
                    .map(|&(i, c)| (i / 2, c as f64))
                    .collect(),
                len: (n + 1 - parity) / 2,
            };
            vec![pick(0), pick(1)]
        }
    }
}

/// Pulse-wise second-order correlation.
///
/// `g2(k)` is the mean product of click counts in gates `k` apart divided
/// by the product of the mean counts per gate. At zero lag of a same-channel
/// estimate, `n (n - 1)` counts the pairs within a gate. For alternating
/// schedules the same-channel estimate pools the A-A and B-B correlations
/// and the cross estimate correlates each A gate with the B gate `k` pairs
/// later; lags are then counted in pulse pairs (excitation attempts per
/// transition). Standard errors assume Poisson coincidence counts.
pub fn pulsed_g2(
    series: &TimeTagSeries,
    max_lag: usize,
    same_channel: bool,
) -> Result<CorrelationEstimate> {
    if max_lag < 1 {
        return Err(Error::param("max_lag", "must be at least 1"));
    }
    if series.tags.len() < 2 {
        return Err(Error::InsufficientStatistics(format!(
            "{} tags, need at least 2",
            series.tags.len()
        )));
    }
    let streams = split_streams(series);
    let max = max_lag as i64;
    let width = (2 * max + 1) as usize;
    let mut num = vec![0.0; width];
    let mut den = vec![0.0; width];
    let pairs: Vec<(&Stream, &Stream)> = match (same_channel, streams.len()) {
        (true, _) => streams.iter().map(|s| (s, s)).collect(),
        (false, 2) => vec![(&streams[0], &streams[1])],
        (false, _) => {
            return Err(Error::param(
                "same_channel",
                "cross-correlation needs an alternating schedule",
            ))
        }
    };
    for (x, y) in pairs {
        let (mx, my) = (x.mean(), y.mean());
        if mx == 0.0 || my == 0.0 {
            if same_channel {
                continue;
            }
            return Err(Error::InsufficientStatistics(
                "a channel has no clicks".into(),
            ));
        }
        let (mut c, p) = cross_sums(x, y, max);
        if same_channel {
            // pairs within a gate exclude the click itself
            c[max as usize] = x.counts.iter().map(|e| e.1 * (e.1 - 1.0)).sum();
        }
        for k in 0..width {
            num[k] += c[k];
            den[k] += p[k] * mx * my;
        }
    }
    if den.iter().all(|d| *d == 0.0) {
        return Err(Error::InsufficientStatistics(
            "no clicks in any channel".into(),
        ));
    }
    let g2: Vec<f64> = num
        .iter()
        .zip(&den)
        .map(|(n, d)| if *d > 0.0 { n / d } else { 0.0 })
        .collect();
    let stderr = num
        .iter()
        .zip(&den)
        .map(|(n, d)| if *d > 0.0 { n.max(1.0).sqrt() / d } else { 0.0 })
        .collect();
    Ok(CorrelationEstimate {
        lags: (-max..=max).collect(),
        g2,
        stderr,
        coincidences: num,
        same_channel,
    })
}

/// Fraction of clicks that are signal, given the dark counts per gate
/// from a calibration run.
pub fn signal_fraction(series: &TimeTagSeries, darks_per_window: f64) -> Result<f64> {
    let m = series.mean_clicks();
    if m <= 0.0 {
        return Err(Error::InsufficientStatistics("no clicks".into()));
    }
    Ok((1.0 - darks_per_window / m).clamp(0.0, 1.0))
}

/// Removes accidental coincidences with uncorrelated background from a
/// measured `g2(0)`.
pub fn background_correct(raw_g2_zero: f64, rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::param("rho", "signal fraction must lie in (0, 1]"));
    }
    let r2 = rho * rho;
    Ok((raw_g2_zero - (1.0 - r2)) / r2)
}

/// Exponential shoulder `1 +/- A exp(-|k| / k0)` fitted to a correlation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShoulderFit {
    pub amplitude: f64,
    pub amplitude_stderr: f64,
    pub decay_attempts: f64,
    pub decay_stderr: f64,
    /// False when no significant shoulder was found; the amplitude is then
    /// reported as zero.
    pub significant: bool,
    pub fit: Option<FitResult>,
}

fn shoulder_fit(points: Vec<Point>, sign: f64) -> Result<ShoulderFit> {
    let none = |fit| ShoulderFit {
        amplitude: 0.0,
        amplitude_stderr: 0.0,
        decay_attempts: 0.0,
        decay_stderr: 0.0,
        significant: false,
        fit,
    };
    if points.len() < 3 {
        return Ok(none(None));
    }
    let first = points.iter().min_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    let a0 = sign * (first.1 - 1.0);
    if !(a0 > 0.0) {
        return Ok(none(None));
    }
    let k_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let k0 = points
        .iter()
        .filter(|p| sign * (p.1 - 1.0) < a0 / std::f64::consts::E)
        .map(|p| p.0)
        .fold(f64::INFINITY, f64::min);
    let k0 = if k0.is_finite() {
        k0.max(0.5)
    } else {
        k_max / 3.0
    };
    let fit = match fit::least_squares(
        |k, p| 1.0 + sign * p[0] * (-k / p[1]).exp(),
        &points,
        &["amplitude", "decay_attempts"],
        &[a0, k0],
        &fit::FitOptions::default(),
    ) {
        Ok(f) => f,
        Err(_) => return Ok(none(None)),
    };
    let (a, sa) = (fit.value("amplitude"), fit.stderr("amplitude"));
    if !fit.converged || !(a > 2.0 * sa) || fit.value("decay_attempts") <= 0.0 {
        return Ok(none(Some(fit)));
    }
    Ok(ShoulderFit {
        amplitude: a,
        amplitude_stderr: sa,
        decay_attempts: fit.value("decay_attempts"),
        decay_stderr: fit.stderr("decay_attempts"),
        significant: true,
        fit: Some(fit),
    })
}

fn weighted_points(est: &CorrelationEstimate, keep: impl Fn(i64) -> Option<f64>) -> Vec<Point> {
    est.lags
        .iter()
        .enumerate()
        .filter_map(|(i, &k)| {
            let x = keep(k)?;
            (est.stderr[i] > 0.0).then(|| (x, est.g2[i], 1.0 / est.stderr[i].powi(2)))
        })
        .collect()
}

/// Bunching shoulder `1 + A exp(-k / k0)` over the positive lags of a
/// same-channel estimate.
pub fn bunching_fit(est: &CorrelationEstimate) -> Result<ShoulderFit> {
    if !est.same_channel {
        return Err(Error::param(
            "est",
            "bunching fit needs a same-channel estimate",
        ));
    }
    shoulder_fit(weighted_points(est, |k| (k > 0).then_some(k as f64)), 1.0)
}

/// Antibunching dip `1 - A exp(-|k + 1/2| / k0)` of an alternating-schedule
/// cross-correlation; `|k + 1/2|` is the separation in pulse pairs.
pub fn antibunching_fit(est: &CorrelationEstimate) -> Result<ShoulderFit> {
    if est.same_channel {
        return Err(Error::param(
            "est",
            "antibunching fit needs a cross-channel estimate",
        ));
    }
    shoulder_fit(weighted_points(est, |k| Some((k as f64 + 0.5).abs())), -1.0)
}

/// Histogram of tag delays after the start of their gate, as
/// `(bin centre, count)` over the whole gate.
pub fn fluorescence_bins(series: &TimeTagSeries, bin_us: f64) -> Result<Vec<(f64, f64)>> {
    if !(bin_us > 0.0) {
        return Err(Error::param("bin_us", "must be positive"));
    }
    let gw = series.schedule.gate_window_us;
    let n = (gw / bin_us).floor().max(1.0) as usize;
    let mut counts = vec![0.0; n];
    for t in &series.tags {
        let d = t.timestamp_us - series.schedule.window_start(t.pulse_index);
        let k = (d / bin_us).floor();
        if k >= 0.0 && (k as usize) < n {
            counts[k as usize] += 1.0;
        }
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| ((k as f64 + 0.5) * bin_us, c))
        .collect())
}

/// Exponential-plus-background fit to a fluorescence histogram.
pub fn fit_fluorescence_decay(bins: &[(f64, f64)]) -> Result<FitResult> {
    fit::fit_exponential(&fit::poisson_weighted(bins), fit::ExponentialModel::Decay)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule(n: u64, pattern: PulsePattern) -> PulseSchedule {
        PulseSchedule {
            n_pulses: n,
            period_us: 260.0,
            gate_start_us: 5.0,
            gate_window_us: 250.0,
            pattern,
        }
    }

    fn ideal() -> DetectorConfig {
        DetectorConfig {
            efficiency: 1.0,
            path_efficiency: 1.0,
            dark_rate_hz: 0.0,
            dead_time_us: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_efficiency_no_darks_is_empty() {
        let s = schedule(1000, PulsePattern::Single);
        let em: Vec<Emission> = (0..1000)
            .map(|i| Emission {
                time_us: s.window_start(i) + 10.0,
                channel: DecayChannel::SpCavity,
            })
            .collect();
        let cfg = DetectorConfig {
            efficiency: 0.0,
            dark_rate_hz: 0.0,
            ..Default::default()
        };
        assert!(detect_stream(&em, &cfg, 1.0, &s, 1)
            .unwrap()
            .tags
            .is_empty());
    }

    #[test]
    fn spin_flip_photons_and_ungated_photons_are_lost() {
        let s = schedule(10, PulsePattern::Single);
        let em = [
            Emission {
                time_us: 2.0,
                channel: DecayChannel::SpCavity,
            },
            Emission {
                time_us: 50.0,
                channel: DecayChannel::SfFree,
            },
            Emission {
                time_us: 300.0,
                channel: DecayChannel::SpCavity,
            },
        ];
        let t = detect_stream(&em, &ideal(), 1.0, &s, 0).unwrap();
        assert_eq!(t.tags.len(), 1);
        assert_eq!(t.tags[0].pulse_index, 1);
    }

    #[test]
    fn dead_time_keeps_first_tag() {
        let tags = vec![
            Tag {
                timestamp_us: 10.0,
                pulse_index: 0,
                channel: Channel::FreqA,
            },
            Tag {
                timestamp_us: 10.05,
                pulse_index: 0,
                channel: Channel::Dark,
            },
            Tag {
                timestamp_us: 10.2,
                pulse_index: 0,
                channel: Channel::Dark,
            },
        ];
        let kept = apply_dead_time(tags, 0.1);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].channel, Channel::FreqA);
    }

    #[test]
    fn ideal_single_photons_antibunch() {
        let s = schedule(20_000, PulsePattern::Single);
        let mut rng = par::substream(3, domain::DETECTION, 99);
        let em: Vec<Emission> = (0..s.n_pulses)
            .filter(|_| rng.random::<f64>() < 0.3)
            .map(|i| Emission {
                time_us: s.window_start(i) + 20.0,
                channel: DecayChannel::SpCavity,
            })
            .collect();
        let t = detect_stream(&em, &ideal(), 1.0, &s, 4).unwrap();
        let g = pulsed_g2(&t, 5, true).unwrap();
        assert_eq!(g.at(0).unwrap().0, 0.0);
        for k in 1..=5 {
            let (v, e) = g.at(k).unwrap();
            assert!((v - 1.0).abs() < 4.0 * e, "lag {k}: {v} +/- {e}");
        }
    }

    #[test]
    fn background_correction_inverts_mixing() {
        assert_eq!(background_correct(0.37, 1.0).unwrap(), 0.37);
        let rho: f64 = 0.8;
        let raw = 1.0 - rho * rho;
        assert!(background_correct(raw, rho).unwrap().abs() < 1e-12);
        assert!(background_correct(0.1, 0.0).is_err());
    }

    #[test]
    fn too_few_tags() {
        let t = TimeTagSeries {
            schedule: schedule(10, PulsePattern::Single),
            tags: vec![],
        };
        assert!(matches!(
            pulsed_g2(&t, 3, true),
            Err(Error::InsufficientStatistics(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let s = schedule(100, PulsePattern::Alternating);
        let cfg = DetectorConfig {
            dark_rate_hz: 2000.0,
            ..Default::default()
        };
        let t = detect_stream(&[], &cfg, 1.0, &s, 8).unwrap();
        assert!(!t.tags.is_empty());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp_us,pulse_index,channel\n"));
        let back = TimeTagSeries::read_csv(&buf[..], s).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn cross_needs_alternating() {
        let s = schedule(100, PulsePattern::Single);
        let cfg = DetectorConfig {
            dark_rate_hz: 5000.0,
            ..Default::default()
        };
        let t = detect_stream(&[], &cfg, 1.0, &s, 8).unwrap();
        assert!(pulsed_g2(&t, 2, false).is_err());
    }

    #[test]
    fn fluorescence_bins_cover_gate() {
        let s = schedule(10, PulsePattern::Single);
        let em = [Emission {
            time_us: s.window_start(3) + 12.5,
            channel: DecayChannel::SpCavity,
        }];
        let t = detect_stream(&em, &ideal(), 1.0, &s, 0).unwrap();
        let b = fluorescence_bins(&t, 5.0).unwrap();
        assert_eq!(b.len(), 50);
        assert_eq!(b[2], (12.5, 1.0));
    }
}
