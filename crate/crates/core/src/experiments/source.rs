// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Pulse-by-pulse Monte Carlo of one emitter under repeated excitation.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::detection::{Emission, PulsePattern, PulseSchedule};
use crate::dynamics::{draw_decay, DecayChannel, PulseSpec, RapTable, SpinBranching};
use crate::par::{self, domain};
use crate::spin::Spin;
use crate::{Error, Result};

/// Pulses simulated per work item.
const SUPER_BLOCK: u64 = 1 << 20;
/// Pulses simulated before each work item to reach the stationary state.
const BURN_IN: u64 = 4096;
const TABLE_POINTS: usize = 401;

/// Everything the pulsed-emitter chain needs to know about one emitter and
/// its drive.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceModel {
    pub purcell: f64,
    pub bulk_lifetime_us: f64,
    /// Pulse on the spin-low transition (every pulse of a single schedule,
    /// even pulses of an alternating one).
    pub pulse_a: PulseSpec,
    /// Pulse on the spin-high transition (odd pulses when alternating).
    pub pulse_b: PulseSpec,
    pub sd_sigma_mhz: f64,
    pub sd_tau_us: f64,
    /// Thermal spin relaxation time; infinite disables relaxation.
    pub spin_t1_us: f64,
    /// Equilibrium population of the low spin level.
    pub thermal_low: f64,
    pub q_flip: f64,
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        self.pulse_a.validate()?;
        self.pulse_b.validate()?;
        if !(self.purcell >= 0.0 && self.bulk_lifetime_us > 0.0) {
            return Err(Error::param(
                "purcell",
                "need purcell >= 0 and a positive lifetime",
            ));
        }
        if !(self.sd_sigma_mhz >= 0.0 && self.sd_tau_us > 0.0 && self.spin_t1_us > 0.0) {
            return Err(Error::param(
                "sd_sigma_mhz",
                "need sigma >= 0 and positive time constants",
            ));
        }
        if !(0.0..=1.0).contains(&self.thermal_low) || !(0.0..=1.0).contains(&self.q_flip) {
            return Err(Error::param("q_flip", "probabilities must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Fraction of cavity-enhanced decays that leave through the mode.
    pub fn cavity_fraction(&self) -> f64 {
        self.purcell / (1.0 + self.purcell)
    }

    /// Mean excitation probability of `pulse` over the stationary
    /// spectral-diffusion distribution.
    pub fn mean_excitation(&self, pulse: &PulseSpec) -> Result<f64> {
        let table = self.table(pulse)?;
        if self.sd_sigma_mhz == 0.0 {
            return Ok(table.eval(0.0));
        }
        let n = 201;
        let (mut s, mut w) = (0.0, 0.0);
        for i in 0..n {
            let z = -5.0 + 10.0 * i as f64 / (n - 1) as f64;
            let g = (-0.5 * z * z).exp();
            s += g * table.eval(z * self.sd_sigma_mhz);
            w += g;
        }
        Ok(s / w)
    }

    /// Relative autocovariance `E[p(x_0) p(x_t)] / p_mean^2 - 1` of the
    /// excitation probability under the stationary spectral diffusion, at
    /// each time lag in `lags_us`, from the Mehler expansion of the OU
    /// transition density in Hermite polynomials.
    pub fn brightness_correlation(&self, pulse: &PulseSpec, lags_us: &[f64]) -> Result<Vec<f64>> {
        const ORDER: usize = 24;
        if self.sd_sigma_mhz == 0.0 {
            return Ok(vec![0.0; lags_us.len()]);
        }
        let table = self.table(pulse)?;
        let n = 2001;
        let mut coef = [0.0; ORDER + 1];
        let mut norm = 0.0;
        for i in 0..n {
            let z = -8.0 + 16.0 * i as f64 / (n - 1) as f64;
            let g = (-0.5 * z * z).exp();
            let p = table.eval(z * self.sd_sigma_mhz);
            let (mut h0, mut h1) = (1.0, z);
            coef[0] += g * p;
            for (k, c) in coef.iter_mut().enumerate().skip(1) {
                *c += g * p * h1;
                let h2 = z * h1 - k as f64 * h0;
                h0 = h1;
                h1 = h2;
            }
            norm += g;
        }
        let mean = coef[0] / norm;
        // c_k^2 / k!, accumulated without overflow.
        let mut weights = [0.0; ORDER + 1];
        let mut fact = 1.0;
        for k in 1..=ORDER {
            fact *= k as f64;
            weights[k] = (coef[k] / norm).powi(2) / fact / (mean * mean);
        }
        let tau = self.sd_tau_us;
        Ok(lags_us
            .iter()
            .map(|&t| {
                let rho = (-t.abs() / tau).exp();
                let mut r = 1.0;
                let mut acc = 0.0;
                for w in &weights[1..] {
                    r *= rho;
                    acc += w * r;
                }
                acc
            })
            .collect())
    }

    fn table(&self, pulse: &PulseSpec) -> Result<RapTable> {
        let half = 0.5 * pulse.sweep_span_mhz.abs() + 6.0 * self.sd_sigma_mhz + 0.5;
        RapTable::new(pulse, half, TABLE_POINTS)
    }
}

struct Chain<'a> {
    model: &'a SourceModel,
    tables: [RapTable; 2],
    schedule: &'a PulseSchedule,
    branching: SpinBranching,
    sd_mu: f64,
    sd_kick: f64,
    relax: f64,
}

impl Chain<'_> {
    fn thermal_spin<R: Rng>(&self, rng: &mut R) -> Spin {
        if rng.random::<f64>() < self.model.thermal_low {
            Spin::Low
        } else {
            Spin::High
        }
    }

    fn target(&self, i: u64) -> (Spin, usize) {
        match self.schedule.pattern {
            PulsePattern::Alternating if i % 2 == 1 => (Spin::High, 1),
            _ => (Spin::Low, 0),
        }
    }

    /// Runs pulses `from..to`, keeping emissions from pulses at or after
    /// `keep_from`.
    fn run<R: Rng>(
        &self,
        from: u64,
        to: u64,
        keep_from: u64,
        rng: &mut R,
        out: &mut Vec<Emission>,
    ) {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut offset = self.model.sd_sigma_mhz * normal.sample(rng);
        let mut spin = self.thermal_spin(rng);
        let mut busy_until = f64::NEG_INFINITY;
        let beta = self.model.cavity_fraction();
        for i in from..to {
            let t = self.schedule.pulse_time(i);
            offset = offset * self.sd_mu + self.sd_kick * normal.sample(rng);
            if self.relax > 0.0 && rng.random::<f64>() < self.relax {
                spin = self.thermal_spin(rng);
            }
            if t < busy_until {
                continue;
            }
            let (want, which) = self.target(i);
            if spin != want || rng.random::<f64>() >= self.tables[which].eval(offset) {
                continue;
            }
            let pulse = if which == 0 {
                &self.model.pulse_a
            } else {
                &self.model.pulse_b
            };
            let ev = draw_decay(spin, self.model.purcell, &self.branching, rng);
            let time_us = t + pulse.duration_us + ev.emission_time_us;
            busy_until = time_us;
            spin = ev.new_spin;
            if ev.channel == DecayChannel::SpCavity && i >= keep_from && rng.random::<f64>() < beta
            {
                out.push(Emission {
                    time_us,
                    channel: DecayChannel::SpCavity,
                });
            }
        }
    }
}

/// Photons emitted into the cavity mode over a pulse schedule.
///
/// Per pulse: the spectral-diffusion offset takes an exact OU step over the
/// period; with probability `1 - exp(-period / spin_t1)` the spin is
/// redrawn from the thermal distribution; an emitter in the ground state
/// whose spin matches the pulse's transition is excited with the RAP
/// probability at its current offset; the decay time and spin branch are
/// drawn, and a spin-preserving photon enters the cavity with probability
/// `P / (1 + P)`. An emitter that has not yet decayed is not re-excited.
/// Work items of 2^20 pulses start from the thermal state a few thousand
/// pulses early, each with its own substream.
pub fn simulate_emitter(
    model: &SourceModel,
    schedule: &PulseSchedule,
    seed: u64,
) -> Result<Vec<Emission>> {
    model.validate()?;
    schedule.validate()?;
    let period = schedule.period_us;
    let chain = Chain {
        model,
        tables: [model.table(&model.pulse_a)?, model.table(&model.pulse_b)?],
        schedule,
        branching: SpinBranching {
            q_flip: model.q_flip,
            bulk_lifetime_us: model.bulk_lifetime_us,
        },
        sd_mu: (-period / model.sd_tau_us).exp(),
        sd_kick: model.sd_sigma_mhz * (-(-2.0 * period / model.sd_tau_us).exp_m1()).sqrt(),
        relax: -(-period / model.spin_t1_us).exp_m1(),
    };
    let n_blocks = schedule.n_pulses.div_ceil(SUPER_BLOCK) as usize;
    let blocks = par::map_indexed(n_blocks, |b| {
        let mut rng = par::substream(seed, domain::EMITTER_DYNAMICS, b as u64);
        let first = b as u64 * SUPER_BLOCK;
        let last = (first + SUPER_BLOCK).min(schedule.n_pulses);
        let start = first.saturating_sub(BURN_IN);
        let mut out = Vec::new();
        chain.run(start, last, first, &mut rng, &mut out);
        out
    });
    let mut all: Vec<Emission> = blocks.into_iter().flatten().collect();
    all.sort_by(|a, b| a.time_us.total_cmp(&b.time_us));
    Ok(all)
}
