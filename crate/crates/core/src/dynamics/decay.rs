// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{Electronic, EmitterDynamicState};
use crate::spin::Spin;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayChannel {
    /// Spin-preserving photon into the cavity mode.
    SpCavity,
    /// Spin-flip photon into free space (never detected).
    SfFree,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinBranching {
    /// Probability per decay that the spin is randomised.
    pub q_flip: f64,
    /// Free-space lifetime (us).
    pub bulk_lifetime_us: f64,
}

impl SpinBranching {
    /// Branching that randomises the spin after `attempts / p_exc` decays
    /// on average, so the spin memory decays over `attempts` excitation
    /// attempts at excitation probability `p_exc`.
    pub fn for_memory(attempts: f64, p_exc: f64, bulk_lifetime_us: f64) -> Self {
        SpinBranching {
            q_flip: (1.0 / (attempts * p_exc)).min(1.0),
            bulk_lifetime_us,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayEvent {
    pub emission_time_us: f64,
    pub channel: DecayChannel,
    pub new_spin: Spin,
}

/// Draws the decay of an excited emitter.
///
/// The emission time is exponential with total rate `(1 + P) / T_bulk`.
/// With probability `q_flip` the decay goes through the spin-flip branch
/// and the spin is redrawn uniformly; otherwise the photon is emitted into
/// the cavity on the spin-preserving transition.
pub fn sample_decay<R: Rng + ?Sized>(
    state: &EmitterDynamicState,
    purcell: f64,
    branching: &SpinBranching,
    rng: &mut R,
) -> Result<DecayEvent> {
    if state.electronic != Electronic::Excited {
        return Err(Error::param("state", "emitter is not excited"));
    }
    if !(0.0..=1.0).contains(&branching.q_flip) {
        return Err(Error::param("q_flip", "must lie in [0, 1]"));
    }
    if !(purcell >= 0.0) || !(branching.bulk_lifetime_us > 0.0) {
        return Err(Error::param(
            "purcell",
            "need purcell >= 0 and a positive lifetime",
        ));
    }
    Ok(draw(state.spin, purcell, branching, rng))
}

/// Unchecked inner loop version of [`sample_decay`].
pub(crate) fn draw<R: Rng + ?Sized>(
    spin: Spin,
    purcell: f64,
    branching: &SpinBranching,
    rng: &mut R,
) -> DecayEvent {
    let rate = (1.0 + purcell) / branching.bulk_lifetime_us;
    let emission_time_us = Exp::new(rate).unwrap().sample(rng);
    if rng.random::<f64>() < branching.q_flip {
        let new_spin = if rng.random::<bool>() {
            Spin::Low
        } else {
            Spin::High
        };
        DecayEvent {
            emission_time_us,
            channel: DecayChannel::SfFree,
            new_spin,
        }
    } else {
        DecayEvent {
            emission_time_us,
            channel: DecayChannel::SpCavity,
            new_spin: spin,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::{domain, substream};

    fn excited() -> EmitterDynamicState {
        EmitterDynamicState {
            electronic: Electronic::Excited,
            ..EmitterDynamicState::ground(Spin::Low)
        }
    }

    #[test]
    fn no_flip_keeps_spin() {
        let b = SpinBranching {
            q_flip: 0.0,
            bulk_lifetime_us: 11_400.0,
        };
        let mut rng = substream(1, domain::EMITTER_DYNAMICS, 0);
        for _ in 0..1000 {
            let e = sample_decay(&excited(), 50.0, &b, &mut rng).unwrap();
            assert_eq!(e.new_spin, Spin::Low);
            assert_eq!(e.channel, DecayChannel::SpCavity);
        }
    }

    #[test]
    fn mean_emission_time_is_enhanced_lifetime() {
        let b = SpinBranching {
            q_flip: 0.0,
            bulk_lifetime_us: 11_400.0,
        };
        let mut rng = substream(2, domain::EMITTER_DYNAMICS, 0);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| {
                sample_decay(&excited(), 109.0, &b, &mut rng)
                    .unwrap()
                    .emission_time_us
            })
            .sum::<f64>()
            / n as f64;
        assert!(
            (mean - 103.64).abs() < 4.0 * 103.64 / (n as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn ground_state_cannot_decay() {
        let b = SpinBranching {
            q_flip: 0.0,
            bulk_lifetime_us: 1.0,
        };
        let mut rng = substream(3, domain::EMITTER_DYNAMICS, 0);
        assert!(sample_decay(&EmitterDynamicState::ground(Spin::Low), 1.0, &b, &mut rng).is_err());
    }
}
