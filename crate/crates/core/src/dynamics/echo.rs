// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Echo and dynamical-decoupling sequences under OU frequency noise.
//!
//! A sequence is the list of ideal pi pulses `(time, phase)` between the
//! opening and closing pi/2 pulses at `0` and `total`. Each pi pulse about
//! an axis at angle `phi` maps the coherence phase `theta` to
//! `2 phi - theta`, so after `n` pulses the readout phase is
//! `(-1)^n * sum_j s_j * phi_j + 2 sum_k (-1)^(n-k) phi_k`, where `s_j` is
//! the toggling sign of free-evolution segment `j`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use super::ou::ou_evolve_integrated;
use super::NoiseModel;
use crate::par::{self, domain};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Hahn,
    Xy4,
}

/// Pi-pulse list for a named sequence of total free-evolution time `total_us`.
pub fn sequence_for(kind: SequenceKind, total_us: f64) -> Vec<(f64, f64)> {
    match kind {
        SequenceKind::Hahn => vec![(0.5 * total_us, 0.0)],
        SequenceKind::Xy4 => [1.0, 3.0, 5.0, 7.0]
            .iter()
            .zip([0.0, FRAC_PI_2, 0.0, FRAC_PI_2])
            .map(|(k, phi)| (k * total_us / 8.0, phi))
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EchoEstimate {
    pub amplitude: f64,
    pub stderr: f64,
}

fn validate(sequence: &[(f64, f64)], total_us: f64) -> Result<()> {
    if !(total_us >= 0.0) {
        return Err(Error::InvalidSequence(
            "total time must be non-negative".into(),
        ));
    }
    let mut prev = 0.0;
    for (i, &(t, _)) in sequence.iter().enumerate() {
        if !(t > prev && t < total_us) {
            return Err(Error::InvalidSequence(format!(
                "pulse {i} at {t} us overlaps its neighbour or lies outside [0, {total_us}]"
            )));
        }
        prev = t;
    }
    Ok(())
}

fn pulse_phase_constant(sequence: &[(f64, f64)]) -> f64 {
    let n = sequence.len();
    sequence
        .iter()
        .enumerate()
        .map(|(k, &(_, phi))| {
            if (n - k - 1).is_multiple_of(2) {
                phi
            } else {
                -phi
            }
        })
        .sum::<f64>()
        * 2.0
}

/// Free-evolution segments as `(length, toggling sign)`.
fn segments(sequence: &[(f64, f64)], total_us: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(sequence.len() + 1);
    let mut t0 = 0.0;
    let mut s = 1.0;
    for &(t, _) in sequence {
        out.push((t - t0, s));
        s = -s;
        t0 = t;
    }
    out.push((total_us - t0, s));
    out
}

/// Dephasing exponent `chi = <phi^2>/2` for Gaussian OU noise and an
/// arbitrary pi-pulse sequence, summed over the active noise components.
pub fn ou_chi(sequence: &[(f64, f64)], total_us: f64, noise: &NoiseModel) -> f64 {
    let segs = segments(sequence, total_us);
    noise
        .components()
        .into_iter()
        .map(|(sigma, tau)| {
            let omega = 2.0 * PI * sigma;
            let mut acc = 0.0;
            if tau.is_infinite() {
                let net: f64 = segs.iter().map(|(l, s)| l * s).sum();
                return 0.5 * omega * omega * net * net;
            }
            let mut start = 0.0;
            let starts: Vec<f64> = segs
                .iter()
                .map(|(l, _)| {
                    let s = start;
                    start += l;
                    s
                })
                .collect();
            for (i, &(li, si)) in segs.iter().enumerate() {
                let ai = -(-li / tau).exp_m1();
                acc += 2.0 * tau * (li - tau * ai);
                for (j, &(lj, sj)) in segs.iter().enumerate().skip(i + 1) {
                    let aj = -(-lj / tau).exp_m1();
                    let gap = starts[j] - (starts[i] + li);
                    acc += 2.0 * si * sj * tau * tau * ai * aj * (-gap / tau).exp();
                }
            }
            0.5 * omega * omega * acc
        })
        .sum()
}

const TRAJECTORY_CHUNK: usize = 256;

/// Monte Carlo echo amplitude.
///
/// Averages `cos` of the readout phase over `n_trajectories` OU noise
/// realisations and multiplies by the lifetime-limited coherence factor
/// `exp(-total / (2 t1))` and the superhyperfine envelope. Trajectory
/// chunks use independent substreams of `seed`.
pub fn echo_amplitude(
    sequence: &[(f64, f64)],
    total_us: f64,
    noise: &NoiseModel,
    t1_us: f64,
    n_trajectories: usize,
    seed: u64,
) -> Result<EchoEstimate> {
    validate(sequence, total_us)?;
    noise.validate()?;
    if n_trajectories == 0 {
        return Err(Error::param("n_trajectories", "must be at least 1"));
    }
    if !(t1_us > 0.0) {
        return Err(Error::param("t1_us", "must be positive"));
    }
    let envelope = (-total_us / (2.0 * t1_us)).exp() * noise.shf_envelope(total_us);
    let constant = pulse_phase_constant(sequence);
    let components = noise.components();
    if components.is_empty() {
        return Ok(EchoEstimate {
            amplitude: envelope * constant.cos(),
            stderr: 0.0,
        });
    }
    let segs = segments(sequence, total_us);
    let parity = if sequence.len().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    };
    let chunks = par::chunk_ranges(n_trajectories, TRAJECTORY_CHUNK);
    let sums = par::map_indexed(chunks.len(), |c| {
        let mut rng = par::substream(seed, domain::TRAJECTORIES, c as u64);
        let (mut s, mut ss) = (0.0, 0.0);
        for _ in chunks[c].clone() {
            let mut cycles = 0.0;
            for &(sigma, tau) in &components {
                let z: f64 = rng.sample(StandardNormal);
                let mut x = sigma * z;
                for &(len, sign) in &segs {
                    let (nx, y) = ou_evolve_integrated(x, len, sigma, tau, &mut rng);
                    x = nx;
                    cycles += sign * y;
                }
            }
            let v = (parity * 2.0 * PI * cycles + constant).cos();
            s += v;
            ss += v * v;
        }
        (s, ss)
    });
    let (s, ss) = sums
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = n_trajectories as f64;
    let mean = s / n;
    let var = if n_trajectories > 1 {
        ((ss - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(EchoEstimate {
        amplitude: envelope * mean,
        stderr: envelope * (var / n).sqrt(),
    })
}

/// Echo amplitude against total free-evolution time for a named sequence.
/// Delay `i` uses the derived seed `(seed, i)`.
pub fn dd_coherence_scan(
    kind: SequenceKind,
    delays_us: &[f64],
    t1_us: f64,
    noise: &NoiseModel,
    n_trajectories: usize,
    seed: u64,
) -> Result<Vec<(f64, EchoEstimate)>> {
    if delays_us.windows(2).any(|w| w[1] <= w[0]) || delays_us.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::param("delays", "must be positive and increasing"));
    }
    delays_us
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let est = echo_amplitude(
                &sequence_for(kind, d),
                d,
                noise,
                t1_us,
                n_trajectories,
                par::derive_seed(seed, i as u64),
            )?;
            Ok((d, est))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::OuComponent;
    use crate::oracle;

    fn fast_only(sigma: f64, tau: f64) -> NoiseModel {
        NoiseModel {
            ou_sigma_mhz: 0.0,
            fast: Some(OuComponent {
                sigma_mhz: sigma,
                tau_us: tau,
            }),
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_echo_is_one() {
        for kind in [SequenceKind::Hahn, SequenceKind::Xy4] {
            let e = echo_amplitude(
                &sequence_for(kind, 100.0),
                100.0,
                &NoiseModel::disabled(),
                f64::INFINITY,
                10,
                0,
            )
            .unwrap();
            assert!((e.amplitude - 1.0).abs() < 1e-12, "{kind:?}");
        }
    }

    #[test]
    fn overlapping_pulses_rejected() {
        let seq = [(10.0, 0.0), (10.0, 0.0)];
        assert!(matches!(
            echo_amplitude(&seq, 20.0, &NoiseModel::disabled(), 1.0, 1, 0),
            Err(Error::InvalidSequence(_))
        ));
    }

    #[test]
    fn hahn_chi_closed_form() {
        let (sigma, tau, t) = (0.05, 300.0, 200.0);
        let chi = ou_chi(
            &sequence_for(SequenceKind::Hahn, t),
            t,
            &fast_only(sigma, tau),
        );
        let w = 2.0 * PI * sigma;
        let expected =
            w * w * tau * tau * (t / tau - 3.0 + 4.0 * (-t / (2.0 * tau)).exp() - (-t / tau).exp());
        assert!((chi / expected - 1.0).abs() < 1e-10);
    }

    #[test]
    fn chi_matches_double_integral_for_xy4() {
        let (sigma, tau, t) = (0.02, 150.0, 400.0);
        let seq = sequence_for(SequenceKind::Xy4, t);
        let chi = ou_chi(&seq, t, &fast_only(sigma, tau));
        let flips: Vec<f64> = seq.iter().map(|p| p.0).collect();
        let brute = oracle::ou_chi_double_integral(sigma, tau, t, &flips, 1600);
        assert!((chi / brute - 1.0).abs() < 1e-3, "{chi} vs {brute}");
    }

    #[test]
    fn static_noise_refocuses() {
        let noise = fast_only(0.3, f64::INFINITY);
        let e = echo_amplitude(
            &sequence_for(SequenceKind::Hahn, 80.0),
            80.0,
            &noise,
            131.0,
            2000,
            5,
        )
        .unwrap();
        let env = (-80.0f64 / 262.0).exp();
        assert!((e.amplitude - env).abs() < 1e-9);
    }

    #[test]
    fn xy4_phase_constant_is_trivial() {
        let c = pulse_phase_constant(&sequence_for(SequenceKind::Xy4, 1.0));
        assert!((c.cos() - 1.0).abs() < 1e-12);
    }
}
