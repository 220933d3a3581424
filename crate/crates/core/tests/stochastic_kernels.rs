// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Exp, Normal};

use remsim::dynamics::{
    dd_coherence_scan, ou_chi, ou_step, rap_excitation_probability, sample_decay, sequence_for,
    Electronic, EmitterDynamicState, NoiseModel, OuComponent, PulseSpec, SequenceKind,
    SpinBranching,
};
use remsim::oracle;
use remsim::par::{domain, substream};
use remsim::spin::Spin;

/// Kolmogorov-Smirnov statistic of `samples` against `cdf`.
fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Critical value at the 0.1% level.
fn ks_critical(n: usize) -> f64 {
    1.95 / (n as f64).sqrt()
}

#[test]
fn ou_step_preserves_stationary_law() {
    let (sigma, tau, dt) = (0.17, 1e6, 3.7e5);
    let n = 20_000;
    let mut rng = substream(11, domain::TRAJECTORIES, 0);
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let mut x = sigma * z;
            for _ in 0..3 {
                x = ou_step(x, dt, sigma, tau, &mut rng);
            }
            x
        })
        .collect();
    let law = Normal::new(0.0, sigma).unwrap();
    let d = ks_statistic(samples, |x| law.cdf(x));
    assert!(d < ks_critical(n), "D = {d}");
}

#[test]
fn ou_conditional_law_is_exact() {
    let (sigma, tau, dt, x0) = (0.3, 50.0, 20.0, 0.4);
    let n = 20_000;
    let mut rng = substream(12, domain::TRAJECTORIES, 0);
    let samples: Vec<f64> = (0..n)
        .map(|_| ou_step(x0, dt, sigma, tau, &mut rng))
        .collect();
    let mu = (-dt / tau).exp();
    let law = Normal::new(x0 * mu, sigma * (1.0 - mu * mu).sqrt()).unwrap();
    let d = ks_statistic(samples, |x| law.cdf(x));
    assert!(d < ks_critical(n), "D = {d}");
}

#[test]
fn decay_times_are_exponential_with_purcell_rate() {
    let b = SpinBranching {
        q_flip: 0.01,
        bulk_lifetime_us: 11_400.0,
    };
    let state = EmitterDynamicState {
        electronic: Electronic::Excited,
        ..EmitterDynamicState::ground(Spin::Low)
    };
    let n = 20_000;
    let mut rng = substream(13, domain::EMITTER_DYNAMICS, 0);
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            sample_decay(&state, 86.0, &b, &mut rng)
                .unwrap()
                .emission_time_us
        })
        .collect();
    let law = Exp::new(87.0 / 11_400.0).unwrap();
    let d = ks_statistic(samples, |x| law.cdf(x));
    assert!(d < ks_critical(n), "D = {d}");
}

#[test]
fn monte_carlo_echo_matches_analytic_decay() {
    let noise = NoiseModel {
        ou_sigma_mhz: 0.0,
        fast: Some(OuComponent {
            sigma_mhz: 0.004,
            tau_us: 2_000.0,
        }),
        ..Default::default()
    };
    let delays: Vec<f64> = (1..=12).map(|i| 50.0 * i as f64).collect();
    for kind in [SequenceKind::Hahn, SequenceKind::Xy4] {
        let scan = dd_coherence_scan(kind, &delays, 290.0, &noise, 4_000, 21).unwrap();
        for (t, est) in scan {
            let analytic = (-t / 580.0).exp() * (-ou_chi(&sequence_for(kind, t), t, &noise)).exp();
            let z = (est.amplitude - analytic) / est.stderr.max(1e-12);
            assert!(z.abs() < 4.0, "{kind:?} at {t} us: z = {z}");
        }
    }
}

#[test]
fn rap_agrees_with_bloch_oracle_on_grid() {
    for (rabi, chirp, dur) in [(0.2, 0.25, 4.0), (0.5, 0.6, 2.5 / 0.6), (0.3, 0.25, 4.0)] {
        let pulse = PulseSpec::square_chirp(dur, chirp, rabi);
        let half = 0.5 * chirp * dur + 0.5;
        for i in 0..20 {
            let d = -half + 2.0 * half * i as f64 / 19.0;
            let ours = rap_excitation_probability(&pulse, d).unwrap();
            let brute = oracle::chirped_pulse_bloch(rabi, chirp, dur, d);
            assert!(
                (ours - brute).abs() <= 0.02,
                "rabi {rabi} detuning {d}: {ours} vs {brute}"
            );
        }
    }
}
