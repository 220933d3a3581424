// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

use proptest::prelude::*;
use rand_distr::{Distribution, Exp};

use remsim::detection::{
    background_correct, detect_stream, fit_fluorescence_decay, fluorescence_bins, pulsed_g2,
    signal_fraction, Channel, DetectorConfig, Emission, PulsePattern, PulseSchedule, Tag,
    TimeTagSeries,
};
use remsim::dynamics::DecayChannel;
use remsim::par::{self, domain, substream};

fn schedule(n: u64, pattern: PulsePattern) -> PulseSchedule {
    PulseSchedule {
        n_pulses: n,
        period_us: 260.0,
        gate_start_us: 5.0,
        gate_window_us: 250.0,
        pattern,
    }
}

fn darks_only(rate_hz: f64) -> DetectorConfig {
    DetectorConfig {
        dark_rate_hz: rate_hz,
        dead_time_us: 0.0,
        ..Default::default()
    }
}

prop_compose! {
    fn tag_series()(steps in prop::collection::vec((0u64..4, 0.0f64..250.0), 1..60)) -> TimeTagSeries {
        let sch = schedule(400, PulsePattern::Alternating);
        let mut pulse = 0u64;
        let mut tags: Vec<Tag> = Vec::new();
        for (dp, dt) in steps {
            pulse += dp;
            let t = sch.window_start(pulse) + dt;
            let t = tags.last().map_or(t, |p| t.max(p.timestamp_us));
            tags.push(Tag { timestamp_us: t, pulse_index: pulse, channel: sch.label(pulse) });
        }
        TimeTagSeries { schedule: sch, tags }
    }
}

proptest! {
    #[test]
    fn tag_files_round_trip(series in tag_series()) {
        let mut buf = Vec::new();
        series.write_csv(&mut buf).unwrap();
        let back = TimeTagSeries::read_csv(buf.as_slice(), series.schedule).unwrap();
        prop_assert_eq!(back, series);
    }

    #[test]
    fn uncorrelated_background_corrects_to_one(rho in 0.05f64..1.0) {
        prop_assert!((background_correct(1.0, rho).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_signal_needs_no_correction(raw in 0.0f64..2.0) {
        prop_assert_eq!(background_correct(raw, 1.0).unwrap(), raw);
    }
}

#[test]
fn signal_fraction_is_bounded() {
    let sch = schedule(200_000, PulsePattern::Single);
    let series = detect_stream(&[], &darks_only(400.0), 0.0, &sch, 5).unwrap();
    for darks in [0.0, 0.05, 0.1, 0.2, 10.0] {
        let rho = signal_fraction(&series, darks).unwrap();
        assert!((0.0..=1.0).contains(&rho));
    }
}

#[test]
fn poisson_darks_are_uncorrelated() {
    let sch = schedule(400_000, PulsePattern::Single);
    let series = detect_stream(&[], &darks_only(400.0), 0.0, &sch, 6).unwrap();
    let est = pulsed_g2(&series, 5, true).unwrap();
    for (i, &lag) in est.lags.iter().enumerate() {
        assert!(
            (est.g2[i] - 1.0).abs() < 4.0 * est.stderr[i],
            "lag {lag}: {} +- {}",
            est.g2[i],
            est.stderr[i]
        );
    }
    for k in 1..=5 {
        assert_eq!(est.at(k).unwrap().0, est.at(-k).unwrap().0);
    }
}

#[test]
fn detection_is_independent_of_worker_count() {
    let sch = schedule(300_000, PulsePattern::Alternating);
    let mut rng = substream(7, domain::EMITTER_DYNAMICS, 0);
    let life = Exp::new(1.0 / 131.0).unwrap();
    let emissions: Vec<Emission> = (0..sch.n_pulses)
        .step_by(3)
        .map(|i| Emission {
            time_us: sch.pulse_time(i) + life.sample(&mut rng),
            channel: DecayChannel::SpCavity,
        })
        .collect();
    let cfg = DetectorConfig::default();
    let one = par::with_workers(1, || {
        detect_stream(&emissions, &cfg, 0.75, &sch, 8).unwrap()
    });
    let many = par::with_workers(6, || {
        detect_stream(&emissions, &cfg, 0.75, &sch, 8).unwrap()
    });
    assert_eq!(one, many);
    assert!(one
        .tags
        .iter()
        .all(|t| t.channel != Channel::Dark || t.pulse_index < sch.n_pulses));
}

#[test]
fn fluorescence_fit_recovers_lifetime() {
    let sch = PulseSchedule {
        gate_start_us: 0.0,
        gate_window_us: 1_000.0,
        period_us: 1_200.0,
        ..schedule(60_000, PulsePattern::Single)
    };
    let mut rng = substream(9, domain::EMITTER_DYNAMICS, 0);
    let life = Exp::new(1.0 / 131.0).unwrap();
    let emissions: Vec<Emission> = (0..sch.n_pulses)
        .map(|i| Emission {
            time_us: sch.pulse_time(i) + life.sample(&mut rng),
            channel: DecayChannel::SpCavity,
        })
        .collect();
    let cfg = DetectorConfig {
        efficiency: 1.0,
        path_efficiency: 1.0,
        ..Default::default()
    };
    let series = detect_stream(&emissions, &cfg, 1.0, &sch, 10).unwrap();
    let fit = fit_fluorescence_decay(&fluorescence_bins(&series, 5.0).unwrap()).unwrap();
    let (tau, se) = (fit.value("tau"), fit.stderr("tau"));
    assert!((tau - 131.0).abs() < 4.0 * se, "{tau} +- {se}");
}

#[test]
fn out_of_range_pulse_index_is_rejected() {
    let sch = schedule(10, PulsePattern::Single);
    let csv = "timestamp_us,pulse_index,channel\n10.0,3,freq_a\n3000.0,11,freq_a\n";
    assert!(TimeTagSeries::read_csv(csv.as_bytes(), sch).is_err());
}
