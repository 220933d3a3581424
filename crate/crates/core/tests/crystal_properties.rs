// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use remsim::cavity::{enhanced_lifetime, purcell_from_lifetime, CavityGeometry, CavityMode};
use remsim::crystal::{
    sample_ensemble, sample_offset, spectrum_histogram, voigt_density, voigt_profile,
    CrystalConfig, SatelliteClass, VoigtParams,
};
use remsim::{fit, oracle, par};

proptest! {
    #[test]
    fn voigt_is_exactly_symmetric(x in -5.0f64..5.0, l in 0.0f64..1.0, g in 0.01f64..1.0) {
        prop_assert_eq!(voigt_profile(x, l, g), voigt_profile(-x, l, g));
    }

    #[test]
    fn voigt_density_integrates_to_area(l in 0.02f64..0.5, g in 0.02f64..0.5, area in 0.1f64..10.0) {
        let p = VoigtParams { lorentzian_fwhm: l, gaussian_fwhm: g, center: 0.3, area };
        let w = 50.0 * (l + g);
        let core = oracle::integrate(&|x| voigt_density(x, &p).unwrap(), p.center - w, p.center + w, 1e-10);
        // Lorentzian wings beyond the window, added analytically.
        let tails = area * (1.0 - 2.0 / std::f64::consts::PI * (2.0 * w / l).atan());
        prop_assert!(((core + tails) / area - 1.0).abs() < 1e-4, "{} vs {}", core + tails, area);
    }

    #[test]
    fn histogram_ignores_input_order(seed in 0u64..1000, rot in 0usize..200) {
        let cfg = CrystalConfig::default();
        let mode = CavityMode::new(&CavityGeometry::default()).unwrap();
        let mut ems = sample_ensemble(200, &cfg, &mode.sampling_region(), seed);
        let a = spectrum_histogram(&ems, 0.05, |e| e.purcell + 1.0).unwrap();
        ems.rotate_left(rot);
        ems.reverse();
        let b = spectrum_histogram(&ems, 0.05, |e| e.purcell + 1.0).unwrap();
        prop_assert_eq!(a.dense(), b.dense());
    }

    #[test]
    fn lifetime_and_purcell_are_inverse(p in 0.0f64..200.0, bulk in 1.0f64..20.0) {
        let back = purcell_from_lifetime(enhanced_lifetime(p, bulk), bulk);
        prop_assert!((back - p).abs() < 1e-9 * (1.0 + p));
    }
}

#[test]
fn ensemble_does_not_depend_on_worker_count() {
    let cfg = CrystalConfig::default();
    let region = CavityMode::new(&CavityGeometry::default())
        .unwrap()
        .sampling_region();
    let one = par::with_workers(1, || sample_ensemble(20_000, &cfg, &region, 42));
    let many = par::with_workers(8, || sample_ensemble(20_000, &cfg, &region, 42));
    assert_eq!(one, many);
}

#[test]
fn satellite_classes_follow_binomial_law() {
    let cfg = CrystalConfig::default();
    let classes = [
        SatelliteClass::Main,
        SatelliteClass::A,
        SatelliteClass::B,
        SatelliteClass::C,
        SatelliteClass::D,
    ];
    let n = 1_000_000u64;
    let counts = par::map_indexed(16, |c| {
        let mut k = [0u64; 5];
        for id in (c as u64 * n / 16)..((c as u64 + 1) * n / 16) {
            let (_, class) = sample_offset(id, &cfg, 9);
            // The rare doubly-occupied class is pooled with the main line.
            let i = classes.iter().position(|&x| x == class).unwrap_or(0);
            k[i] += 1;
        }
        k
    })
    .into_iter()
    .fold([0u64; 5], |mut a, b| {
        for i in 0..5 {
            a[i] += b[i];
        }
        a
    });
    let chi2: f64 = classes
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut p = cfg.class_probability(c);
            if c == SatelliteClass::Main {
                p += cfg.class_probability(SatelliteClass::Other);
            }
            let e = n as f64 * p;
            (counts[i] as f64 - e).powi(2) / e
        })
        .sum();
    let p_value = 1.0 - ChiSquared::new(4.0).unwrap().cdf(chi2);
    assert!(p_value > 0.001, "chi2 {chi2}, p {p_value}");
}

fn fitted_lorentzian(cfg: &CrystalConfig) -> f64 {
    let n = 400_000u64;
    let offsets = par::map_indexed(8, |c| {
        ((c as u64 * n / 8)..((c as u64 + 1) * n / 8))
            .map(|id| sample_offset(id, cfg, 5).0)
            .filter(|f| f.abs() < 1.0)
            .collect::<Vec<f64>>()
    });
    let h = remsim::Histogram::from_values(0.01, offsets.into_iter().flatten()).unwrap();
    fit::fit_voigt(&h.dense()).unwrap().value("lorentzian_fwhm")
}

#[test]
fn no_codopants_and_no_residual_is_gaussian() {
    let cfg = CrystalConfig {
        europium_concentration: 0.0,
        erbium_concentration: 0.0,
        residual_lorentzian_fwhm: 0.0,
        ..Default::default()
    };
    let l = fitted_lorentzian(&cfg);
    assert!(l < 0.02, "{l}");
}

#[test]
fn lorentzian_width_grows_with_concentration() {
    let base = fitted_lorentzian(&CrystalConfig::default());
    let doubled = fitted_lorentzian(&CrystalConfig {
        europium_concentration: 2.0 * CrystalConfig::default().europium_concentration,
        ..Default::default()
    });
    let expected = CrystalConfig::default().continuum_lorentzian_fwhm();
    assert!(
        ((doubled - base) / expected - 1.0).abs() < 0.15,
        "{base} -> {doubled}, step {expected}"
    );
}
