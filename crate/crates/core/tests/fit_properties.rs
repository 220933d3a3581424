// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use remsim::fit::{self, least_squares, ExponentialModel, FitOptions, Point};
use remsim::par::{domain, substream};

fn gauss(x: f64, p: &[f64]) -> f64 {
    p[3] + p[2] * (-4.0 * std::f64::consts::LN_2 * ((x - p[0]) / p[1]).powi(2)).exp()
}

fn noisy_gaussian(seed: u64, n: usize) -> Vec<Point> {
    let mut rng = substream(seed, domain::SCAN, 0);
    let noise = Normal::new(0.0, 0.5).unwrap();
    (0..n)
        .map(|i| {
            let x = -2.0 + 4.0 * i as f64 / (n - 1) as f64;
            (
                x,
                gauss(x, &[0.1, 0.8, 10.0, 1.0]) + noise.sample(&mut rng),
                4.0,
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fits_do_not_depend_on_point_order(seed in 0u64..10_000, shuffle_seed in 0u64..10_000) {
        let data = noisy_gaussian(seed, 61);
        let mut shuffled = data.clone();
        let mut rng = substream(shuffle_seed, domain::SCAN, 1);
        for i in (1..shuffled.len()).rev() {
            let j = rng.random_range(0..=i);
            shuffled.swap(i, j);
        }
        let a = fit::fit_gaussian_peak(&data).unwrap();
        let b = fit::fit_gaussian_peak(&shuffled).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn refit_from_optimum_stops_at_once(seed in 0u64..10_000) {
        let data = noisy_gaussian(seed, 61);
        let names = ["center", "fwhm", "amplitude", "offset"];
        let first = least_squares(gauss, &data, &names, &[0.0, 1.0, 8.0, 0.0], &FitOptions::default()).unwrap();
        prop_assert!(first.converged);
        let again = least_squares(gauss, &data, &names, &first.values(), &FitOptions::default()).unwrap();
        prop_assert!(again.converged);
        prop_assert!(again.iterations <= 2, "{} iterations", again.iterations);
    }

    #[test]
    fn residual_never_increases(seed in 0u64..10_000) {
        let data = noisy_gaussian(seed, 41);
        let f = least_squares(gauss, &data, &["c", "w", "a", "o"], &[0.5, 2.0, 3.0, 0.0], &FitOptions::default()).unwrap();
        prop_assert!(f.history.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn stderr_scales_as_inverse_root_n() {
    let mut rng = substream(3, domain::SCAN, 2);
    let noise = Normal::new(0.0, 5.0).unwrap();
    let base: Vec<Point> = (0..60)
        .map(|i| {
            let x = i as f64 * 10.0;
            (
                x,
                900.0 * (-x / 131.0).exp() + 4.0 + noise.sample(&mut rng),
                1.0,
            )
        })
        .collect();
    let one = fit::fit_exponential(&base, ExponentialModel::Decay).unwrap();
    let four: Vec<Point> = base.iter().cycle().take(4 * base.len()).cloned().collect();
    let quad = fit::fit_exponential(&four, ExponentialModel::Decay).unwrap();
    for name in ["amplitude", "tau", "offset"] {
        let ratio = quad.stderr(name) / one.stderr(name);
        assert!((ratio - 0.5).abs() < 0.02, "{name}: {ratio}");
        assert!((quad.value(name) - one.value(name)).abs() < 1e-6 * one.value(name).abs().max(1.0));
    }
}

#[test]
fn mismatched_names_are_rejected() {
    let data = noisy_gaussian(1, 21);
    assert!(least_squares(
        gauss,
        &data,
        &["a"],
        &[0.0, 1.0, 1.0, 0.0],
        &FitOptions::default()
    )
    .is_err());
}
