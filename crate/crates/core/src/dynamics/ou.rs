// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

use rand::Rng;
use rand_distr::StandardNormal;

/// Exact Ornstein-Uhlenbeck transition over `dt_us` for a process with
/// stationary std `sigma` and correlation time `tau_us`.
pub fn ou_step<R: Rng + ?Sized>(x: f64, dt_us: f64, sigma: f64, tau_us: f64, rng: &mut R) -> f64 {
    if dt_us == 0.0 {
        return x;
    }
    let mu = (-dt_us / tau_us).exp();
    if sigma == 0.0 {
        return x * mu;
    }
    let sd = sigma * (-(-2.0 * dt_us / tau_us).exp_m1()).sqrt();
    let z: f64 = rng.sample(StandardNormal);
    x * mu + sd * z
}

/// Advances the slow spectral-diffusion offset (MHz) by `dt_us`.
pub fn ou_evolve<R: Rng + ?Sized>(
    offset_mhz: f64,
    dt_us: f64,
    noise: &super::NoiseModel,
    rng: &mut R,
) -> f64 {
    if !noise.pure_dephasing_enabled {
        return offset_mhz;
    }
    ou_step(
        offset_mhz,
        dt_us,
        noise.ou_sigma_mhz,
        noise.slow_tau_us(),
        rng,
    )
}

/// Joint exact update of `(x, int_0^h x dt)` for an OU process.
///
/// Returns the new value and the integral over the step (MHz us, i.e.
/// cycles). An infinite `tau_us` freezes the process.
pub fn ou_evolve_integrated<R: Rng + ?Sized>(
    x: f64,
    h: f64,
    sigma: f64,
    tau_us: f64,
    rng: &mut R,
) -> (f64, f64) {
    if h <= 0.0 {
        return (x, 0.0);
    }
    if tau_us.is_infinite() || sigma == 0.0 {
        return (x, x * h);
    }
    let r = h / tau_us;
    let one_minus_mu = -(-r).exp_m1();
    let mu = 1.0 - one_minus_mu;
    let var_x = sigma * sigma * one_minus_mu * (1.0 + mu);
    // 2r - (1 - mu)(3 - mu), series for small r to avoid cancellation.
    let k = if r < 1e-3 {
        r * r * r * (2.0 / 3.0 - r * (0.5 - r * 7.0 / 30.0))
    } else {
        2.0 * r - one_minus_mu * (3.0 - mu)
    };
    let var_y = sigma * sigma * tau_us * tau_us * k;
    let cov = sigma * sigma * tau_us * one_minus_mu * one_minus_mu;
    let a = var_x.sqrt();
    let b = if a > 0.0 { cov / a } else { 0.0 };
    let c = (var_y - b * b).max(0.0).sqrt();
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    (x * mu + a * z1, x * tau_us * one_minus_mu + b * z1 + c * z2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::NoiseModel;
    use crate::par::{domain, substream};

    #[test]
    fn zero_step_is_identity() {
        let mut rng = substream(1, domain::TRAJECTORIES, 0);
        let n = NoiseModel::default();
        assert_eq!(ou_evolve(0.37, 0.0, &n, &mut rng), 0.37);
    }

    #[test]
    fn integrated_moments_match_closed_form() {
        let (sigma, tau, h) = (0.3, 50.0, 20.0);
        let n = 200_000;
        let mut rng = substream(2, domain::TRAJECTORIES, 0);
        let (mut sy, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let (x, y) = ou_evolve_integrated(0.0, h, sigma, tau, &mut rng);
            sy += y;
            syy += y * y;
            sxy += x * y;
        }
        let nf = n as f64;
        let r: f64 = h / tau;
        let mu = (-r).exp();
        let var_y = sigma * sigma * tau * tau * (2.0 * r - (1.0 - mu) * (3.0 - mu));
        let cov = sigma * sigma * tau * (1.0 - mu).powi(2);
        assert!((sy / nf).abs() < 4.0 * (var_y / nf).sqrt());
        assert!(((syy / nf) / var_y - 1.0).abs() < 0.02);
        assert!(((sxy / nf) / cov - 1.0).abs() < 0.03);
    }

    #[test]
    fn small_step_series_is_continuous() {
        let mut a = substream(3, domain::TRAJECTORIES, 0);
        let mut b = substream(3, domain::TRAJECTORIES, 0);
        let tau = 1.0;
        let lo = ou_evolve_integrated(0.0, 0.999e-3 * tau, 1.0, tau, &mut a);
        let hi = ou_evolve_integrated(0.0, 1.001e-3 * tau, 1.0, tau, &mut b);
        assert!((lo.1 / hi.1 - 1.0).abs() < 0.01);
    }
}
