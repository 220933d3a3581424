// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Brute-force reference computations.
//!
//! Nothing in here is used by the simulation path. These routines are slow,
//! direct evaluations (quadrature, ODE integration, grid sums, enumeration)
//! that the test suites and the CLI `--oracle` mode compare against.

use std::f64::consts::PI;

use crate::FWHM_PER_SIGMA;

/// Voigt profile as a trapezoid-rule convolution of a Lorentzian with a
/// Gaussian, both given by FWHM.
pub fn voigt_by_convolution(x: f64, lorentzian_fwhm: f64, gaussian_fwhm: f64) -> f64 {
    let sigma = gaussian_fwhm / FWHM_PER_SIGMA;
    let hwhm = 0.5 * lorentzian_fwhm;
    let half_span = 12.0 * sigma;
    let n = 20_000;
    let h = 2.0 * half_span / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let t = -half_span + i as f64 * h;
        let g = (-0.5 * (t / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt());
        let d = x - t;
        let l = hwhm / (PI * (d * d + hwhm * hwhm));
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += w * g * l;
    }
    acc * h
}

/// Full width at half maximum of a symmetric, unimodal profile centred at 0.
pub fn fwhm_by_bisection<F: Fn(f64) -> f64>(f: F) -> f64 {
    let half = 0.5 * f(0.0);
    let mut hi = 1e-3;
    while f(hi) > half {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > half {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + hi
}

/// Adaptive Simpson quadrature.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// Final excited-state population after a linearly chirped square pulse,
/// by fourth-order Runge-Kutta integration of the optical Bloch equations
/// (no damping). Frequencies in MHz, times in us, Rabi frequency as
/// `Omega / 2 pi`.
pub fn chirped_pulse_bloch(
    rabi_mhz: f64,
    chirp_mhz_per_us: f64,
    duration_us: f64,
    static_detuning_mhz: f64,
) -> f64 {
    let omega = 2.0 * PI * rabi_mhz;
    let detuning =
        |t: f64| 2.0 * PI * (chirp_mhz_per_us * (t - 0.5 * duration_us) - static_detuning_mhz);
    let deriv = |t: f64, r: [f64; 3]| {
        let d = detuning(t);
        [-d * r[1], d * r[0] - omega * r[2], omega * r[1]]
    };
    let scale = omega.max(2.0 * PI * (chirp_mhz_per_us * duration_us + static_detuning_mhz.abs()));
    let steps = ((duration_us * scale * 20.0).ceil() as usize).max(2000);
    let h = duration_us / steps as f64;
    let mut r = [0.0, 0.0, -1.0];
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = deriv(t, r);
        let k2 = deriv(t + 0.5 * h, add(r, k1, 0.5 * h));
        let k3 = deriv(t + 0.5 * h, add(r, k2, 0.5 * h));
        let k4 = deriv(t + h, add(r, k3, h));
        for j in 0..3 {
            r[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    0.5 * (1.0 + r[2])
}

fn add(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

/// Volume fraction of a cylinder (radius `radius_um`, thickness
/// `thickness_um`) in which `peak * exp(-2 r^2 / w^2) * cos^2(k (z - z0))`
/// falls in each bin of `edges`. Midpoint rule on a Cartesian grid.
#[allow(clippy::too_many_arguments)]
pub fn purcell_volume_fractions(
    peak: f64,
    waist_um: f64,
    k_medium: f64,
    antinode_um: f64,
    radius_um: f64,
    thickness_um: f64,
    edges: &[f64],
    grid_xy: usize,
    grid_z: usize,
) -> Vec<f64> {
    let dx = 2.0 * radius_um / grid_xy as f64;
    let dz = thickness_um / grid_z as f64;
    let axial: Vec<f64> = (0..grid_z)
        .map(|iz| {
            let z = (iz as f64 + 0.5) * dz;
            (k_medium * (z - antinode_um)).cos().powi(2)
        })
        .collect();
    let mut counts = vec![0u64; edges.len() - 1];
    let mut inside = 0u64;
    for ix in 0..grid_xy {
        let x = -radius_um + (ix as f64 + 0.5) * dx;
        for iy in 0..grid_xy {
            let y = -radius_um + (iy as f64 + 0.5) * dx;
            let r2 = x * x + y * y;
            if r2 > radius_um * radius_um {
                continue;
            }
            let radial = peak * (-2.0 * r2 / (waist_um * waist_um)).exp();
            for a in &axial {
                inside += 1;
                let p = radial * a;
                if let Some(b) = bin_of(edges, p) {
                    counts[b] += 1;
                }
            }
        }
    }
    counts.iter().map(|&c| c as f64 / inside as f64).collect()
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    if v < edges[0] || v >= edges[edges.len() - 1] {
        return None;
    }
    Some(edges.partition_point(|&e| e <= v) - 1)
}

/// Exact pulsed `g2(0)` of the within-window pair estimator for two
/// independent emitters with per-pulse click probabilities `p1`, `p2`, by
/// enumerating the four click patterns.
pub fn two_emitter_g2_zero(p1: f64, p2: f64) -> f64 {
    let mut mean_n = 0.0;
    let mut mean_pairs = 0.0;
    for a in 0..=1u32 {
        for b in 0..=1u32 {
            let prob = if a == 1 { p1 } else { 1.0 - p1 } * if b == 1 { p2 } else { 1.0 - p2 };
            let n = (a + b) as f64;
            mean_n += prob * n;
            mean_pairs += prob * n * (n - 1.0);
        }
    }
    mean_pairs / (mean_n * mean_n)
}

/// Dephasing exponent `chi = <phi^2> / 2` of a sign-toggled phase under
/// Ornstein-Uhlenbeck noise, by direct double integration of the
/// correlation function on a grid. `sigma_mhz` is the stationary std of
/// the frequency, `tau_us` the correlation time and `flips_us` the
/// pi-pulse times within `[0, total_us]`.
pub fn ou_chi_double_integral(
    sigma_mhz: f64,
    tau_us: f64,
    total_us: f64,
    flips_us: &[f64],
    grid: usize,
) -> f64 {
    let h = total_us / grid as f64;
    let sign = |t: f64| {
        if flips_us.iter().filter(|&&f| f < t).count() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    };
    let ts: Vec<(f64, f64)> = (0..grid)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            (t, sign(t))
        })
        .collect();
    let mut acc = 0.0;
    for &(t1, s1) in &ts {
        for &(t2, s2) in &ts {
            acc += s1 * s2 * (-(t1 - t2).abs() / tau_us).exp();
        }
    }
    let omega = 2.0 * PI * sigma_mhz;
    0.5 * omega * omega * acc * h * h
}

/// Location of the minimum of `f` over a box by exhaustive grid search,
/// refined by repeated zooming around the best grid node.
pub fn grid_minimum_2d<F: Fn(f64, f64) -> f64>(f: F, xr: (f64, f64), yr: (f64, f64)) -> (f64, f64) {
    let n = 200;
    let (mut x0, mut x1, mut y0, mut y1) = (xr.0, xr.1, yr.0, yr.1);
    let mut best = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    for _ in 0..12 {
        let (hx, hy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
        let mut fbest = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                let (x, y) = (x0 + i as f64 * hx, y0 + j as f64 * hy);
                let v = f(x, y);
                if v < fbest {
                    fbest = v;
                    best = (x, y);
                }
            }
        }
        x0 = best.0 - 4.0 * hx;
        x1 = best.0 + 4.0 * hx;
        y0 = best.1 - 4.0 * hy;
        y1 = best.1 + 4.0 * hy;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adaptive_simpson_integrates_gaussian() {
        let f = |x: f64| (-x * x).exp();
        let v = integrate(&f, -10.0, 10.0, 1e-12);
        assert!((v - PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn bloch_resonant_square_pulse_is_rabi_flop() {
        // Zero chirp and zero detuning: sin^2(Omega t / 2).
        let p = chirped_pulse_bloch(0.25, 0.0, 1.0, 0.0);
        let expected = (PI * 0.25).sin().powi(2);
        assert!((p - expected).abs() < 1e-8);
    }

    #[test]
    fn two_identical_emitters_give_one_half() {
        assert!((two_emitter_g2_zero(0.03, 0.03) - 0.5).abs() < 1e-12);
        assert!((two_emitter_g2_zero(0.03, 0.0)).abs() < 1e-12);
    }
}
