// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Faddeeva function `w(z) = exp(-z^2) erfc(-iz)` in the upper half plane.
//!
//! Weideman's rational expansion with 32 terms (SIAM J. Numer. Anal. 31,
//! 1497, 1994). The coefficients are the discrete Fourier transform of the
//! mapped integrand and are computed once on first use. Absolute accuracy is
//! around 1e-14 for `Im z >= 0`.

use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::LazyLock;

const N: usize = 32;

struct Weideman {
    l: f64,
    /// Polynomial coefficients, highest degree first.
    coeffs: [f64; N],
}

static TABLE: LazyLock<Weideman> = LazyLock::new(|| {
    let m = 2 * N;
    let m2 = 2 * m;
    let l = (N as f64 / std::f64::consts::SQRT_2).sqrt();
    // f sampled at k = -M+1..M-1, prefixed with a zero: length 2M.
    let mut f = vec![0.0; m2];
    for (slot, k) in (1..m2).zip(-(m as i64) + 1..m as i64) {
        let theta = k as f64 * PI / m as f64;
        let t = l * (theta / 2.0).tan();
        f[slot] = (-t * t).exp() * (l * l + t * t);
    }
    // fftshift for even length is a rotation by M.
    let shifted: Vec<f64> = f[m..].iter().chain(f[..m].iter()).copied().collect();
    let mut a = [0.0; N];
    for (j, slot) in (1..=N).zip((0..N).rev()) {
        let re: f64 = shifted
            .iter()
            .enumerate()
            .map(|(n, &v)| v * (2.0 * PI * (j * n) as f64 / m2 as f64).cos())
            .sum();
        a[slot] = re / m2 as f64;
    }
    Weideman { l, coeffs: a }
});

/// Faddeeva function for `Im z >= 0`.
pub fn w(z: Complex64) -> Complex64 {
    let t = &*TABLE;
    let iz = Complex64::new(-z.im, z.re);
    let denom = Complex64::new(t.l, 0.0) - iz;
    let zz = (Complex64::new(t.l, 0.0) + iz) / denom;
    let p = t
        .coeffs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * zz + c);
    2.0 * p / (denom * denom) + (1.0 / PI.sqrt()) / denom
}
