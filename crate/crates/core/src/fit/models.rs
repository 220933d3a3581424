// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use super::{least_squares, FitOptions, FitResult, Point};
use crate::crystal::voigt_profile;
use crate::{Error, Result};

/// Count data with Poisson weights `1 / max(y, 1)`.
pub fn poisson_weighted(points: &[(f64, f64)]) -> Vec<Point> {
    points
        .iter()
        .map(|&(x, y)| (x, y, 1.0 / y.max(1.0)))
        .collect()
}

pub fn uniform_weighted(points: &[(f64, f64)]) -> Vec<Point> {
    points.iter().map(|&(x, y)| (x, y, 1.0)).collect()
}

/// Canonical ordering so that fits do not depend on input order.
fn sorted(data: &[Point]) -> Vec<Point> {
    let mut d = data.to_vec();
    d.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
    });
    d
}

fn median_spacing(d: &[Point]) -> f64 {
    let mut gaps: Vec<f64> = d
        .windows(2)
        .map(|w| w[1].0 - w[0].0)
        .filter(|g| *g > 0.0)
        .collect();
    if gaps.is_empty() {
        return 1.0;
    }
    gaps.sort_by(f64::total_cmp);
    gaps[gaps.len() / 2]
}

/// x at which the cumulative sum of positive `y` reaches fraction `q`.
fn quantile_x(d: &[Point], q: f64) -> f64 {
    let total: f64 = d.iter().map(|p| p.1.max(0.0)).sum();
    let target = q * total;
    let mut acc = 0.0;
    for w in d.windows(2) {
        let next = acc + w[0].1.max(0.0);
        if next >= target {
            let f = if w[0].1 > 0.0 {
                (target - acc) / w[0].1
            } else {
                0.0
            };
            return w[0].0 + f * (w[1].0 - w[0].0);
        }
        acc = next;
    }
    d.last().map(|p| p.0).unwrap_or(0.0)
}

fn check_peak_bins(d: &[Point]) -> Result<()> {
    let min = d.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).max(0.0);
    let floor = min + 3.0 * min.max(1.0).sqrt();
    let above = d.iter().filter(|p| p.1 > floor).count();
    if above < 8 {
        return Err(Error::InsufficientStatistics(format!(
            "{above} bins above the noise floor, need at least 8"
        )));
    }
    Ok(())
}

fn voigt_model(x: f64, p: &[f64]) -> f64 {
    let (l, g) = (p[1].abs(), p[2].abs());
    if l == 0.0 && g == 0.0 {
        return 0.0;
    }
    p[3] * voigt_profile(x - p[0], l, g)
}

/// Voigt fit to a count histogram given as `(bin centre, count)`.
///
/// Parameters `center`, `lorentzian_fwhm`, `gaussian_fwhm`, `area`, where
/// `area` is the total count times the bin width.
pub fn fit_voigt(histogram: &[(f64, f64)]) -> Result<FitResult> {
    let d = sorted(&poisson_weighted(histogram));
    check_peak_bins(&d)?;
    let total: f64 = d.iter().map(|p| p.1.max(0.0)).sum();
    let center = d.iter().map(|p| p.0 * p.1.max(0.0)).sum::<f64>() / total;
    let iqr = (quantile_x(&d, 0.75) - quantile_x(&d, 0.25)).max(median_spacing(&d));
    // A Voigt with equal widths w has FWHM ~1.64 w; the IQR of the profile
    // lies between 0.57 and 1 FWHM.
    let width = 1.3 * iqr / 1.64;
    let area = total * median_spacing(&d);
    let mut fit = least_squares(
        voigt_model,
        &d,
        &["center", "lorentzian_fwhm", "gaussian_fwhm", "area"],
        &[center, width, width, area],
        &FitOptions::default(),
    )?;
    for name in ["lorentzian_fwhm", "gaussian_fwhm"] {
        let v = fit.value(name).abs();
        fit.set(name, v);
    }
    Ok(fit)
}

fn lorentz_model(x: f64, p: &[f64]) -> f64 {
    let h = 0.5 * p[1];
    p[2] * h.abs() / (PI * ((x - p[0]).powi(2) + h * h))
}

/// Lorentzian fit to a count histogram; parameters `center`, `fwhm`, `area`.
pub fn fit_lorentzian(histogram: &[(f64, f64)]) -> Result<FitResult> {
    let d = sorted(&poisson_weighted(histogram));
    check_peak_bins(&d)?;
    let total: f64 = d.iter().map(|p| p.1.max(0.0)).sum();
    let center = d.iter().map(|p| p.0 * p.1.max(0.0)).sum::<f64>() / total;
    let iqr = (quantile_x(&d, 0.75) - quantile_x(&d, 0.25)).max(median_spacing(&d));
    let mut fit = least_squares(
        lorentz_model,
        &d,
        &["center", "fwhm", "area"],
        &[center, iqr, total * median_spacing(&d)],
        &FitOptions::default(),
    )?;
    let v = fit.value("fwhm").abs();
    fit.set("fwhm", v);
    Ok(fit)
}

fn gauss_model(x: f64, p: &[f64]) -> f64 {
    p[3] + p[2] * (-4.0 * LN_2 * ((x - p[0]) / p[1]).powi(2)).exp()
}

/// Gaussian peak on a constant background; parameters `center`, `fwhm`,
/// `amplitude`, `offset`.
pub fn fit_gaussian_peak(trace: &[Point]) -> Result<FitResult> {
    let d = sorted(trace);
    if d.len() < 5 {
        return Err(Error::FitSetup(
            "need at least 5 points for a Gaussian peak".into(),
        ));
    }
    let offset = d.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let (imax, peak) = d
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, p)| {
            if p.1 > acc.1 {
                (i, p.1)
            } else {
                acc
            }
        });
    let amplitude = peak - offset;
    let half = offset + 0.5 * amplitude;
    let lo = d[..=imax]
        .iter()
        .rev()
        .find(|p| p.1 < half)
        .map(|p| p.0)
        .unwrap_or(d[0].0);
    let hi = d[imax..]
        .iter()
        .find(|p| p.1 < half)
        .map(|p| p.0)
        .unwrap_or(d[d.len() - 1].0);
    let fwhm = (hi - lo).max(2.0 * median_spacing(&d));
    let mut fit = least_squares(
        gauss_model,
        &d,
        &["center", "fwhm", "amplitude", "offset"],
        &[d[imax].0, fwhm, amplitude, offset],
        &FitOptions::default(),
    )?;
    let v = fit.value("fwhm").abs();
    fit.set("fwhm", v);
    Ok(fit)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentialModel {
    /// `amplitude * exp(-x / tau) + offset`.
    Decay,
    /// `amplitude * exp(-x / tau)`; the offset is fixed at zero.
    EchoEnvelope,
}

/// Exponential fit; parameters `amplitude`, `tau`, `offset`.
pub fn fit_exponential(trace: &[Point], model: ExponentialModel) -> Result<FitResult> {
    let d = sorted(trace);
    if d.len() < 3 {
        return Err(Error::FitSetup(
            "need at least 3 points for an exponential".into(),
        ));
    }
    let offset = match model {
        ExponentialModel::Decay => {
            let tail = &d[d.len() - (d.len() / 10).max(1)..];
            tail.iter().map(|p| p.1).sum::<f64>() / tail.len() as f64
        }
        ExponentialModel::EchoEnvelope => 0.0,
    };
    let a0 = d[0].1 - offset;
    // log-linear regression over the part of the trace well above the offset
    let pts: Vec<(f64, f64)> = d
        .iter()
        .filter(|p| p.1 - offset > 0.2 * a0.abs() && a0 > 0.0)
        .map(|p| (p.0, (p.1 - offset).ln()))
        .collect();
    let span = d[d.len() - 1].0 - d[0].0;
    let mut tau = span / 3.0;
    let mut amp = a0;
    if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx > 0.0 && sxy < 0.0 {
            let slope = sxy / sxx;
            tau = -1.0 / slope;
            amp = (my - slope * mx).exp();
        }
    }
    if !(tau > 0.0 && tau.is_finite()) {
        tau = span.max(1.0) / 3.0;
    }
    match model {
        ExponentialModel::Decay => least_squares(
            |x, p| p[0] * (-x / p[1]).exp() + p[2],
            &d,
            &["amplitude", "tau", "offset"],
            &[amp, tau, offset],
            &FitOptions::default(),
        ),
        ExponentialModel::EchoEnvelope => {
            let mut fit = least_squares(
                |x, p| p[0] * (-x / p[1]).exp(),
                &d,
                &["amplitude", "tau"],
                &[amp, tau],
                &FitOptions::default(),
            )?;
            fit.params.push(super::FitParam {
                name: "offset".into(),
                value: 0.0,
                stderr: 0.0,
            });
            Ok(fit)
        }
    }
}

/// Best single frequency by a least-squares periodogram, returning
/// `(frequency, amplitude, phase, offset)` for `A cos(2 pi f x + phase) + c`.
fn periodogram_guess(d: &[Point]) -> (f64, f64, f64, f64) {
    let span = (d[d.len() - 1].0 - d[0].0).max(f64::MIN_POSITIVE);
    let nyquist = 0.5 / median_spacing(d);
    let f_lo = 0.5 / span;
    let df = 0.05 / span;
    let n_freq = (((nyquist - f_lo) / df).ceil() as usize).clamp(1, 20_000);
    let mut best = (f64::INFINITY, f_lo, 0.0, 0.0, 0.0);
    for k in 0..=n_freq {
        let f = f_lo + k as f64 * df;
        if let Some((a, b, c, rss)) = linear_trig_fit(d, f) {
            if rss < best.0 {
                best = (rss, f, a, b, c);
            }
        }
    }
    let (_, f, a, b, c) = best;
    (f, a.hypot(b), (-b).atan2(a), c)
}

/// Weighted linear fit of `a cos + b sin + c` at frequency `f`.
fn linear_trig_fit(d: &[Point], f: f64) -> Option<(f64, f64, f64, f64)> {
    let mut m = nalgebra::Matrix3::<f64>::zeros();
    let mut v = nalgebra::Vector3::<f64>::zeros();
    for &(x, y, w) in d {
        let (s, c) = (2.0 * PI * f * x).sin_cos();
        let basis = nalgebra::Vector3::new(c, s, 1.0);
        m += w * basis * basis.transpose();
        v += w * y * basis;
    }
    let sol = m.lu().solve(&v)?;
    let rss = d
        .iter()
        .map(|&(x, y, w)| {
            let (s, c) = (2.0 * PI * f * x).sin_cos();
            w * (y - sol[0] * c - sol[1] * s - sol[2]).powi(2)
        })
        .sum();
    Some((sol[0], sol[1], sol[2], rss))
}

fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Puts `(amplitude, period, phase)` in the canonical form with positive
/// amplitude and period and phase in `(-pi, pi]`.
fn canonical_sinusoid(fit: &mut FitResult) {
    let (mut a, mut per, mut phi) = (
        fit.value("amplitude"),
        fit.value("period"),
        fit.value("phase"),
    );
    if per < 0.0 {
        per = -per;
        phi = -phi;
    }
    if a < 0.0 {
        a = -a;
        phi += PI;
    }
    fit.set("amplitude", a);
    fit.set("period", per);
    fit.set("phase", wrap_phase(phi));
}

/// `amplitude * cos(2 pi x / period + phase) + offset`.
pub fn fit_sinusoid(trace: &[Point]) -> Result<FitResult> {
    let d = sorted(trace);
    if d.len() < 5 {
        return Err(Error::FitSetup(
            "need at least 5 points for a sinusoid".into(),
        ));
    }
    let (f, a, phi, c) = periodogram_guess(&d);
    let mut fit = least_squares(
        |x, p| p[0] * (2.0 * PI * x / p[1] + p[2]).cos() + p[3],
        &d,
        &["amplitude", "period", "phase", "offset"],
        &[a, 1.0 / f, phi, c],
        &FitOptions::default(),
    )?;
    canonical_sinusoid(&mut fit);
    Ok(fit)
}

/// `amplitude * exp(-damping * x) * cos(2 pi x / period + phase) + offset`.
pub fn fit_damped_sinusoid(trace: &[Point]) -> Result<FitResult> {
    let d = sorted(trace);
    if d.len() < 6 {
        return Err(Error::FitSetup(
            "need at least 6 points for a damped sinusoid".into(),
        ));
    }
    let (f, a, phi, c) = periodogram_guess(&d);
    let mut fit = least_squares(
        |x, p| p[0] * (-p[1] * x).exp() * (2.0 * PI * x / p[2] + p[3]).cos() + p[4],
        &d,
        &["amplitude", "damping", "period", "phase", "offset"],
        &[a, 0.0, 1.0 / f, phi, c],
        &FitOptions::default(),
    )?;
    canonical_sinusoid(&mut fit);
    Ok(fit)
}

/// Indices (in input order of increasing x) of local maxima whose
/// topographic prominence is at least `min_prominence`.
pub fn find_peaks(points: &[(f64, f64)], min_prominence: f64) -> Vec<usize> {
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            // plateau handling: take the left edge of a flat top
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let mut left_min = y[i];
                let mut k = i;
                while k > 0 {
                    k -= 1;
                    if y[k] > y[i] {
                        break;
                    }
                    left_min = left_min.min(y[k]);
                }
                let mut right_min = y[i];
                let mut k = j;
                while k + 1 < n {
                    k += 1;
                    if y[k] > y[i] {
                        break;
                    }
                    right_min = right_min.min(y[k]);
                }
                if y[i] - left_min.max(right_min) >= min_prominence {
                    out.push(i);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}
