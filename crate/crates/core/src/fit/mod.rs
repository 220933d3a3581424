// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Weighted nonlinear least squares and the model fits built on it.

mod models;

pub use models::{
    find_peaks, fit_damped_sinusoid, fit_exponential, fit_gaussian_peak, fit_lorentzian,
    fit_sinusoid, fit_voigt, poisson_weighted, uniform_weighted, ExponentialModel,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One data point `(x, y, weight)`; the weight multiplies the squared
/// residual (an inverse variance).
pub type Point = (f64, f64, f64);

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            tolerance: 1e-8,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<FitParam>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    /// Weighted residual norm after every accepted step, starting with the
    /// initial guess.
    #[serde(skip)]
    pub history: Vec<f64>,
}

impl FitResult {
    fn index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Fitted value of `name`. Panics if the parameter does not exist.
    pub fn value(&self, name: &str) -> f64 {
        self.params[self
            .index(name)
            .unwrap_or_else(|| panic!("no parameter `{name}`"))]
        .value
    }

    pub fn stderr(&self, name: &str) -> f64 {
        self.params[self
            .index(name)
            .unwrap_or_else(|| panic!("no parameter `{name}`"))]
        .stderr
    }

    pub fn get(&self, name: &str) -> Option<&FitParam> {
        self.index(name).map(|i| &self.params[i])
    }

    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub(crate) fn set(&mut self, name: &str, value: f64) {
        if let Some(i) = self.index(name) {
            self.params[i].value = value;
        }
    }
}

fn weighted_residuals<F>(model: &F, data: &[Point], p: &[f64], out: &mut DVector<f64>)
where
    F: Fn(f64, &[f64]) -> f64,
{
    for (i, &(x, y, w)) in data.iter().enumerate() {
        out[i] = w.sqrt() * (y - model(x, p));
    }
}

fn jacobian<F>(model: &F, data: &[Point], p: &[f64]) -> DMatrix<f64>
where
    F: Fn(f64, &[f64]) -> f64,
{
    let mut j = DMatrix::zeros(data.len(), p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = 1e-6 * p[k].abs().max(1e-3);
        q[k] = p[k] + h;
        let up: Vec<f64> = data.iter().map(|&(x, _, _)| model(x, &q)).collect();
        q[k] = p[k] - h;
        for (i, &(x, _, w)) in data.iter().enumerate() {
            // derivative of the model; residual derivative is its negative
            j[(i, k)] = w.sqrt() * (up[i] - model(x, &q)) / (2.0 * h);
        }
        q[k] = p[k];
    }
    j
}

fn norm_sq(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Levenberg-Marquardt minimisation of `sum w (y - model(x, p))^2`.
///
/// The Jacobian is formed by central differences. Iteration stops with
/// `converged = true` once both the relative parameter step and the relative
/// change of the squared residual fall below `options.tolerance`, or when
/// the damped step has shrunk below the tolerance without improving the
/// residual (the optimum is resolved to machine precision). Standard errors
/// come from `(J^T W J)^-1` scaled by the reduced chi-square. A singular
/// normal matrix at the optimum gives `converged = false` with a diagnostic.
pub fn least_squares<F>(
    model: F,
    data: &[Point],
    names: &[&str],
    initial: &[f64],
    options: &FitOptions,
) -> Result<FitResult>
where
    F: Fn(f64, &[f64]) -> f64,
{
    let n = data.len();
    let m = initial.len();
    if names.len() != m {
        return Err(Error::FitSetup(format!(
            "{} names for {m} parameters",
            names.len()
        )));
    }
    if m == 0 || n < m {
        return Err(Error::FitSetup(format!("{n} points for {m} parameters")));
    }
    if data
        .iter()
        .any(|&(x, y, w)| !x.is_finite() || !y.is_finite() || !(w >= 0.0 && w.is_finite()))
    {
        return Err(Error::FitSetup(
            "data must be finite with non-negative weights".into(),
        ));
    }
    if initial.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitSetup("initial parameters must be finite".into()));
    }

    let mut p = initial.to_vec();
    let mut r = DVector::zeros(n);
    weighted_residuals(&model, data, &p, &mut r);
    let mut s = norm_sq(&r);
    if !s.is_finite() {
        return Err(Error::FitSetup(
            "model is not finite at the initial parameters".into(),
        ));
    }
    let mut history = vec![s.sqrt()];
    let mut lambda = options.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = DVector::zeros(n);
    let mut j = jacobian(&model, data, &p);

    'outer: while iterations < options.max_iterations {
        iterations += 1;
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &r;
        loop {
            let mut a = jtj.clone();
            for k in 0..m {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let step = match a.clone().cholesky() {
                Some(c) => c.solve(&g),
                None => match a.lu().solve(&g) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        if lambda > 1e20 {
                            break 'outer;
                        }
                        continue;
                    }
                },
            };
            let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rel_step = step.norm() / (p_norm + options.tolerance);
            let candidate: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            weighted_residuals(&model, data, &candidate, &mut trial);
            let s_new = norm_sq(&trial);
            if s_new.is_finite() && s_new <= s {
                let rel_change = (s - s_new) / s.max(f64::MIN_POSITIVE);
                p = candidate;
                std::mem::swap(&mut r, &mut trial);
                s = s_new;
                history.push(s.sqrt());
                lambda = (lambda / 10.0).max(1e-12);
                if rel_step < options.tolerance && rel_change < options.tolerance {
                    converged = true;
                    break 'outer;
                }
                j = jacobian(&model, data, &p);
                break;
            }
            if rel_step < options.tolerance {
                converged = true;
                break 'outer;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                break 'outer;
            }
        }
    }

    let j = jacobian(&model, data, &p);
    let jtj = j.transpose() * &j;
    let dof = n.saturating_sub(m);
    let scale = if dof > 0 { s / dof as f64 } else { 0.0 };
    let mut diagnostic = None;
    let svd = jtj.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cov = if smax > 0.0 && smin > smax * 1e-14 {
        jtj.try_inverse()
    } else {
        None
    };
    let stderrs = match cov {
        Some(c) => (0..m)
            .map(|k| (c[(k, k)].max(0.0) * scale).sqrt())
            .collect(),
        None => {
            converged = false;
            diagnostic = Some("singular Jacobian at the optimum".into());
            vec![f64::NAN; m]
        }
    };
    if !converged && diagnostic.is_none() {
        diagnostic = Some(format!("no convergence after {iterations} iterations"));
    }
    if p.iter().any(|v| !v.is_finite()) {
        converged = false;
    }
    Ok(FitResult {
        params: names
            .iter()
            .zip(p.iter().zip(stderrs))
            .map(|(name, (&value, stderr))| FitParam {
                name: name.to_string(),
                value,
                stderr,
            })
            .collect(),
        residual_norm: s.sqrt(),
        converged,
        iterations,
        diagnostic,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let data: Vec<Point> = (0..10)
            .map(|i| (i as f64, 2.5 * i as f64 - 1.0, 1.0))
            .collect();
        let f = least_squares(
            |x, p| p[0] * x + p[1],
            &data,
            &["a", "b"],
            &[0.0, 0.0],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(f.converged);
        assert!((f.value("a") - 2.5).abs() < 1e-10);
        assert!((f.value("b") + 1.0).abs() < 1e-10);
    }

    #[test]
    fn parabola_through_three_points() {
        let data = [(-1.0, 6.0, 1.0), (0.0, 1.0, 1.0), (2.0, 9.0, 1.0)];
        // y = 3x^2 - 2x + 1
        let f = least_squares(
            |x, p| p[0] * x * x + p[1] * x + p[2],
            &data,
            &["a", "b", "c"],
            &[1.0, 1.0, 1.0],
            &FitOptions::default(),
        )
        .unwrap();
        for (name, v) in [("a", 3.0), ("b", -2.0), ("c", 1.0)] {
            assert!((f.value(name) - v).abs() < 1e-9, "{name}");
        }
    }

    #[test]
    fn rosenbrock_residuals_match_grid_search() {
        // Residuals 10 (b - a^2) and (1 - a) encoded as two data points.
        let data = [(0.0, 0.0, 1.0), (1.0, 1.0, 1.0)];
        let model = |x: f64, p: &[f64]| {
            if x == 0.0 {
                -10.0 * (p[1] - p[0] * p[0])
            } else {
                p[0]
            }
        };
        let f = least_squares(
            model,
            &data,
            &["a", "b"],
            &[-1.2, 1.0],
            &FitOptions::default(),
        )
        .unwrap();
        let (ga, gb) = crate::oracle::grid_minimum_2d(
            |a, b| (10.0 * (b - a * a)).powi(2) + (1.0 - a).powi(2),
            (0.5, 1.5),
            (0.5, 1.5),
        );
        assert!((f.value("a") - ga).abs() < 1e-4);
        assert!((f.value("b") - gb).abs() < 1e-4);
    }

    #[test]
    fn residual_history_is_monotone() {
        let data: Vec<Point> = (0..40)
            .map(|i| {
                let x = i as f64 * 0.25;
                (
                    x,
                    3.0 * (-x / 2.0).exp() + 0.1 * ((i * 7919) % 13) as f64 / 13.0,
                    1.0,
                )
            })
            .collect();
        let f = least_squares(
            |x, p| p[0] * (-x / p[1]).exp() + p[2],
            &data,
            &["a", "tau", "c"],
            &[1.0, 5.0, 0.0],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(f.converged);
        assert!(f.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn degenerate_parameters_are_flagged() {
        let data: Vec<Point> = (0..10).map(|i| (i as f64, i as f64, 1.0)).collect();
        let f = least_squares(
            |x, p| (p[0] + p[1]) * x,
            &data,
            &["a", "b"],
            &[0.3, 0.2],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(!f.converged);
        assert!(f.diagnostic.unwrap().contains("singular"));
    }

    #[test]
    fn too_few_points() {
        let r = least_squares(
            |_, p| p[0],
            &[(0.0, 1.0, 1.0)],
            &["a", "b"],
            &[0.0, 0.0],
            &FitOptions::default(),
        );
        assert!(matches!(r, Err(Error::FitSetup(_))));
    }

    #[test]
    fn json_carries_names() {
        let data: Vec<Point> = (0..5).map(|i| (i as f64, 1.0, 1.0)).collect();
        let f = least_squares(
            |_, p| p[0],
            &data,
            &["level"],
            &[0.0],
            &FitOptions::default(),
        )
        .unwrap();
        let js = f.to_json().unwrap();
        assert!(js.contains("\"level\"") && js.contains("\"converged\": true"));
    }
}
