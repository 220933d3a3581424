// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Acceptance checks. Each criterion prints one PASS/FAIL line; the target
//! fails when any criterion fails. All stochastic checks use seed 1.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use remsim::cavity::{enhanced_lifetime, purcell_factor_at};
use remsim::dynamics::{rap_excitation_probability, PulseSpec};
use remsim::experiments::{run, ExperimentConfig, ExperimentKind, Outcome};
use remsim::fit::{self, ExponentialModel, FitResult};
use remsim::{crystal, oracle, par};

const SEED: u64 = 1;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn experiment(kind: ExperimentKind, oracle: bool) -> Outcome {
    run(kind, &ExperimentConfig::default(), SEED, oracle)
        .unwrap_or_else(|e| panic!("{} failed: {e}", kind.name()))
}

fn inhomogeneous_line() -> Verdict {
    let o = experiment(ExperimentKind::Spectrum, false);
    let (l, g) = (o.get("lorentzian_fwhm_ghz"), o.get("gaussian_fwhm_ghz"));
    verdict(
        within(l, 0.14, 0.014) && within(g, 0.27, 0.027),
        format!("lorentzian {l:.4} GHz (0.14 +- 10%), gaussian {g:.4} GHz (0.27 +- 10%)"),
    )
}

fn satellite_scaling() -> Verdict {
    let o = experiment(ExperimentKind::SatelliteScan, false);
    let r = o.get("ratio_D");
    let target = o.get("ratio_D_concentration_times_sites");
    let std = o.get("ratio_D_std");
    let z = (r - target) / std;
    verdict(
        z.abs() <= 3.0,
        format!("D/main {r:.4e} vs concentration x sites {target:.1e}, {z:+.2} binomial std"),
    )
}

fn purcell_census() -> Verdict {
    let g = ExperimentConfig::default().cavity;
    let peak = purcell_factor_at((0.0, g.antinode_reference_um), &g).unwrap();
    let o = experiment(ExperimentKind::Lifetimes, true);
    let dev = o.get("histogram_oracle_max_rel_deviation");
    let count = o.get("count_p_gt_threshold");
    verdict(
        (peak - 116.0).abs() < 1e-9 && dev < 0.05 && within(count, 360.0, 40.0),
        format!(
            "peak P {peak:.6}, oracle max rel deviation {dev:.3}, count(P>35) {count} (360 +- 40)"
        ),
    )
}

fn lifetimes() -> Verdict {
    let identity = enhanced_lifetime(109.0, 11.4);
    let o = experiment(ExperimentKind::Lifetimes, false);
    let t = o.get("single_lifetime_us");
    let photons = o.get("single_detected_photons");
    verdict(
        within(identity, 0.104, 0.00104) && within(t, 131.0, 4.0) && photons >= 2e4,
        format!("enhanced(109, 11.4 ms) {identity:.5} ms, fitted {t:.2} us from {photons} photons (131 +- 4)"),
    )
}

fn photon_statistics() -> Verdict {
    let o = experiment(ExperimentKind::G2, true);
    let (raw, corr, two, oracle2) = (
        o.get("g2_raw"),
        o.get("g2_corrected"),
        o.get("two_emitter_g2"),
        o.get("two_emitter_oracle"),
    );
    verdict(
        within(raw, 0.13, 0.03) && corr < 0.02 && within(two, 0.5, 0.05) && within(oracle2, 0.5, 0.05),
        format!("raw {raw:.3} (0.13 +- 0.03), corrected {corr:.4} (< 0.02), two emitters {two:.3} vs oracle {oracle2:.3}"),
    )
}

fn spin_pumping() -> Verdict {
    let o = experiment(ExperimentKind::G2, false);
    let (kb, sb) = (
        o.get("sp_joint_bunching_k0"),
        o.get("sp_joint_bunching_k0_stderr"),
    );
    let (ka, sa) = (
        o.get("sp_joint_antibunching_k0"),
        o.get("sp_joint_antibunching_k0_stderr"),
    );
    let joint = (sb * sb + sa * sa).sqrt();
    let z = (kb - ka) / joint;
    verdict(
        within(kb, 205.0, 15.0) && z.abs() <= 3.0,
        format!("bunching k0 {kb:.1} +- {sb:.1} (205 +- 15), antibunching {ka:.1} +- {sa:.1}, difference {z:+.2} joint std"),
    )
}

fn spin_spectroscopy() -> Verdict {
    let s = experiment(ExperimentKind::SpinSpectrum, false);
    let p = experiment(ExperimentKind::Splitting, false);
    let (sp, sf) = (s.get("sp_fwhm_mhz"), s.get("sf_fwhm_mhz"));
    let residual = p.get("sum_rule_residual_mhz");
    let ratio = p.get("sf_sp_ratio");
    verdict(
        within(sp, 0.5, 0.075) && within(sf, 3.2, 0.48) && residual.abs() < 1e-9 && (ratio - 19.0).abs() < 1e-9,
        format!("SP {sp:.3} MHz (0.50 +- 15%), SF {sf:.3} MHz (3.2 +- 15%), sum rule residual {residual:.1e}, ratio {ratio:.12}"),
    )
}

fn coherence() -> Verdict {
    let h = experiment(ExperimentKind::Hahn, false);
    let x = experiment(ExperimentKind::Xy4, false);
    let ratio = h.get("t2_over_2t1");
    let z = h.get("dephased_max_abs_z");
    let t2 = x.get("t2_us");
    verdict(
        within(ratio, 1.0, 0.05) && z <= 3.0 && within(t2, 620.0, 62.0),
        format!("quiet Hahn T2/2T1 {ratio:.4}, MC vs analytic max |z| {z:.2}, XY4 T2 {t2:.1} us (620 +- 10%)"),
    )
}

fn worst_param_error(fit: &FitResult, truth: &[(&str, f64)]) -> f64 {
    truth
        .iter()
        .map(|&(name, v)| ((fit.value(name) - v) / v.abs().max(1e-12)).abs())
        .fold(0.0, f64::max)
}

fn synthetic_fits() -> Vec<(&'static str, f64)> {
    let xs = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    };
    let mut out = Vec::new();

    let voigt: Vec<(f64, f64)> = xs(-1.5, 1.5, 151)
        .into_iter()
        .map(|x| (x, 5e4 * crystal::voigt_profile(x - 0.02, 0.14, 0.27)))
        .collect();
    let f = fit::fit_voigt(&voigt).unwrap();
    out.push((
        "voigt",
        worst_param_error(
            &f,
            &[
                ("center", 0.02),
                ("lorentzian_fwhm", 0.14),
                ("gaussian_fwhm", 0.27),
                ("area", 5e4),
            ],
        ),
    ));

    let lor: Vec<(f64, f64)> = xs(-3.0, 3.0, 121)
        .into_iter()
        .map(|x| (x, 800.0 * 0.15 / (PI * ((x - 0.1).powi(2) + 0.15 * 0.15))))
        .collect();
    let f = fit::fit_lorentzian(&lor).unwrap();
    out.push((
        "lorentzian",
        worst_param_error(&f, &[("center", 0.1), ("fwhm", 0.3), ("area", 800.0)]),
    ));

    let gauss: Vec<fit::Point> = xs(-2.0, 2.0, 81)
        .into_iter()
        .map(|x| {
            (
                x,
                3.0 + 40.0 * (-4.0 * std::f64::consts::LN_2 * ((x + 0.2) / 0.6).powi(2)).exp(),
                1.0,
            )
        })
        .collect();
    let f = fit::fit_gaussian_peak(&gauss).unwrap();
    out.push((
        "gaussian",
        worst_param_error(
            &f,
            &[
                ("center", -0.2),
                ("fwhm", 0.6),
                ("amplitude", 40.0),
                ("offset", 3.0),
            ],
        ),
    ));

    let decay: Vec<fit::Point> = xs(0.0, 600.0, 61)
        .into_iter()
        .map(|x| (x, 900.0 * (-x / 131.0).exp() + 2.0, 1.0))
        .collect();
    let f = fit::fit_exponential(&decay, ExponentialModel::Decay).unwrap();
    out.push((
        "exponential",
        worst_param_error(&f, &[("amplitude", 900.0), ("tau", 131.0), ("offset", 2.0)]),
    ));

    let echo: Vec<fit::Point> = xs(10.0, 600.0, 24)
        .into_iter()
        .map(|x| (x, 0.95 * (-x / 262.0).exp(), 1.0))
        .collect();
    let f = fit::fit_exponential(&echo, ExponentialModel::EchoEnvelope).unwrap();
    out.push((
        "echo envelope",
        worst_param_error(&f, &[("amplitude", 0.95), ("tau", 262.0)]),
    ));

    let sine: Vec<fit::Point> = xs(0.0, 4.0, 61)
        .into_iter()
        .map(|x| (x, 0.4 * (2.0 * PI * x / 1.3 + 0.7).cos() + 0.5, 1.0))
        .collect();
    let f = fit::fit_sinusoid(&sine).unwrap();
    out.push((
        "sinusoid",
        worst_param_error(
            &f,
            &[
                ("amplitude", 0.4),
                ("period", 1.3),
                ("phase", 0.7),
                ("offset", 0.5),
            ],
        ),
    ));

    let damped: Vec<fit::Point> = xs(0.0, 4.0, 81)
        .into_iter()
        .map(|x| {
            (
                x,
                0.4 * (-0.3 * x).exp() * (2.0 * PI * x / 0.9 - 0.4).cos() + 0.5,
                1.0,
            )
        })
        .collect();
    let f = fit::fit_damped_sinusoid(&damped).unwrap();
    out.push((
        "damped sinusoid",
        worst_param_error(
            &f,
            &[
                ("amplitude", 0.4),
                ("damping", 0.3),
                ("period", 0.9),
                ("phase", -0.4),
                ("offset", 0.5),
            ],
        ),
    ));
    out
}

fn reduced_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.spectrum.n_emitters = 20_000;
    c.satellite_scan.n_draws = 200_000;
    c.g2.n_pulses = 200_000;
    c.g2.spin_pumping.n_pulses = 200_000;
    c.sd.n_emitters = 12;
    c.sd.drift_frames = 2;
    c.lifetimes.photons_per_emitter = 200;
    c.lifetimes.single_photons = 2_000;
    c.spin_spectrum.n_sweeps = 100_000;
    c.splitting.shots_per_point = 2_000;
    c.coherence.rabi.shots_per_point = 500;
    c.coherence.hahn.trajectories = 500;
    c.coherence.xy4.trajectories = 500;
    c
}

/// Every metric, fit parameter and output table, with floats as raw bits.
fn fingerprint(result: &remsim::Result<Outcome>) -> String {
    let o = match result {
        Ok(o) => o,
        Err(e) => return format!("error: {e}"),
    };
    let mut s = String::new();
    for (k, v) in &o.summary {
        s.push_str(&format!("{k}={:016x};", v.to_bits()));
    }
    for (k, f) in &o.fits {
        for p in &f.params {
            s.push_str(&format!(
                "{k}.{}={:016x}/{:016x};",
                p.name,
                p.value.to_bits(),
                p.stderr.to_bits()
            ));
        }
    }
    for f in &o.files {
        s.push_str(&f.name);
        s.push_str(&f.contents);
    }
    s
}

fn numerics() -> Verdict {
    let pulse = PulseSpec::square_chirp(4.0, 0.25, 0.2);
    let rap_worst = (0..20)
        .map(|i| {
            let d = -1.0 + 2.0 * i as f64 / 19.0;
            let ours = rap_excitation_probability(&pulse, d).unwrap();
            (ours - oracle::chirped_pulse_bloch(0.2, 0.25, 4.0, d)).abs()
        })
        .fold(0.0, f64::max);

    let fits = synthetic_fits();
    let (worst_name, worst_fit) =
        fits.iter()
            .cloned()
            .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });

    let cfg = reduced_config();
    let mut mismatched = Vec::new();
    for kind in ExperimentKind::ALL {
        let prints: Vec<String> = [1, 4, 8]
            .iter()
            .map(|&w| par::with_workers(w, || fingerprint(&run(kind, &cfg, SEED, false))))
            .collect();
        if prints.iter().any(|p| p != &prints[0]) {
            mismatched.push(kind.name());
        }
    }
    let repro = if mismatched.is_empty() {
        "all experiments bit-identical across 1/4/8 workers".to_string()
    } else {
        format!("differs across 1/4/8 workers: {mismatched:?}")
    };
    verdict(
        rap_worst <= 0.02 && worst_fit < 1e-4 && mismatched.is_empty(),
        format!(
            "RAP max |dp| {rap_worst:.1e} on 20 points, worst synthetic fit rel error {worst_fit:.1e} ({worst_name}), \
             {repro}"
        ),
    )
}

fn sd_histogram() -> Verdict {
    let o = experiment(ExperimentKind::Sd, false);
    let outliers = o.get("outlier_fraction");
    let (lo, hi) = (o.get("min_fwhm_mhz"), o.get("max_fwhm_mhz"));
    verdict(
        outliers < 0.01,
        format!(
            "{} emitters, outside [0.2, 1] MHz or unfitted {:.2}% (< 1%), fitted range {lo:.3}..{hi:.3} MHz",
            o.get("n_emitters"),
            100.0 * outliers
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("inhomogeneous line", inhomogeneous_line),
        ("satellite scaling", satellite_scaling),
        ("purcell census", purcell_census),
        ("lifetimes", lifetimes),
        ("photon statistics", photon_statistics),
        ("spin pumping", spin_pumping),
        ("spin spectroscopy", spin_spectroscopy),
        ("coherence", coherence),
        ("numerics and reproducibility", numerics),
        ("spectral diffusion histogram", sd_histogram),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "acceptance {:>2} {tag} {name}: {} [{:.1} s]",
            i + 1,
            v.detail,
            start.elapsed().as_secs_f64()
        );
        if !v.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
