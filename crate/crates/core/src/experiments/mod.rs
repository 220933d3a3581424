// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Figure-level protocols, configuration, run manifests and output files.
//!
//! Each experiment takes the full [`ExperimentConfig`] and a seed and
//! returns an [`Outcome`]: data tables, fit results and named summary
//! metrics. [`write_outcome`] stores them with a [`RunManifest`].

mod census;
mod coherence;
mod correlation;
mod source;
mod spectroscopy;
mod spectrum;

pub use census::{lifetime_census, LifetimeConfig};
pub use coherence::{
    calibrate_fast_noise, coherence, CoherenceConfig, CoherenceKind, FastNoiseCalibration,
};
pub use correlation::{autocorrelation, G2Config, SpinPumpingConfig};
pub use source::{simulate_emitter, SourceModel};
pub use spectroscopy::{
    spectral_diffusion, spin_spectrum, splitting_probe, SdConfig, SpinSpectrumConfig,
    SplittingConfig,
};
pub use spectrum::{inhomogeneous_scan, satellite_scan, SatelliteScanConfig, SpectrumConfig};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cavity::{CavityGeometry, CavityMode};
use crate::crystal::{
    self, CrystalConfig, EmitterRecord, SatelliteClass, YTTRIUM_SITE_DENSITY_PER_UM3,
};
use crate::detection::DetectorConfig;
use crate::dynamics::{NoiseModel, PulseSpec};
use crate::fit::FitResult;
use crate::par::{self, domain};
use crate::spin::SpinParams;
use crate::{Error, Result};

/// Planck constant over Boltzmann constant (K / Hz).
const H_OVER_K: f64 = 4.799_243_073e-11;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// TOML integers are signed, so seeds above `i64::MAX` are written as
    /// decimal strings.
    #[serde(serialize_with = "seed_as_toml")]
    pub seed: Option<u64>,
    pub crystal: CrystalConfig,
    pub cavity: CavityGeometry,
    pub spin: SpinParams,
    pub noise: NoiseModel,
    pub detector: DetectorConfig,
    pub spectrum: SpectrumConfig,
    pub satellite_scan: SatelliteScanConfig,
    pub g2: G2Config,
    pub sd: SdConfig,
    pub lifetimes: LifetimeConfig,
    pub spin_spectrum: SpinSpectrumConfig,
    pub splitting: SplittingConfig,
    pub coherence: CoherenceConfig,
}

fn seed_as_toml<S: serde::Serializer>(
    seed: &Option<u64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match seed {
        None => s.serialize_none(),
        Some(v) => match i64::try_from(*v) {
            Ok(i) => s.serialize_some(&i),
            Err(_) => s.serialize_some(&v.to_string()),
        },
    }
}

fn section<T: serde::de::DeserializeOwned + Default>(
    table: &mut toml::Table,
    name: &str,
) -> Result<T> {
    match table.remove(name) {
        None => Ok(T::default()),
        Some(v) => v
            .try_into::<T>()
            .map_err(|e| Error::config(name, e.to_string().trim())),
    }
}

impl ExperimentConfig {
    /// Parses a TOML document. Unknown sections and keys are errors that
    /// name the offending section.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<root>", e.to_string().trim()))?;
        let seed = match table.remove("seed") {
            None => None,
            Some(toml::Value::Integer(i)) if i >= 0 => Some(i as u64),
            Some(toml::Value::String(t)) if t.parse::<u64>().is_ok() => t.parse().ok(),
            Some(other) => {
                return Err(Error::config(
                    "seed",
                    format!("expected a non-negative 64-bit integer, got {other}"),
                ))
            }
        };
        let cfg = ExperimentConfig {
            seed,
            crystal: section(&mut table, "crystal")?,
            cavity: section(&mut table, "cavity")?,
            spin: section(&mut table, "spin")?,
            noise: section(&mut table, "noise")?,
            detector: section(&mut table, "detector")?,
            spectrum: section(&mut table, "spectrum")?,
            satellite_scan: section(&mut table, "satellite_scan")?,
            g2: section(&mut table, "g2")?,
            sd: section(&mut table, "sd")?,
            lifetimes: section(&mut table, "lifetimes")?,
            spin_spectrum: section(&mut table, "spin_spectrum")?,
            splitting: section(&mut table, "splitting")?,
            coherence: section(&mut table, "coherence")?,
        };
        if let Some(key) = table.keys().next() {
            return Err(Error::config(key.clone(), "unknown section"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<root>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |path: &str, r: Result<()>| r.map_err(|e| Error::config(path, e.to_string()));
        wrap("crystal", self.crystal.validate())?;
        wrap("cavity", self.cavity.validate())?;
        wrap("spin", self.spin.validate())?;
        wrap("noise", self.noise.validate())?;
        wrap("detector", self.detector.validate())?;
        wrap("spectrum", self.spectrum.validate())?;
        wrap("g2", self.g2.validate())?;
        wrap("sd", self.sd.validate())?;
        wrap("lifetimes", self.lifetimes.validate())?;
        wrap("coherence", self.coherence.validate())?;
        Ok(())
    }

    /// Statistics comparable to laboratory acquisition times.
    pub fn full_scale(mut self) -> Self {
        self.spectrum.repetitions = 800;
        self.spectrum.n_emitters = 10_000_000;
        self.g2.n_pulses = 100_000_000;
        self.g2.spin_pumping.n_pulses = 40_000_000;
        self.sd.n_emitters = 2_000;
        self.coherence.hahn.trajectories = 100_000;
        self.coherence.xy4.trajectories = 100_000;
        self.lifetimes.photons_per_emitter = 20_000;
        self
    }

    /// SHA-256 of the canonical JSON form of the effective configuration
    /// (sorted keys, seed excluded).
    pub fn digest(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("seed");
        }
        let canonical = serde_json::to_string(&v)?;
        Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
    }

    /// Expected number of erbium emitters inside the mode sampling region.
    pub fn emitters_in_mode(&self) -> Result<f64> {
        let region = CavityMode::new(&self.cavity)?.sampling_region();
        Ok(self.crystal.erbium_concentration * YTTRIUM_SITE_DENSITY_PER_UM3 * region.volume_um3())
    }
}

/// Equilibrium population of the lower Zeeman level.
pub fn thermal_low_fraction(spin: &SpinParams, b_field_mt: f64, temperature_k: f64) -> f64 {
    let splitting_hz = spin.g_ground * spin.bohr_ghz_per_t * b_field_mt * 1e-3 * 1e9;
    if temperature_k <= 0.0 {
        return 1.0;
    }
    1.0 / (1.0 + (-splitting_hz * H_OVER_K / temperature_k).exp())
}

/// Chirped square pulse given by rabi frequency, chirp and span.
pub(crate) fn chirped_pulse(rabi_mhz: f64, chirp_mhz_per_us: f64, span_mhz: f64) -> PulseSpec {
    PulseSpec::square_chirp(span_mhz / chirp_mhz_per_us, chirp_mhz_per_us, rabi_mhz)
}

/// Seeded choice of one emitter of `class` with Purcell factor at least
/// `min_purcell`, from the expected number of such emitters in the mode;
/// falls back to the brightest emitter when none passes.
pub fn select_emitter(
    cfg: &ExperimentConfig,
    class: SatelliteClass,
    min_purcell: f64,
    seed: u64,
) -> Result<EmitterRecord> {
    use rand::Rng;
    let mode = CavityMode::new(&cfg.cavity)?;
    let n = (cfg.emitters_in_mode()? * cfg.crystal.class_probability(class))
        .round()
        .max(1.0) as usize;
    let mut pool = crystal::sample_class(
        n,
        class,
        &cfg.crystal,
        &mode.sampling_region(),
        par::derive_seed(seed, domain::SELECTION),
        0,
    )?;
    for e in &mut pool {
        e.purcell = mode.purcell_at(e.radial_um, e.axial_um);
    }
    let eligible: Vec<&EmitterRecord> = pool.iter().filter(|e| e.purcell >= min_purcell).collect();
    let mut rng = par::substream(seed, domain::SELECTION, 0);
    Ok(if eligible.is_empty() {
        pool.iter()
            .max_by(|a, b| a.purcell.total_cmp(&b.purcell))
            .cloned()
            .ok_or_else(|| Error::InsufficientStatistics("no emitters to select from".into()))?
    } else {
        eligible[rng.random_range(0..eligible.len())].clone()
    })
}

/// A named output table.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub experiment: String,
    pub files: Vec<OutputFile>,
    pub fits: BTreeMap<String, FitResult>,
    pub summary: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, String>,
    /// Internal fits that failed to converge and were not registered.
    pub unconverged: Vec<String>,
}

impl Outcome {
    pub fn new(experiment: &str) -> Self {
        Outcome {
            experiment: experiment.to_string(),
            ..Default::default()
        }
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.summary.insert(name.to_string(), value);
    }

    pub fn note(&mut self, name: &str, value: impl Into<String>) {
        self.notes.insert(name.to_string(), value.into());
    }

    pub fn fit(&mut self, name: &str, fit: FitResult) {
        self.fits.insert(name.to_string(), fit);
    }

    pub fn file(&mut self, name: &str, contents: String) {
        self.files.push(OutputFile {
            name: name.to_string(),
            contents,
        });
    }

    /// Summary metric by name. Panics when missing.
    pub fn get(&self, name: &str) -> f64 {
        *self
            .summary
            .get(name)
            .unwrap_or_else(|| panic!("{}: no metric `{name}`", self.experiment))
    }

    pub fn all_converged(&self) -> bool {
        self.unconverged.is_empty() && self.fits.values().all(|f| f.converged)
    }

    /// Merges another outcome, prefixing its names.
    pub fn absorb(&mut self, prefix: &str, other: Outcome) {
        for f in other.files {
            self.file(&format!("{prefix}_{}", f.name), f.contents);
        }
        for (k, v) in other.fits {
            self.fits.insert(format!("{prefix}_{k}"), v);
        }
        for (k, v) in other.summary {
            self.summary.insert(format!("{prefix}_{k}"), v);
        }
        for (k, v) in other.notes {
            self.notes.insert(format!("{prefix}_{k}"), v);
        }
        self.unconverged.extend(
            other
                .unconverged
                .into_iter()
                .map(|u| format!("{prefix}: {u}")),
        );
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_digest: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub summary: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, String>,
    pub all_fits_converged: bool,
    pub unconverged: Vec<String>,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    experiment: &'a str,
    summary: &'a BTreeMap<String, f64>,
    notes: &'a BTreeMap<String, String>,
    fits: &'a BTreeMap<String, FitResult>,
}

/// Writes the outcome's tables, `summary.json`, the resolved `config.toml`
/// (seed included) and `manifest.json` into `dir`, which is created if
/// needed.
pub fn write_outcome(
    outcome: &Outcome,
    cfg: &ExperimentConfig,
    seed: u64,
    dir: &Path,
) -> Result<RunManifest> {
    fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    for f in &outcome.files {
        fs::write(dir.join(&f.name), &f.contents)?;
        outputs.push(f.name.clone());
    }
    let summary = SummaryFile {
        experiment: &outcome.experiment,
        summary: &outcome.summary,
        notes: &outcome.notes,
        fits: &outcome.fits,
    };
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    outputs.push("summary.json".into());
    let mut resolved = cfg.clone();
    resolved.seed = Some(seed);
    fs::write(dir.join("config.toml"), resolved.to_toml_string()?)?;
    outputs.push("config.toml".into());
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        experiment: outcome.experiment.clone(),
        config_digest: cfg.digest()?,
        seed,
        outputs,
        summary: outcome.summary.clone(),
        notes: outcome.notes.clone(),
        all_fits_converged: outcome.all_converged(),
        unconverged: outcome.unconverged.clone(),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Spectrum,
    SatelliteScan,
    G2,
    Sd,
    Lifetimes,
    SpinSpectrum,
    Splitting,
    Rabi,
    Hahn,
    Xy4,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::Spectrum,
        ExperimentKind::SatelliteScan,
        ExperimentKind::G2,
        ExperimentKind::Sd,
        ExperimentKind::Lifetimes,
        ExperimentKind::SpinSpectrum,
        ExperimentKind::Splitting,
        ExperimentKind::Rabi,
        ExperimentKind::Hahn,
        ExperimentKind::Xy4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::SatelliteScan => "satellite-scan",
            ExperimentKind::G2 => "g2",
            ExperimentKind::Sd => "sd",
            ExperimentKind::Lifetimes => "lifetimes",
            ExperimentKind::SpinSpectrum => "spin-spectrum",
            ExperimentKind::Splitting => "splitting",
            ExperimentKind::Rabi => "rabi",
            ExperimentKind::Hahn => "hahn",
            ExperimentKind::Xy4 => "xy4",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param("experiment", format!("unknown experiment `{s}`")))
    }
}

/// Runs one experiment. With `oracle` set, brute-force cross-checks are
/// added to the summary where defined.
pub fn run(
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
    seed: u64,
    oracle: bool,
) -> Result<Outcome> {
    cfg.validate()?;
    let seed = par::derive_seed(seed, kind as u64 + 1);
    match kind {
        ExperimentKind::Spectrum => inhomogeneous_scan(cfg, seed, oracle),
        ExperimentKind::SatelliteScan => satellite_scan(cfg, seed),
        ExperimentKind::G2 => autocorrelation(cfg, seed, oracle),
        ExperimentKind::Sd => spectral_diffusion(cfg, seed),
        ExperimentKind::Lifetimes => lifetime_census(cfg, seed, oracle),
        ExperimentKind::SpinSpectrum => spin_spectrum(cfg, seed),
        ExperimentKind::Splitting => splitting_probe(cfg, seed),
        ExperimentKind::Rabi => coherence(cfg, CoherenceKind::Rabi, seed, oracle),
        ExperimentKind::Hahn => coherence(cfg, CoherenceKind::Hahn, seed, oracle),
        ExperimentKind::Xy4 => coherence(cfg, CoherenceKind::Xy4, seed, oracle),
    }
}

/// Formats rows as CSV with a header line.
pub(crate) fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_names_its_section() {
        let err = ExperimentConfig::from_toml_str("[detector]\nefficency = 0.4\n").unwrap_err();
        match err {
            Error::Config { path, reason } => {
                assert_eq!(path, "detector");
                assert!(reason.contains("efficency"), "{reason}");
            }
            e => panic!("{e}"),
        }
        let err = ExperimentConfig::from_toml_str("[detectors]\n").unwrap_err();
        assert!(matches!(err, Error::Config { path, .. } if path == "detectors"));
    }

    #[test]
    fn invalid_values_name_their_section() {
        let err = ExperimentConfig::from_toml_str("[detector]\nefficiency = 1.5\n").unwrap_err();
        assert!(matches!(err, Error::Config { path, .. } if path == "detector"));
    }

    #[test]
    fn digest_ignores_key_order_and_seed() {
        let a = ExperimentConfig::from_toml_str(
            "seed = 1\n[detector]\nefficiency = 0.3\ndark_rate_hz = 5.0\n",
        )
        .unwrap();
        let b = ExperimentConfig::from_toml_str(
            "seed = 2\n[detector]\ndark_rate_hz = 5.0\nefficiency = 0.3\n",
        )
        .unwrap();
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        let c =
            ExperimentConfig::from_toml_str("[detector]\nefficiency = 0.31\ndark_rate_hz = 5.0\n")
                .unwrap();
        assert_ne!(a.digest().unwrap(), c.digest().unwrap());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.digest().unwrap(), cfg.digest().unwrap());
    }

    #[test]
    fn thermal_population_at_high_field() {
        let f = thermal_low_fraction(&SpinParams::default(), 350.0, 1.7);
        assert!((f - 0.776).abs() < 0.002, "{f}");
        assert!((thermal_low_fraction(&SpinParams::default(), 1.0, 1.7) - 0.5).abs() < 0.01);
    }

    #[test]
    fn mode_holds_about_nine_million_emitters() {
        let n = ExperimentConfig::default().emitters_in_mode().unwrap();
        assert!((n / 9.15e6 - 1.0).abs() < 0.01, "{n}");
    }
}
