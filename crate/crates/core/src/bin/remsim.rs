// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Command-line front end: runs simulated experiments and analyses
//! recorded time-tag files.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use remsim::detection::{
    antibunching_fit, background_correct, bunching_fit, pulsed_g2, signal_fraction, PulsePattern,
    PulseSchedule, TimeTagSeries,
};
use remsim::experiments::{self, ExperimentConfig, ExperimentKind};
use remsim::par;

#[derive(Parser)]
#[command(
    name = "remsim",
    version,
    about = "Simulate and analyse cavity-coupled erbium emitters"
)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment name, or `all`.
    #[arg(required = true)]
    experiment: Option<String>,
    /// TOML configuration; defaults are used for missing sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the seed in the configuration file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "remsim-out")]
    out: PathBuf,
    /// Use statistics comparable to laboratory acquisition times.
    #[arg(long)]
    full_scale: bool,
    /// Add brute-force cross-checks where available.
    #[arg(long)]
    oracle: bool,
    /// Worker threads (0 uses all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Pulse-wise g2 analysis of a recorded tag file.
    Tags(TagArgs),
    /// Print the default configuration as TOML.
    Defaults,
    /// List the available experiments.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pattern {
    Single,
    Alternating,
}

#[derive(Args)]
struct TagArgs {
    /// CSV with columns timestamp_us, pulse_index, channel.
    file: PathBuf,
    #[arg(long)]
    n_pulses: u64,
    #[arg(long)]
    period_us: f64,
    #[arg(long, default_value_t = 0.0)]
    gate_start_us: f64,
    #[arg(long)]
    gate_window_us: f64,
    #[arg(long, value_enum, default_value = "single")]
    pattern: Pattern,
    #[arg(long, default_value_t = 20)]
    max_lag: usize,
    /// Mean dark clicks per gate, for the background correction.
    #[arg(long)]
    darks_per_window: Option<f64>,
    /// Correlate the two channels of an alternating pattern.
    #[arg(long)]
    cross: bool,
    /// Write the correlation table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Some(Command::Tags(t)) => tags(&t),
        Some(Command::Defaults) => {
            print!("{}", ExperimentConfig::default().to_toml_string()?);
            Ok(true)
        }
        Some(Command::List) => {
            for k in ExperimentKind::ALL {
                println!("{}", k.name());
            }
            Ok(true)
        }
        None => run(&cli.run),
    }
}

fn run(args: &RunArgs) -> Result<bool> {
    let name = args.experiment.as_deref().unwrap_or_default();
    let kinds: Vec<ExperimentKind> = if name == "all" {
        ExperimentKind::ALL.to_vec()
    } else {
        vec![name.parse()?]
    };
    let mut cfg = match &args.config {
        Some(p) => {
            ExperimentConfig::from_file(p).with_context(|| format!("loading {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if args.full_scale {
        cfg = cfg.full_scale();
    }
    let Some(seed) = args.seed.or(cfg.seed) else {
        bail!("no seed given: pass --seed or set `seed` in the configuration");
    };
    let threads = if args.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        args.threads
    };
    let many = kinds.len() > 1;
    let mut ok = true;
    for kind in kinds {
        let dir = if many {
            args.out.join(kind.name())
        } else {
            args.out.clone()
        };
        eprintln!("running {} (seed {seed})", kind.name());
        let outcome =
            par::with_workers(threads, || experiments::run(kind, &cfg, seed, args.oracle))
                .with_context(|| format!("experiment {}", kind.name()))?;
        let manifest = experiments::write_outcome(&outcome, &cfg, seed, &dir)?;
        for (k, v) in &manifest.summary {
            println!("{}.{k} = {v}", kind.name());
        }
        if !manifest.all_fits_converged {
            eprintln!("warning: {} has fits that did not converge", kind.name());
            ok = false;
        }
    }
    Ok(ok)
}

fn tags(t: &TagArgs) -> Result<bool> {
    let schedule = PulseSchedule {
        n_pulses: t.n_pulses,
        period_us: t.period_us,
        gate_start_us: t.gate_start_us,
        gate_window_us: t.gate_window_us,
        pattern: match t.pattern {
            Pattern::Single => PulsePattern::Single,
            Pattern::Alternating => PulsePattern::Alternating,
        },
    };
    let file = File::open(&t.file).with_context(|| format!("opening {}", t.file.display()))?;
    let series = TimeTagSeries::read_csv(BufReader::new(file), schedule)?;
    let est = pulsed_g2(&series, t.max_lag, !t.cross)?;
    match &t.out {
        Some(p) => fs::write(p, est.to_csv())?,
        None => print!("{}", est.to_csv()),
    }
    let mut ok = true;
    if let Some((g, se)) = est.at(0) {
        eprintln!("g2(0) = {g:.4} +- {se:.4}");
        if let Some(d) = t.darks_per_window {
            let rho = signal_fraction(&series, d)?;
            eprintln!("signal fraction = {rho:.4}");
            eprintln!("corrected g2(0) = {:.4}", background_correct(g, rho)?);
        }
    }
    let shoulder = if t.cross {
        antibunching_fit(&est)
    } else {
        bunching_fit(&est)
    };
    match shoulder {
        Ok(s) if s.significant => {
            eprintln!(
                "shoulder amplitude = {:.4} +- {:.4}, decay = {:.1} +- {:.1} pulses",
                s.amplitude, s.amplitude_stderr, s.decay_attempts, s.decay_stderr
            );
            ok = s.fit.as_ref().is_none_or(|f| f.converged);
        }
        Ok(_) => eprintln!("no significant shoulder"),
        Err(e) => eprintln!("shoulder fit failed: {e}"),
    }
    Ok(ok)
}
