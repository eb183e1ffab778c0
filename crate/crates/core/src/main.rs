use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use solwave::harness::config::ExperimentConfig;
use solwave::harness::experiments::{
    decompose_states, exact_family_check, ground_state, run_evolution, theorem_check, AlphaSource, FailureReport,
    RunOptions,
};
use solwave::harness::lemmas::lemma_check;
use solwave::harness::persistence::{read_psi_series, write_json, write_psi_series, write_series};
use solwave::profile::export_profile;
use solwave::{Error, Result};

/// Solitary waves in slowly varying potentials: runs, checks and sweeps.
#[derive(Parser)]
#[command(name = "solwave", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`key = value` lines); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides `rng.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the profile at `initial.mu` and export it.
    GroundState,
    /// Evolve, decompose every output sample and write the series.
    Evolve {
        /// Also write every output wave function to `psi.csv`.
        #[arg(long)]
        save_psi: bool,
    },
    /// Decompose a saved wave-function series, or a fresh run without `--psi`.
    DecomposeSeries {
        #[arg(long)]
        psi: Option<PathBuf>,
        /// Take `α` from differentiating the parameter series.
        #[arg(long)]
        series_alpha: bool,
    },
    /// Run the configuration and its companion with `ε_V`, `ε₀` halved.
    TheoremCheck,
    /// Property sweeps of the remainder and scalar inequalities.
    LemmaCheck {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Moving exact solitary wave in a quadratic well against the evolution.
    ExactFamily,
}

enum Outcome {
    Pass,
    Violation,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn say(common: &Common, msg: impl AsRef<str>) {
    if !common.quiet {
        println!("{}", msg.as_ref());
    }
}

fn verdict(ok: bool) -> Outcome {
    if ok {
        Outcome::Pass
    } else {
        Outcome::Violation
    }
}

fn summary_path(out: &Path) -> PathBuf {
    out.join("summary.json")
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    body: T,
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let common = &cli.common;
    fs::create_dir_all(&common.out)?;
    let out = &common.out;
    match &cli.command {
        Command::GroundState => {
            let config = load_config(common)?;
            let (profile, report) = ground_state(&config)?;
            export_profile(&out.join("profile.txt"), &profile)?;
            write_json(&summary_path(out), &Report { config: &config, body: &report })?;
            say(common, format!("mu {} mass {} residual {:.3e}", report.mu, report.mass, report.residual));
            Ok(verdict(report.passed))
        }
        Command::Evolve { save_psi } => {
            let mut config = load_config(common)?;
            config.save_psi |= *save_psi;
            let run = run_evolution(
                &config,
                RunOptions {
                    keep_states: config.save_psi,
                    ..RunOptions::default()
                },
            )?;
            write_series(&out.join("series.csv"), config.dim, &run.rows)?;
            if config.save_psi {
                write_psi_series(&out.join("psi.csv"), &run.states)?;
            }
            write_json(&summary_path(out), &run.summary)?;
            say(
                common,
                format!(
                    "{} samples to t = {}, sup |w|_E {:.4e}, max |alpha| {:.4e}",
                    run.summary.samples, run.summary.t_run, run.summary.sup_w.energy, run.summary.max_alpha
                ),
            );
            match run.failure {
                Some(e) => Err(e),
                None => Ok(Outcome::Pass),
            }
        }
        Command::DecomposeSeries { psi, series_alpha } => {
            let config = load_config(common)?;
            let options = RunOptions {
                alpha: if *series_alpha {
                    AlphaSource::Series
                } else {
                    AlphaSource::Modulation
                },
                ..RunOptions::default()
            };
            let run = match psi {
                Some(path) => {
                    let states = read_psi_series(path, &config.grid()?)?;
                    decompose_states(&config, &states, options)?
                }
                None => run_evolution(&config, options)?,
            };
            write_series(&out.join("series.csv"), config.dim, &run.rows)?;
            write_json(&summary_path(out), &run.summary)?;
            say(common, format!("{} samples decomposed", run.summary.samples));
            match run.failure {
                Some(e) => Err(e),
                None => Ok(Outcome::Pass),
            }
        }
        Command::TheoremCheck => {
            let config = load_config(common)?;
            let check = theorem_check(&config)?;
            write_json(&summary_path(out), &check)?;
            say(
                common,
                format!(
                    "C {:.4} norm ratio {:.4} alpha ratio {:.4} momentum ratio {:.4}",
                    check.c_hat, check.norm_ratio, check.alpha_ratio, check.momentum_ratio
                ),
            );
            Ok(verdict(check.passed()))
        }
        Command::LemmaCheck { samples } => {
            let seed = match (&common.config, common.seed) {
                (_, Some(seed)) => seed,
                (Some(_), None) => load_config(common)?.seed,
                (None, None) => 1,
            };
            let report = lemma_check(seed, *samples)?;
            write_json(&summary_path(out), &report)?;
            for l in &report.lemmas {
                say(common, format!("{:<45} min margin {:+.3e}", l.name, l.min_margin));
            }
            for e in &report.equalities {
                say(common, format!("{:<45} max deviation {:.3e}", e.name, e.max_deviation));
            }
            Ok(verdict(report.passed()))
        }
        Command::ExactFamily => {
            let config = load_config(common)?;
            let report = exact_family_check(&config)?;
            write_json(&summary_path(out), &Report { config: &config, body: &report })?;
            say(
                common,
                format!(
                    "profile residual {:.3e}, sup L2 error {:.3e}, max alpha {:.3e}",
                    report.profile_residual, report.sup_l2_error, report.max_alpha
                ),
            );
            Ok(verdict(report.passed))
        }
    }
}

fn report_failure(out: &Path, e: &Error) {
    let report = FailureReport::from(e);
    if fs::create_dir_all(out).is_ok() {
        let _ = write_json(&out.join("failure.json"), &report);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Violation) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            report_failure(&cli.common.out, &e);
            ExitCode::from(1)
        }
    }
}
