//! The `dispflow` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use dispflow_core::experiments::{
    convergence_defaults, convergence_plan, convergence_study, epsilon_defaults, epsilon_study,
    identity_suites, run_suite, stability_defaults, stability_study, StudyResult,
};
use dispflow_core::{run, Preset, RunConfig};
use thiserror::Error;

use crate::io::{load_config, summary_table, write_run, write_studies, IoError};

#[derive(Debug, Parser)]
#[command(
    name = "dispflow",
    version,
    about = "Fourth-order dispersive curve flow on surfaces"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run config (required for `run`; optional base for studies)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config's `out_dir`)
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the config seed, or the first seed of a study
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for independent study cases (0 = all cores)
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    pub jobs: usize,
    /// Suppress the summary on stdout
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one config
    Run,
    /// Run a named study
    Study {
        #[arg(value_enum)]
        name: StudyName,
    },
    /// Run the identity suites and fail on any threshold violation
    Verify,
    /// Print the parameter presets
    Presets,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StudyName {
    Convergence,
    Epsilon,
    Stability,
    Identities,
    All,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Core(#[from] dispflow_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(IoError::Read { .. } | IoError::Config { .. }) => 2,
            CliError::Io(_) | CliError::Core(_) => 1,
        }
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Run => run_command(cli),
        Command::Study { name } => study_command(cli, *name),
        Command::Verify => verify_command(cli),
        Command::Presets => {
            if !cli.quiet {
                print!("{}", presets_table());
            }
            Ok(0)
        }
    }
}

pub fn presets_table() -> String {
    let mut out = String::new();
    for p in Preset::ALL {
        let f = p.params();
        out.push_str(&format!(
            "{:<24} (a, b, c, lambda) = ({}, {}, {}, {})  {}\n",
            p.name(),
            f.a,
            f.b,
            f.c,
            f.lambda,
            p.constraint()
        ));
    }
    out
}

fn config_from(cli: &Cli) -> Result<Option<RunConfig>, CliError> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "config file not found: {}",
            path.display()
        )));
    }
    let mut cfg = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(Some(cfg))
}

fn run_command(cli: &Cli) -> Result<i32, CliError> {
    let cfg =
        config_from(cli)?.ok_or_else(|| CliError::Usage("`run` needs --config PATH".into()))?;
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    let result = run(&cfg);
    let manifest = write_run(&dir, &cfg, &result)?;
    match &result {
        Ok(traj) => {
            if !cli.quiet {
                println!(
                    "ok: {} steps of dt = {:e}, {} snapshots; manifest {}",
                    traj.steps,
                    traj.dt,
                    traj.snapshots.len(),
                    manifest.display()
                );
                if let Some(t) = traj.energy_doubling_time {
                    println!(
                        "note: N_{} exceeded twice its initial value at t = {t:e}",
                        cfg.k
                    );
                }
            }
            Ok(0)
        }
        Err(failure) => {
            eprintln!("error: {failure}; partial output in {}", dir.display());
            Ok(1)
        }
    }
}

fn report(
    cli: &Cli,
    dir: Option<&Path>,
    command: &str,
    studies: &[StudyResult],
) -> Result<i32, CliError> {
    if let Some(dir) = dir {
        write_studies(dir, command, cli.seed.unwrap_or(0), studies)?;
    }
    if !cli.quiet {
        print!("{}", summary_table(studies));
    }
    Ok(if studies.iter().all(|s| s.passed()) {
        0
    } else {
        1
    })
}

fn study_command(cli: &Cli, name: StudyName) -> Result<i32, CliError> {
    let base = config_from(cli)?;
    let seed = cli.seed.unwrap_or(0);
    let jobs = cli.jobs;
    let studies = match name {
        StudyName::Convergence => {
            let cfg = base.unwrap_or_else(|| convergence_defaults().0);
            let (dts, ns) = convergence_plan(&cfg)?;
            vec![convergence_study(&cfg, &dts, &ns, jobs)?]
        }
        StudyName::Epsilon => {
            let (default, eps) = epsilon_defaults();
            let mut cfg = base.unwrap_or(default);
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            vec![epsilon_study(&cfg, &eps, jobs)?]
        }
        StudyName::Stability => {
            let (default, deltas, mode) = stability_defaults();
            let mut cfg = base.unwrap_or(default);
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            vec![stability_study(&cfg, &deltas, mode, jobs)?]
        }
        StudyName::Identities => identity_suites(seed, jobs)?,
        StudyName::All => run_suite(seed, jobs)?,
    };
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let command = format!(
        "study {}",
        name.to_possible_value().expect("named").get_name()
    );
    report(cli, Some(&dir), &command, &studies)
}

fn verify_command(cli: &Cli) -> Result<i32, CliError> {
    let studies = identity_suites(cli.seed.unwrap_or(0), cli.jobs)?;
    report(cli, cli.out.as_deref(), "verify", &studies)
}
