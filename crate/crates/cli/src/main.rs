//! `cdskit` command-line front end.
//!
//! Exit codes: 0 on success, 1 when the report cannot be written, 2 for input errors and 3
//! when a solver run did not converge (the report is still written).

mod commands;
mod config;
mod input;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use commands::{ClusterArgs, CosegArgs, DcdsArgs, DiffuseArgs, FixturesArgs, FuseArgs, MetricsArgs, SegmentArgs};

#[derive(Debug, Parser)]
#[command(
    name = "cdskit",
    version,
    about = "Constrained dominant sets for clustering, segmentation and retrieval"
)]
pub struct Cli {
    /// `key=value` file of subcommand options; flags on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the JSON report here instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LogLevel::Warn)]
    log_level: LogLevel,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum LogLevel {
    Off,
    Warn,
    /// Also reports the time spent in each stage.
    Info,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract (constrained) dominant sets from a graph.
    Cluster(ClusterArgs),
    /// Seeded segmentation of a superpixel graph.
    Segment(SegmentArgs),
    /// Co-segmentation of two images.
    Coseg(CosegArgs),
    /// Diffusion re-ranking of an affinity matrix.
    Diffuse(DiffuseArgs),
    /// Multi-feature retrieval fusion.
    Fuse(FuseArgs),
    /// Differentiable constrained-dominant-set block on a mini-batch.
    Dcds(DcdsArgs),
    /// Retrieval and segmentation metrics for precomputed outputs.
    Metrics(MetricsArgs),
    /// Write the built-in test graphs and synthetic datasets.
    Fixtures(FixturesArgs),
}

/// Stderr logging filtered by level.
#[derive(Debug, Clone, Copy)]
pub struct Log {
    level: LogLevel,
    start: Instant,
}

impl Log {
    pub fn warn(&self, msg: &str) {
        if self.level >= LogLevel::Warn {
            eprintln!("warning: {msg}");
        }
    }

    /// Logs the time since the previous stage and starts a new one.
    pub fn stage(&mut self, name: &str) {
        if self.level >= LogLevel::Info {
            eprintln!("info: {name} took {:.3} s", self.start.elapsed().as_secs_f64());
        }
        self.start = Instant::now();
    }
}

/// What a subcommand produced.
pub struct Outcome {
    pub report: serde_json::Value,
    pub converged: bool,
}

fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    let cli = match parse(&args) {
        Ok(cli) => cli,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let mut log = Log {
        level: cli.log_level,
        start: Instant::now(),
    };
    let outcome = match dispatch(cli.command, &mut log) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = write_report(&outcome.report, cli.output.as_deref()) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    if outcome.converged {
        ExitCode::SUCCESS
    } else {
        log.warn("a solver run stopped before converging");
        ExitCode::from(3)
    }
}

/// Parses the command line, then re-parses with config entries inserted after the subcommand.
fn parse(args: &[OsString]) -> Result<Cli> {
    let matches = matches(args);
    let cli = Cli::from_arg_matches(&matches)?;
    let Some(path) = cli.config.clone() else {
        return Ok(cli);
    };
    let entries = config::read(&path)?;
    let (name, _) = matches.subcommand().expect("a subcommand is required");
    let at = subcommand_position(args, name).with_context(|| format!("cannot locate `{name}` on the command line"))?;
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(name).expect("parsed subcommand exists");
    let merged = config::inject(args, at, sub, &entries)?;
    Ok(Cli::from_arg_matches(&matches_from_config(&merged, &path))?)
}

/// Usage errors exit with status 2, help and version with 0.
fn matches(args: &[OsString]) -> ArgMatches {
    Cli::command().try_get_matches_from(args).unwrap_or_else(|e| e.exit())
}

fn matches_from_config(args: &[OsString], path: &Path) -> ArgMatches {
    Cli::command().try_get_matches_from(args).unwrap_or_else(|e| {
        eprintln!("in config {}:", path.display());
        e.exit()
    })
}

/// Index of the subcommand token, skipping the values of the top-level options.
fn subcommand_position(args: &[OsString], name: &str) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_str()?;
        if a == name {
            return Some(i);
        }
        if matches!(a, "--config" | "--output" | "-o" | "--log-level") {
            i += 1;
        }
        i += 1;
    }
    None
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("CDSKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .with_context(|| format!("CDSKIT_THREADS=`{v}` is not a count"))?;
    if n == 0 {
        bail!("CDSKIT_THREADS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")
}

fn dispatch(command: Command, log: &mut Log) -> Result<Outcome> {
    match command {
        Command::Cluster(a) => commands::cluster(&a, log),
        Command::Segment(a) => commands::segment(&a, log),
        Command::Coseg(a) => commands::coseg(&a, log),
        Command::Diffuse(a) => commands::diffuse(&a, log),
        Command::Fuse(a) => commands::fuse(&a, log),
        Command::Dcds(a) => commands::dcds(&a, log),
        Command::Metrics(a) => commands::metrics(&a, log),
        Command::Fixtures(a) => commands::fixtures(&a, log),
    }
}

fn write_report(report: &serde_json::Value, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
