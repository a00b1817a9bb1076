//! Argument parsing and subcommand dispatch for the `depcap` binary.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::harness::{write_csv, Harness};
use crate::{exit, verify};
use anyhow::Context;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "depcap", version, about = "Block-wise diffusion decoding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One decode per strategy and seed; writes CSV.
    Run(RunArgs),
    /// Cartesian product over the config's [grid]; writes CSV.
    Sweep(RunArgs),
    /// Brute-force identity checks on small HMM fixtures.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV destination; defaults to the config's `output`, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Replaces the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// JSON report destination.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Fixture generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    fixtures: usize,
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_table(args: &RunArgs, sweep: bool) -> anyhow::Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    let out = args.out.clone().or_else(|| config.output.clone());
    let harness = Harness::new(config)?;
    let (rows, swept) = if sweep {
        let names = harness
            .config()
            .grid
            .as_ref()
            .map(|g| g.axis_names())
            .unwrap_or_default();
        (harness.sweep(args.jobs)?, names)
    } else {
        (harness.run(args.jobs)?, Vec::new())
    };
    write_csv(&rows, &swept, sink(out.as_deref())?)?;
    if let Some(p) = &out {
        eprintln!("wrote {} rows to {}", rows.len(), p.display());
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> anyhow::Result<u8> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()?;
    let report = pool.install(|| verify::run_suite(args.fixtures, args.seed))?;
    for line in verify::summary_lines(&report) {
        println!("{line}");
    }
    println!(
        "passed {}  failed {}  skipped {}  epsilon sign +{} -{} 0:{}",
        report.passed,
        report.failed,
        report.skipped,
        report.epsilon_sign.positive,
        report.epsilon_sign.negative,
        report.epsilon_sign.zero
    );
    if let Some(p) = &args.out {
        let mut w = sink(Some(p))?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        writeln!(w)?;
    }
    Ok(report.exit_status())
}

/// Parses `args` (program name first) and executes the subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::OK };
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_table(args, false).map(|_| exit::OK),
        Command::Sweep(args) => cmd_table(args, true).map(|_| exit::OK),
        Command::Verify(args) => cmd_verify(args),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        exit::CONFIG
    })
}
