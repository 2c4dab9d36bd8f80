mod commands;
mod config;
mod error;
mod output;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{Context, Corruption};
use config::Config;
use error::{CliError, CliResult};
use output::OutDir;

/// Particle and grid approximations of principal eigen-elements of
/// non-negative integral kernels.
///
/// Any config key can also be given as `--key value`, overriding the config
/// file and preset.
#[derive(Debug, Parser)]
#[command(name = "pfeigen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Attach the grid-oracle reference to the outputs.
    #[arg(long, global = true)]
    oracle: bool,

    /// Inject a fault (negative control for `validate`).
    #[arg(long, global = true, value_enum)]
    corrupt: Option<CorruptArg>,

    /// Suppress progress messages on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CorruptArg {
    H,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forward/backward particle run: h estimate, λ sequence, summary.
    Eigen,
    /// Grid power iteration: h⋆, η⋆, MET profile.
    Oracle,
    /// Value function and average cost of the control problem.
    Bellman,
    /// Importance-sampling estimates of deviation probabilities.
    RareEvent,
    /// Exact identities and diagnostics; nonzero exit on failure.
    Validate,
}

const SHARED_WITH_VALUE: &[&str] = &["--config", "--seed", "--out", "--threads", "--corrupt"];
const SHARED_SWITCHES: &[&str] = &["--oracle", "--quiet", "-q", "--help", "-h", "--version", "-V"];

/// Splits `--key value` config overrides from the arguments clap knows.
fn split_overrides(args: Vec<String>) -> CliResult<(Vec<String>, Vec<(String, String)>)> {
    let mut known = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    if let Some(bin) = it.next() {
        known.push(bin);
    }
    while let Some(arg) = it.next() {
        let name = arg.split('=').next().unwrap_or(&arg).to_string();
        if SHARED_SWITCHES.contains(&arg.as_str()) || !arg.starts_with("--") {
            known.push(arg);
        } else if SHARED_WITH_VALUE.contains(&name.as_str()) {
            let has_inline = arg.contains('=');
            known.push(arg);
            if !has_inline {
                if let Some(v) = it.next() {
                    known.push(v);
                }
            }
        } else {
            let key = name.trim_start_matches("--").to_string();
            let value = match arg.split_once('=') {
                Some((_, v)) => v.to_string(),
                None => it
                    .next()
                    .ok_or_else(|| CliError::Config(format!("option {arg} needs a value")))?,
            };
            overrides.push((key, value));
        }
    }
    Ok((known, overrides))
}

fn run(args: Vec<String>) -> CliResult<()> {
    let (known, overrides) = split_overrides(args)?;
    let cli = match Cli::try_parse_from(known) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::Config(e.to_string()));
        }
    };
    let config = Config::assemble(cli.config.as_deref(), &overrides)?;
    let seed = match cli.seed {
        Some(s) => s,
        None => config.get("seed", 1u64)?,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let ctx = Context {
        config,
        seed,
        out: OutDir::new(&cli.out)?,
        oracle: cli.oracle,
        corrupt: cli.corrupt.map(|CorruptArg::H| Corruption::H),
        quiet: cli.quiet,
    };
    let mut effective = ctx.config.effective();
    effective.insert("seed".into(), seed.to_string());
    ctx.out.json("config.json", &effective)?;
    match cli.command {
        Command::Eigen => commands::eigen::run(&ctx),
        Command::Oracle => commands::oracle::run(&ctx),
        Command::Bellman => commands::bellman::run(&ctx),
        Command::RareEvent => commands::rare_event::run(&ctx),
        Command::Validate => commands::validate::run(&ctx),
    }
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pfeigen: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
