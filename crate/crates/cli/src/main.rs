//! `popvec`: command-line workbench for the population-vector pipeline.

mod commands;
mod config;
mod error;
mod layout;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::layout::Ctx;

#[derive(Debug, Parser)]
#[command(name = "popvec", version, about = "Population-vector analysis pipeline")]
struct Cli {
    /// Run configuration file (sectioned key = value)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `run.seed`
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads; output does not depend on this
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Exit with code 4 when a solver reports non-convergence
    #[arg(long, global = true)]
    strict: bool,
    /// Overrides `paths.workdir`
    #[arg(long, global = true, value_name = "DIR")]
    workdir: Option<PathBuf>,
    /// Print the default configuration and exit
    #[arg(long)]
    print_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Stimulus images, manifest, unit population and spike trains
    Generate,
    /// Count windows and the z-scored response matrix (needs `generate`)
    Preprocess,
    /// Photometric features and class labels (needs `generate`)
    Features,
    /// Clustering parameter sweeps and winners (needs `preprocess`, `features`)
    Sweep,
    /// Classifier evaluation and shuffled-label control (needs `preprocess`, `features`)
    Classify,
    /// t-SNE map and SVG scatter plots (needs `preprocess`, `features`, `sweep`)
    Embed,
    /// Text summary and archive of every artifact (needs all of the above)
    Report,
    /// Runs every command in order
    All,
    /// Prints the effective configuration and its hash
    Config,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Preprocess => "preprocess",
            Command::Features => "features",
            Command::Sweep => "sweep",
            Command::Classify => "classify",
            Command::Embed => "embed",
            Command::Report => "report",
            Command::All => "all",
            Command::Config => "config",
        }
    }
}

const PIPELINE: [Command; 7] = [
    Command::Generate,
    Command::Preprocess,
    Command::Features,
    Command::Sweep,
    Command::Classify,
    Command::Embed,
    Command::Report,
];

fn run_one(cmd: Command, ctx: &Ctx) -> CliResult<commands::Flags> {
    log::info!("running {}", cmd.name());
    match cmd {
        Command::Generate => commands::generate(ctx),
        Command::Preprocess => commands::preprocess(ctx),
        Command::Features => commands::features(ctx),
        Command::Sweep => commands::sweep(ctx),
        Command::Classify => commands::classify(ctx),
        Command::Embed => commands::embed(ctx),
        Command::Report => commands::report(ctx),
        Command::All | Command::Config => unreachable!("not a pipeline step"),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.print_defaults {
        print!("{}", RunConfig::defaults_text());
        return Ok(());
    }
    let Some(cmd) = cli.command else {
        return Err(CliError::Config("no command given; see `popvec --help`".into()));
    };
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(w) = &cli.workdir {
        cfg.paths.workdir = w.to_string_lossy().into_owned();
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?;
    }
    let ctx = Ctx::new(cfg);
    if let Command::Config = cmd {
        print!("{}", ctx.cfg.canonical());
        println!("# config_hash = {}", ctx.hash);
        return Ok(());
    }
    let steps: Vec<Command> = match cmd {
        Command::All => PIPELINE.to_vec(),
        c => vec![c],
    };
    let mut flags = Vec::new();
    for step in steps {
        for f in run_one(step, &ctx)? {
            log::warn!("{}: {f}", step.name());
            flags.push(format!("{}: {f}", step.name()));
        }
    }
    if cli.strict && !flags.is_empty() {
        return Err(CliError::Numerical(flags.join("; ")));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
