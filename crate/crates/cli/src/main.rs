//! `stanceformer` command-line runner.

mod commands;
mod rundir;
mod settings;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stanceformer::{Error, Result};

use crate::rundir::RunDir;
use crate::settings::Settings;

const OVERRIDE_HELP: &str = "\
Any config key can also be given as a flag, e.g. `--ta.alpha 0.8` or
`--train.epochs=10`. Flags override the --config file, which overrides the
built-in defaults. Unknown keys are rejected.";

#[derive(Parser, Debug)]
#[command(name = "stanceformer", version, about = "Target-aware transformer stance classifier", after_help = OVERRIDE_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// `key = value` config file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Shorthand for `--run.seed`
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Shorthand for `--run.out`
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Eq)]
enum Command {
    /// Train on data.train, select on data.val, report on data.test (or val)
    Train,
    /// Score run.checkpoint on data.test
    Eval,
    /// Train once per alpha in grid.alphas and keep the best on validation
    Gridsearch {
        /// Shorthand for `--grid.alphas`
        #[arg(long, value_name = "LIST")]
        alphas: Option<String>,
    },
    /// Original / masked-target / target-aware arms over ablate.seeds
    Ablate,
    /// Dump attention matrices of run.checkpoint for attention.input
    Attention,
    /// Write a synthetic target-dependent corpus into --out
    Synth,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Gridsearch { .. } => "gridsearch",
            Command::Ablate => "ablate",
            Command::Attention => "attention",
            Command::Synth => "synth",
        }
    }
}

/// Pulls `--section.key value` and `--section.key=value` out of the argument
/// list; everything else goes to clap.
fn split_overrides(args: Vec<OsString>) -> Result<(Vec<OsString>, Vec<(String, String)>)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let dotted = arg
            .to_str()
            .and_then(|s| s.strip_prefix("--"))
            .filter(|s| s.split('=').next().is_some_and(|k| k.contains('.')))
            .map(str::to_string);
        let Some(flag) = dotted else {
            rest.push(arg);
            continue;
        };
        match flag.split_once('=') {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .and_then(|v| v.into_string().ok())
                    .ok_or_else(|| Error::Usage(format!("flag `--{flag}` needs a value")))?;
                overrides.push((flag, v));
            }
        }
    }
    Ok((rest, overrides))
}

fn run(cli: &Cli, overrides: &[(String, String)]) -> Result<()> {
    let mut settings = Settings::default();
    if let Some(path) = &cli.config {
        settings.apply_file(path)?;
    }
    if let Some(seed) = cli.seed {
        settings.set("run.seed", &seed.to_string())?;
    }
    if let Some(out) = &cli.out {
        settings.set("run.out", &out.to_string_lossy())?;
    }
    if let Command::Gridsearch { alphas: Some(a) } = &cli.command {
        settings.set("grid.alphas", a)?;
    }
    for (k, v) in overrides {
        settings.set(k, v)?;
    }
    let rc = settings.resolve()?;

    if cli.command == Command::Synth {
        commands::cmd_synth(&rc)?;
        println!("{}", rc.out.display());
        return Ok(());
    }

    let dir = RunDir::create(&rc.out, cli.command.name(), rc.seed)?;
    let result = match cli.command {
        Command::Train => commands::cmd_train(&rc, &mut settings, &dir),
        Command::Eval => commands::cmd_eval(&rc, &mut settings, &dir),
        Command::Gridsearch { .. } => commands::cmd_gridsearch(&rc, &mut settings, &dir),
        Command::Ablate => commands::cmd_ablate(&rc, &mut settings, &dir),
        Command::Attention => commands::cmd_attention(&rc, &mut settings, &dir),
        Command::Synth => unreachable!(),
    }
    .and_then(|()| dir.write("config.snapshot", settings.snapshot()));
    match result {
        Ok(()) => {
            println!("{}", dir.commit()?.display());
            Ok(())
        }
        Err(e) => {
            dir.abandon();
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args_os().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(&cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
