//! Command-line entry points for rendering, augmentation, training,
//! evaluation and feature maps.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

/// Worker thread count for parallel stages.
pub const WORKERS_ENV: &str = "SIMREPR_WORKERS";

#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, config or input files: exit 2.
    Usage(String),
    /// Anything that went wrong while running: exit 1.
    Runtime(String),
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Failure::Runtime(msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<simrepr::Error> for Failure {
    fn from(e: simrepr::Error) -> Self {
        use simrepr::Error as E;
        match e {
            E::Io(_) | E::Png(_) | E::MissingAsset { .. } | E::InsufficientData(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "simrepr", version, about = "Noise-embedded depth and categorized detection representations for learned navigation")]
struct Cli {
    /// TOML file with one table per subcommand; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Roll out the scripted expert and write images plus a manifest.
    Render(commands::RenderArgs),
    /// Materialize one representation kind from a manifest.
    Augment(commands::AugmentArgs),
    /// Train a policy network on a rendered dataset.
    Train(commands::TrainArgs),
    /// Drive routes closed-loop and report interventions.
    Eval(commands::EvalArgs),
    /// Write channel-averaged conv feature maps as PNG.
    Featmap(commands::FeatmapArgs),
    /// Tabulate evaluation logs or training logs.
    Summarize(commands::SummarizeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Render(_) => "render",
            Command::Augment(_) => "augment",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Featmap(_) => "featmap",
            Command::Summarize(_) => "summarize",
        }
    }
}

fn setup_workers() -> Result<(), Failure> {
    let Ok(v) = std::env::var(WORKERS_ENV) else { return Ok(()) };
    let n: usize =
        v.parse().ok().filter(|&n| n > 0).ok_or_else(|| Failure::usage(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<Value, Failure> {
    setup_workers()?;
    let file = config::ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Render(a) => commands::render(a, &file),
        Command::Augment(a) => commands::augment(a, &file),
        Command::Train(a) => commands::train(a, &file),
        Command::Eval(a) => commands::eval(a, &file),
        Command::Featmap(a) => commands::featmap(a, &file),
        Command::Summarize(a) => commands::summarize(a, &file),
    }
}

fn status(command: &str, result: Result<Value, Failure>) -> ExitCode {
    match result {
        Ok(mut v) => {
            let mut line = json!({ "status": "ok", "command": command });
            if let (Some(l), Some(extra)) = (line.as_object_mut(), v.as_object_mut()) {
                l.append(extra);
            }
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            println!("{}", json!({ "status": "error", "command": command, "code": f.code(), "message": f.message() }));
            ExitCode::from(f.code())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand)
            {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { ExitCode::from(2) } else { ExitCode::SUCCESS };
            }
            let _ = e.print();
            println!("{}", json!({ "status": "error", "code": 2, "message": e.kind().to_string() }));
            return ExitCode::from(2);
        }
    };
    let name = cli.command.name();
    status(name, run(cli))
}
