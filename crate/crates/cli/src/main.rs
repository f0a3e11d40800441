use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use spinparity::outcome::SwapPolicy;
use spinparity_cli::scenario::{OutputFormat, ProtocolKind};
use spinparity_cli::{parse_scenario, render_document, run_command, ScenarioConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

/// Spin-parity protocol simulator for coupled quantum dots.
#[derive(Debug, Parser)]
#[command(name = "spinparity", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file; `trials=0` selects exact enumeration.
    Run {
        file: PathBuf,
        #[arg(long)]
        trials: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Enumerate every branch of a scenario file exactly.
    Exact {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Measure all four Bell states and print the detector signature table.
    Table1 {
        /// Trials per Bell input; 0 enumerates branches instead.
        #[arg(long)]
        trials: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    /// Write the document here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, value_enum)]
    force_swap: Option<SwapArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SwapArg {
    On,
    Off,
    Random,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let parsed = parse_scenario(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    for w in &parsed.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(parsed.config)
}

fn apply(config: &mut ScenarioConfig, common: &Common) {
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(f) = common.format {
        config.format = match f {
            FormatArg::Text => OutputFormat::Text,
            FormatArg::Csv => OutputFormat::Csv,
        };
    }
    if let Some(s) = common.force_swap {
        config.force_swap = match s {
            SwapArg::On => SwapPolicy::On,
            SwapArg::Off => SwapPolicy::Off,
            SwapArg::Random => SwapPolicy::Random,
        };
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let (config, out) = match cli.command {
        Command::Run { file, trials, common } => {
            let mut config = load(&file)?;
            if let Some(t) = trials {
                config.trials = t;
            }
            apply(&mut config, &common);
            (config, common.out)
        }
        Command::Exact { file, common } => {
            let mut config = load(&file)?;
            config.trials = 0;
            apply(&mut config, &common);
            (config, common.out)
        }
        Command::Table1 { trials, common } => {
            let mut config = ScenarioConfig::new(ProtocolKind::Table1);
            if let Some(t) = trials {
                config.trials = t;
            }
            apply(&mut config, &common);
            (config, common.out)
        }
    };
    let doc = run_command(&config).map_err(|e| Failure::Runtime(e.to_string()))?;
    let text = render_document(&doc);
    match out {
        Some(path) => {
            fs::write(&path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
