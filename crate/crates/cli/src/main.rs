use std::ffi::OsString;
use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use parklot::commands::{self, AnalyzeRequest, Input};
use parklot::config::{parse_formats, split_overrides, Override};
use parklot::{serve, CliError, EngineConfig};
use tracing::level_filters::LevelFilter;

#[derive(Parser)]
#[command(name = "parklot", version, about = "Parking occupancy from tracked vehicle detections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a detection stream and write the occupancy log.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Detection stream file, or `-` for standard input (the default).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Compute analytics from an occupancy log.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated: csv, json, svg.
        #[arg(long, value_delimiter = ',', default_value = "csv,json")]
        formats: Vec<String>,
        /// Slot map used to label slots and draw heatmaps.
        #[arg(long)]
        slots: Option<PathBuf>,
        /// Also report continuous occupations longer than this.
        #[arg(long)]
        overstay_seconds: Option<f64>,
    },
    /// Serve the slot map, the live event stream and analytics over HTTP.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Replay a finished log instead of running the pipeline.
        #[arg(long, conflicts_with = "input")]
        replay: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Check a slot-map file.
    ValidateSlots { map: PathBuf },
    /// Generate a synthetic scenario with its ground truth.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_logging() -> Result<(), CliError> {
    let level = match std::env::var("PARKLOT_LOG_LEVEL").as_deref() {
        Err(_) | Ok("") | Ok("info") => LevelFilter::INFO,
        Ok("error") => LevelFilter::ERROR,
        Ok("warn") => LevelFilter::WARN,
        Ok("debug") => LevelFilter::DEBUG,
        Ok(other) => {
            return Err(CliError::Usage(format!(
                "PARKLOT_LOG_LEVEL must be error, warn, info or debug, got `{other}`"
            )))
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    Ok(())
}

fn dispatch(args: Vec<OsString>) -> Result<(), CliError> {
    init_logging()?;
    let (args, overrides) = split_overrides(args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            let msg = msg.strip_prefix("error: ").unwrap_or(&msg).trim_end();
            return Err(CliError::Usage(msg.to_string()));
        }
    };
    let no_overrides = |overrides: &[Override]| {
        if overrides.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage("config overrides only apply to run and serve".into()))
        }
    };
    match cli.command {
        Command::Run { config, input } => {
            let cfg = EngineConfig::load(&config, &overrides)?;
            commands::run(&cfg, &Input::from_arg(input.as_deref()))?;
        }
        Command::Analyze {
            log,
            out,
            formats,
            slots,
            overstay_seconds,
        } => {
            no_overrides(&overrides)?;
            let formats = parse_formats(formats.iter().map(String::as_str))?;
            commands::analyze(&AnalyzeRequest {
                log: &log,
                out: &out,
                formats: &formats,
                slots: slots.as_deref(),
                overstay_seconds,
            })?;
        }
        Command::Serve {
            config,
            replay,
            input,
        } => {
            let cfg = EngineConfig::load(&config, &overrides)?;
            serve::serve_command(&cfg, replay.as_deref(), &Input::from_arg(input.as_deref()))?;
        }
        Command::ValidateSlots { map } => {
            no_overrides(&overrides)?;
            commands::validate_slots(&map)?;
        }
        Command::Synth { spec, out } => {
            no_overrides(&overrides)?;
            commands::synth(&spec, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
