//! `evcast`: synthesize propeller scenes, estimate rotation rates from
//! event streams, forecast drone trajectories, and score the results.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use commands::{CliError, EvaluateInputs, ForecastInputs};

#[derive(Parser)]
#[command(
    name = "evcast",
    version,
    about = "Event-camera drone trajectory forecasting toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file with `key = value` lines.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. --set rpm.blades=3. Repeatable;
    /// applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct GeometryArg {
    /// Sensor size for CSV event input and annotation clamping.
    #[arg(long, value_name = "WxH", default_value = "1280x720")]
    geometry: String,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene from a scenario file.
    Simulate {
        /// Scenario description (`key = value` lines).
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
        /// Output directory for events, annotations, and ground truth.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Replace the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate propeller rotation rate along an annotated track.
    EstimateRpm {
        /// Event stream: .bin for the binary container, anything else is CSV.
        #[arg(long, value_name = "FILE")]
        events: PathBuf,
        /// Bounding-box annotations CSV.
        #[arg(long, value_name = "FILE")]
        annotations: PathBuf,
        /// Track id; needed only when the file holds several tracks.
        #[arg(long)]
        track: Option<u32>,
        #[command(flatten)]
        geometry: GeometryArg,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Forecast future track positions and write them as CSV.
    Forecast {
        /// Bounding-box annotations CSV.
        #[arg(long, value_name = "FILE")]
        annotations: PathBuf,
        /// Track id; needed only when the file holds several tracks.
        #[arg(long)]
        track: Option<u32>,
        /// Event stream to estimate rotation from (proposed method).
        #[arg(long, value_name = "FILE")]
        events: Option<PathBuf>,
        /// Precomputed rotation series (proposed method).
        #[arg(long, value_name = "FILE")]
        rpm: Option<PathBuf>,
        /// Forecasting method; shorthand for --set method=NAME.
        #[arg(long, value_name = "NAME")]
        method: Option<String>,
        #[command(flatten)]
        geometry: GeometryArg,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Score forecast files against ground truth and compare methods.
    Evaluate {
        /// Forecast CSV as label=path. Repeatable; labels name the rows in
        /// the comparison table. Methods are scored on the emission times
        /// they all share.
        #[arg(long = "forecast", value_name = "LABEL=FILE", required = true)]
        forecasts: Vec<String>,
        /// Ground-truth centers CSV (t_us,cx,cy).
        #[arg(long, value_name = "FILE")]
        ground_truth: Option<PathBuf>,
        /// Score against annotation box centers instead of a truth file.
        #[arg(long, value_name = "FILE")]
        annotations: Option<PathBuf>,
        /// Track id for --annotations with several tracks.
        #[arg(long)]
        track: Option<u32>,
        /// Time slack when matching prediction times to truth samples.
        #[arg(long, value_name = "US", default_value_t = 16_667)]
        tolerance_us: u64,
        /// Also render boxplot and overlay SVGs.
        #[arg(long)]
        svg: bool,
        #[command(flatten)]
        geometry: GeometryArg,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Convert a FRED dataset recording into the native formats.
    ConvertFred {
        /// Recording directory from the dataset release.
        #[arg(long, value_name = "DIR")]
        recording: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { scenario, out, seed } => {
            commands::simulate(&scenario, &out, seed)
        }
        Command::EstimateRpm { events, annotations, track, geometry, config, out } => {
            let cfg = commands::load_config(config.config.as_deref(), &config.sets)?;
            let geometry = commands::parse_geometry(&geometry.geometry)?;
            commands::estimate_rpm(&events, &annotations, track, geometry, &cfg, &out)
        }
        Command::Forecast {
            annotations,
            track,
            events,
            rpm,
            method,
            geometry,
            config,
            out,
        } => {
            let mut sets = config.sets.clone();
            if let Some(m) = method {
                sets.push(format!("method={m}"));
            }
            let cfg = commands::load_config(config.config.as_deref(), &sets)?;
            let geometry = commands::parse_geometry(&geometry.geometry)?;
            let inputs = ForecastInputs {
                annotations: &annotations,
                track,
                events: events.as_deref(),
                rpm: rpm.as_deref(),
                geometry,
            };
            commands::forecast(&inputs, &cfg, &out)
        }
        Command::Evaluate {
            forecasts,
            ground_truth,
            annotations,
            track,
            tolerance_us,
            svg,
            geometry,
            config,
            out,
        } => {
            let cfg = commands::load_config(config.config.as_deref(), &config.sets)?;
            let geometry = commands::parse_geometry(&geometry.geometry)?;
            let mut labeled = Vec::new();
            for raw in &forecasts {
                let Some((label, path)) = raw.split_once('=') else {
                    return Err(CliError::User(format!(
                        "--forecast '{raw}': expected label=path"
                    )));
                };
                labeled.push((label.to_string(), PathBuf::from(path)));
            }
            let inputs = EvaluateInputs {
                forecasts: labeled,
                ground_truth: ground_truth.as_deref(),
                annotations: annotations.as_deref(),
                track,
                geometry,
                tolerance_us,
                svg,
            };
            commands::evaluate(&inputs, &cfg, &out)
        }
        Command::ConvertFred { recording, out } => commands::convert_fred(&recording, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
