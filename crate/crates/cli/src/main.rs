use std::path::PathBuf;
use std::process::ExitCode;

use acam_cli::commands;
use acam_cli::config::{parse_noise_level, parse_strategy, Overrides};
use acam_cli::error::{CliError, EXIT_OK};
use acam_core::simulator::NoiseLevel;
use acam_core::tdoa_model::PairingStrategy;
use clap::{Args, Parser, Subcommand};

/// Acoustic camera extrinsic calibration.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// Worker threads; the ACAM_THREADS environment variable takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    /// lv1, lv2, lv3, lv4 or custom:<seconds>
    #[arg(long, value_parser = parse_noise_level)]
    noise_level: Option<NoiseLevel>,

    /// single-ref, single-ref:<index> or all-pairs
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<PairingStrategy>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            noise_level: self.noise_level,
            strategy: self.strategy,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte-Carlo evaluation of the solver.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve for microphone positions from board poses and TDOAs.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract TDOAs from a multichannel WAV with GCC-PHAT.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        windows: PathBuf,
        /// Output measurement CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solver against the grid-search baseline per noise level.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// RMSE against the number of board positions.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated board counts.
        #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 30, 40, 50, 60])]
        boards: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one simulated trial as a dataset for `calibrate`.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the simulated scenario to a WAV recording for `extract`.
    SynthAudio {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    match std::env::var("ACAM_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            CliError::Input(format!(
                "ACAM_THREADS must be a positive integer, got `{v}`"
            ))
        }),
        Err(_) => Ok(flag),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(CliError::Input("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { common, out } => {
            commands::cmd_simulate(common.config.as_deref(), &common.overrides(), &out)
        }
        Command::Calibrate {
            common,
            poses,
            measurements,
            out,
        } => commands::cmd_calibrate(
            &poses,
            &measurements,
            common.config.as_deref(),
            &common.overrides(),
            &out,
        ),
        Command::Extract {
            common,
            wav,
            windows,
            out,
        } => commands::cmd_extract(
            &wav,
            &windows,
            common.config.as_deref(),
            &common.overrides(),
            &out,
        ),
        Command::Compare { common, out } => {
            commands::cmd_compare(common.config.as_deref(), &common.overrides(), &out)
        }
        Command::Sweep {
            common,
            boards,
            out,
        } => commands::cmd_sweep(common.config.as_deref(), &common.overrides(), &boards, &out),
        Command::Export { common, trial, out } => {
            commands::cmd_export(common.config.as_deref(), &common.overrides(), trial, &out)
        }
        Command::SynthAudio { common, out } => {
            commands::cmd_synth_audio(common.config.as_deref(), &common.overrides(), &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
