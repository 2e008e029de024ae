use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use prog3d_cli::commands;
use prog3d_cli::config::{ImageFormat, Overrides};
use prog3d_cli::CliError;

#[derive(Parser)]
#[command(name = "prog3d", version, about = "Progressive region-constrained 3D editing")]
struct Cli {
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a run config and every file it references.
    Validate {
        /// Run config (JSON).
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the edit chain of a config.
    Run {
        /// Run config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Base seed, replacing the config's.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, replacing `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Iterations between snapshot renders.
        #[arg(long)]
        snapshot_every: Option<usize>,
        /// Opacity filter threshold for every step.
        #[arg(long)]
        tau_o: Option<f64>,
    },
    /// Render color, opacity and depth images of a checkpoint.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Camera orbit JSON; defaults to eight 64×64 views.
        #[arg(long)]
        cameras: Option<PathBuf>,
        /// Opacity below which the depth image is left black; 0.5 when absent.
        #[arg(long)]
        tau_o: Option<f64>,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Png)]
        format: Format,
    },
    /// Write the region mask pipeline images for a checkpoint.
    Masks {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Region JSON (boxes and optional per-view images).
        #[arg(long)]
        region: PathBuf,
        #[arg(long)]
        cameras: Option<PathBuf>,
        /// Opacity filter threshold, in (0, 1); 0.5 when absent.
        #[arg(long)]
        tau_o: Option<f64>,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Png)]
        format: Format,
    },
    /// Write the two-step demo (config, initial checkpoint, target images).
    DemoInit {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Format {
    Png,
    Ppm,
}

impl From<Format> for ImageFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Png => ImageFormat::Png,
            Format::Ppm => ImageFormat::Ppm,
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("PROG3D_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("PROG3D_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(CliError::runtime)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Validate { config } => {
            for w in commands::validate(&config)? {
                eprintln!("warning: {w}");
            }
            Ok(())
        }
        Command::Run {
            config,
            seed,
            out,
            snapshot_every,
            tau_o,
        } => {
            let ov = Overrides {
                seed,
                tau_o,
                out,
                snapshot_every,
            };
            commands::run(&config, &ov, cli.quiet).map(|_| ())
        }
        Command::Render {
            checkpoint,
            cameras,
            tau_o,
            samples,
            out,
            format,
        } => commands::render(&checkpoint, cameras.as_deref(), tau_o, samples, &out, format.into()),
        Command::Masks {
            checkpoint,
            region,
            cameras,
            tau_o,
            samples,
            out,
            format,
        } => commands::masks(&checkpoint, &region, cameras.as_deref(), tau_o, samples, &out, format.into()),
        Command::DemoInit { out } => {
            let path = prog3d_cli::demo::write_demo(&out)?;
            if !cli.quiet {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
