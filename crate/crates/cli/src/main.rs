use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;
mod meta;

use error::CliError;

/// Multiplexed ghost imaging: generate objects, simulate acquisitions, reconstruct.
#[derive(Parser, Debug)]
#[command(name = "mgi", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a test object as an 8-bit PGM
    GenObject(GenObjectArgs),
    /// Simulate ghost-image (and optionally ordinary-image) measurements
    Simulate(SimulateArgs),
    /// Reconstruct images from a measurement for each basis and lambda
    Reconstruct(ReconstructArgs),
    /// Compare ghost and ordinary reconstructions over several seeds
    Compare(CompareArgs),
    /// MSE and PSNR between two PGM images
    Metrics(MetricsArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pattern {
    TwoSlit,
    Constant,
    Bitmap,
}

#[derive(Args, Debug)]
pub struct GenObjectArgs {
    pattern: Pattern,
    /// Square grid side; overrides the config file
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Transparency for the constant pattern
    #[arg(long, default_value_t = 0.5)]
    value: f64,
    /// Source image for the bitmap pattern
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long)]
    bar_width: Option<usize>,
    #[arg(long)]
    gap: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "object.pgm")]
    out: PathBuf,
}

/// Model and acquisition settings shared by several commands.
#[derive(Args, Debug, Default, Clone)]
pub struct ModelArgs {
    /// Flat key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    detector_size: Option<usize>,
    /// sliding or tiled
    #[arg(long)]
    placement: Option<String>,
    /// Photons per pixel on average
    #[arg(long)]
    photons: Option<f64>,
    /// Noise photons per pixel
    #[arg(long)]
    noise_photons: Option<f64>,
    /// Fraction of noise photons inside the coincidence window
    #[arg(long)]
    p_acc: Option<f64>,
    #[arg(long)]
    readout_variance: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    object: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Several seeds; each gets its own file with an `_s<seed>` suffix
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// gaussian or poisson
    #[arg(long)]
    noise_mode: Option<String>,
    /// Scale of the drawn noise; 0 gives noiseless data
    #[arg(long)]
    noise_scale: Option<f64>,
    /// Also write the single-arm ordinary image
    #[arg(long)]
    ordinary: bool,
    #[arg(long, default_value = "measurement.mgi")]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    measurement: PathBuf,
    /// Ground truth, for the mse and psnr columns
    #[arg(long)]
    object: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// identity, dct or haar; comma-separated
    #[arg(long, value_delimiter = ',')]
    basis: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Metrics CSV path; defaults to `<out-dir>/<measurement stem>_metrics.csv`
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Leave the runtime column empty so the CSV is reproducible byte for byte
    #[arg(long)]
    no_runtime: bool,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Ground truth object
    #[arg(long)]
    object: PathBuf,
    /// Ghost-image measurements, one per seed
    #[arg(long, num_args = 1.., required = true)]
    gi: Vec<PathBuf>,
    /// Ordinary-image measurements, paired with --gi by position
    #[arg(long, num_args = 1.., required = true)]
    ordinary: Vec<PathBuf>,
    #[arg(long, default_value = "dct")]
    basis: String,
    #[arg(long, value_delimiter = ',', default_value = "1.25")]
    lambda: Vec<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenObject(a) => commands::gen_object(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
        Command::Compare(a) => commands::compare(a),
        Command::Metrics(a) => commands::metrics(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mgi: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
