//! `bayerforge` command-line frontend.
//!
//! Exit codes: 0 success, 1 failed verification, 2 bad flags, 3 unreadable
//! input, 4 invalid pipeline or processing failure, 5 nothing to compare.

mod batch;
mod compare;
mod exit;
mod single;

use std::path::PathBuf;
use std::process::ExitCode;

use bayerforge::mosaic::{DemosaicAlgorithm, ResizeFilter};
use bayerforge::CfaLayout;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::exit::CliError;

#[derive(Debug, Parser)]
#[command(name = "bayerforge", version, about = "RAW Bayer dataset conversion, ISP development and metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a directory of color images into synthetic RAW mosaics.
    ToRaw(ToRawArgs),
    /// Develop a directory of RAW mosaics into color images.
    Develop(DevelopArgs),
    /// Compare two directories of images paired by file stem.
    Metrics(MetricsArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Mosaic one color image.
    Mosaic(MosaicArgs),
    /// Demosaic one RAW mosaic.
    Demosaic(DemosaicArgs),
    /// Pack one RAW mosaic into four half-resolution planes.
    Pack(IoArgs),
    /// Rebuild a RAW mosaic from packed planes.
    Unpack(IoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ResizeOrder {
    /// Resample the display-referred input.
    Before,
    /// Resample in the linear domain, after the color stages are undone.
    After,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ColorFormat {
    Ppm,
    Png,
    Png16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricKind {
    Mse,
    Psnr,
    Mssim,
    Frechet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Theory,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(h)?, parse(w)?))
}

fn parse_noise(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected SIGMA,SCALE, got {s:?}"))?;
    let parse = |v: &str| match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() && x >= 0.0 => Ok(x),
        _ => Err(format!("{v:?} is not a finite non-negative number")),
    };
    Ok((parse(a)?, parse(b)?))
}

fn parse_jobs(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("{s:?} is not a positive integer")),
    }
}

#[derive(Debug, Args)]
pub struct ToRawArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline JSON; reversed to synthesize the RAW data.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub pattern: CfaLayout,
    #[arg(long = "bit-depth", value_parser = clap::value_parser!(u8).range(8..=16))]
    pub bit_depth: u8,
    /// Output size HxW; both sides must be even.
    #[arg(long, value_parser = parse_size)]
    pub size: Option<(usize, usize)>,
    #[arg(long = "resize-order", value_enum, default_value = "before")]
    pub resize_order: ResizeOrder,
    #[arg(long = "resize-filter", default_value = "box")]
    pub resize_filter: ResizeFilter,
    /// Gaussian sigma and signal-dependent scale, in DN.
    #[arg(long, value_parser = parse_noise, value_name = "SIGMA,SCALE")]
    pub noise: Option<(f64, f64)>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_jobs, default_value_t = default_jobs())]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct DevelopArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value = "png")]
    pub format: ColorFormat,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_jobs, default_value_t = default_jobs())]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// MSE and PSNR are always reported; they feed AVE_PSNR.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mse,psnr,mssim")]
    pub metrics: Vec<MetricKind>,
    /// Two feature-vector files, reference first.
    #[arg(long = "frechet-stats", num_args = 2, value_names = ["A", "B"])]
    pub frechet_stats: Option<Vec<PathBuf>>,
    /// Peak code `2^b - 1` for PSNR and MSSIM. Defaults to 8 for color and
    /// to the sidecar bit depth for RAW.
    #[arg(long = "bit-depth", value_parser = clap::value_parser!(u8).range(8..=16))]
    pub bit_depth: Option<u8>,
    #[arg(long, value_parser = parse_jobs, default_value_t = default_jobs())]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct IoArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MosaicArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long, default_value = "rggb")]
    pub pattern: CfaLayout,
    #[arg(long = "bit-depth", default_value_t = 8, value_parser = clap::value_parser!(u8).range(8..=16))]
    pub bit_depth: u8,
}

#[derive(Debug, Args)]
pub struct DemosaicArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long, default_value = "bilinear")]
    pub alg: DemosaicAlgorithm,
    /// Defaults to ppm for a `.ppm` output and png16 otherwise.
    #[arg(long, value_enum)]
    pub format: Option<ColorFormat>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::ToRaw(a) => batch::to_raw(&a),
        Command::Develop(a) => batch::develop(&a),
        Command::Metrics(a) => compare::metrics(&a),
        Command::Verify(a) => compare::verify(&a),
        Command::Mosaic(a) => single::mosaic(&a),
        Command::Demosaic(a) => single::demosaic(&a),
        Command::Pack(a) => single::pack(&a),
        Command::Unpack(a) => single::unpack(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{:#}", e.source);
            ExitCode::from(e.code)
        }
    }
}
