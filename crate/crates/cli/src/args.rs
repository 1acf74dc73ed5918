//! Command-line grammar. Every argument struct is also serializable so a run
//! manifest can echo it and `replay` can re-execute it.

use std::path::PathBuf;
use std::str::FromStr;

use akcs_core::blocks::CheckDims;
use akcs_core::coherence::CellDims;
use akcs_core::ista::StepSize;
use akcs_core::Scheme;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "akcs",
    version,
    about = "Kronecker / asymmetric-Kronecker compressive sensing laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Measure an image with a seeded Gaussian operator.
    Sense(SenseArgs),
    /// Reconstruct an image from a measurement blob.
    Reconstruct(ReconstructArgs),
    /// Monte Carlo coherence study over a dimension grid.
    Coherence(CoherenceArgs),
    /// Audit the denoiser-block invariants.
    BlocksCheck(BlocksCheckArgs),
    /// Compare schemes over images and sampling ratios.
    Bench(BenchArgs),
    /// Re-run a command from its manifest into a new output location.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sense(_) => "sense",
            Command::Reconstruct(_) => "reconstruct",
            Command::Coherence(_) => "coherence",
            Command::BlocksCheck(_) => "blocks-check",
            Command::Bench(_) => "bench",
            Command::Replay(_) => "replay",
        }
    }
}

fn parse_list<const N: usize>(s: &str, what: &str) -> Result<[usize; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("{what} needs {N} comma-separated integers, got '{s}'"));
    }
    let mut out = [0; N];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p
            .parse()
            .map_err(|_| format!("'{p}' in {what} is not a non-negative integer"))?;
    }
    Ok(out)
}

/// `H,W,K`: a synthetic `H x W` image with `K` nonzero DCT coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    pub sparsity: usize,
}

impl FromStr for SyntheticSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let [height, width, sparsity] = parse_list::<3>(s, "--synthetic")?;
        Ok(Self {
            height,
            width,
            sparsity,
        })
    }
}

/// `m,n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementShape {
    pub m: usize,
    pub n: usize,
}

impl FromStr for MeasurementShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let [m, n] = parse_list::<2>(s, "--mn")?;
        Ok(Self { m, n })
    }
}

/// `m,n,H,W;m,n,H,W;...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Grid(pub Vec<CellDims>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let cells = s
            .split(';')
            .filter(|c| !c.trim().is_empty())
            .map(|c| parse_list::<4>(c, "--grid cell").map(|[m, n, h, w]| CellDims::new(m, n, h, w)))
            .collect::<Result<Vec<_>, _>>()?;
        if cells.is_empty() {
            return Err("--grid needs at least one m,n,H,W cell".into());
        }
        Ok(Grid(cells))
    }
}

pub fn parse_check_dims(s: &str) -> Result<CheckDims, String> {
    let [height, width, channels, downsample, heads] = parse_list::<5>(s, "--dims")?;
    Ok(CheckDims {
        height,
        width,
        channels,
        downsample,
        heads,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenoiserArg {
    Identity,
    Dct,
    Toy,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct SenseArgs {
    /// Input image (binary PGM).
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    pub image: Option<PathBuf>,
    /// Generate a DCT-sparse image `H,W,K` instead of reading one.
    #[arg(long)]
    pub synthetic: Option<SyntheticSpec>,
    /// kcs, akcs or identity.
    #[arg(long)]
    pub scheme: Scheme,
    /// Target sampling ratio; split symmetrically into (m, n).
    #[arg(long, default_value_t = 1.0)]
    pub sr: f64,
    /// Explicit measurement shape, overriding --sr.
    #[arg(long)]
    pub mn: Option<MeasurementShape>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also store the operator matrices as a raw blob.
    #[arg(long)]
    pub operator_blob: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub measurement: PathBuf,
    /// Operator as JSON spec or raw blob.
    #[arg(long)]
    pub operator: PathBuf,
    #[arg(long, value_enum, default_value_t = DenoiserArg::Dct)]
    pub denoiser: DenoiserArg,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    /// Step size, or `auto` for 1/L.
    #[arg(long, default_value = "auto")]
    pub rho: StepSize,
    #[arg(long, default_value_t = 500)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
    /// Seed for the power iteration and the toy denoiser weights.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reference image for PSNR/SSIM.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Per-iteration trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Output PGM; metrics go to `<stem>.manifest.json` beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct CoherenceArgs {
    #[arg(long, default_value = "8,8,16,16")]
    pub grid: Grid,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Constant C_o of the AKCS coherence bound.
    #[arg(long, default_value_t = 1.0)]
    pub co: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct BlocksCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `H,W,C,D,heads`.
    #[arg(long, value_parser = parse_check_dims)]
    pub dims: Option<CheckDims>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    /// Directory of PGM images.
    #[arg(long, required_unless_present = "synthetic")]
    pub images: Option<PathBuf>,
    /// Number of synthetic DCT-sparse images to add.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Side length of the synthetic images.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    /// Nonzero non-DC DCT coefficients per synthetic image.
    #[arg(long, default_value_t = 16)]
    pub sparsity: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.04,0.10,0.25,0.50")]
    pub srs: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "kcs,akcs")]
    pub schemes: Vec<Scheme>,
    /// Operator draws per image and sampling ratio.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DenoiserArg::Dct)]
    pub denoiser: DenoiserArg,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    #[arg(long, default_value = "auto")]
    pub rho: StepSize,
    #[arg(long, default_value_t = 300)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// New output location (directory for sense, file otherwise).
    #[arg(long)]
    pub out: PathBuf,
}
