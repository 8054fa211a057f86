//! Argument types. Every subcommand's arguments are also its manifest
//! record, so the same structs derive both `clap` and `serde`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lamp_core::{Ridge, SplitSpec, TrainOptions};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "lamp", version, about = "Reconstruct flow fields from a few observed patches")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
pub enum Command {
    /// Write a synthetic surrogate flow dataset.
    Generate(GenerateArgs),
    /// Fit patch POD and the attention model on the train block.
    Train(TrainArgs),
    /// Reconstruct the test block from masked (optionally noisy) input.
    Reconstruct(ReconstructArgs),
    /// Median masked-reconstruction loss over a parameter grid.
    Sweep(SweepArgs),
    /// Per-patch predictive power of a trained model.
    PowerMap(PowerMapArgs),
    /// Sensor patches at the highest predictive power.
    PlaceSensors(PlaceSensorsArgs),
    /// Gappy POD reconstruction of the test block.
    Gappy(GappyArgs),
    /// LAMP and gappy POD on identical masks and noise.
    Compare(CompareArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flow {
    Laminar,
    Chaotic,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutArgs {
    /// Directory receiving every output file and `manifest.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "laminar")]
    pub flow: Flow,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 160)]
    pub snapshots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Laminar: number of harmonics (1 to 6).
    #[arg(long, default_value_t = 4)]
    pub harmonics: usize,
    /// Laminar: shedding period in snapshots.
    #[arg(long, default_value_t = 32.0)]
    pub period: f64,
    /// Laminar: streamwise wavelength in pixels.
    #[arg(long, default_value_t = 24.0)]
    pub wavelength: f64,
    /// Laminar: rows at top and bottom held at the free stream.
    #[arg(long, default_value_t = 0)]
    pub inert_border: usize,
    /// Chaotic: number of travelling modes.
    #[arg(long, default_value_t = 40)]
    pub modes: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0.20)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0.05)]
    pub gap_fraction: f64,
}

impl SplitArgs {
    pub fn spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            test_fraction: self.test_fraction,
            gap_fraction: self.gap_fraction,
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionArgs {
    /// Fixed ridge lambda for every source patch. Default: 1e-8 times the
    /// mean latent energy of the source patch.
    #[arg(long)]
    pub ridge_lambda: Option<f64>,
    /// Fit the attention logits without an intercept.
    #[arg(long)]
    pub no_intercept: bool,
}

impl RegressionArgs {
    pub fn options(&self) -> TrainOptions {
        TrainOptions {
            ridge: self.ridge_lambda.map_or(Ridge::default(), Ridge::Fixed),
            intercept: !self.no_intercept,
            ..Default::default()
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub patch_size: usize,
    #[arg(long)]
    pub latent_dim: usize,
    #[command(flatten)]
    pub regression: RegressionArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// Uniformly random patches, one draw per arrangement.
    Random,
    /// Highest predictive power of the model.
    TopPower,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskArgs {
    /// Fraction of patches left unmasked.
    #[arg(long, default_value_t = 0.1)]
    pub coverage: f64,
    #[arg(long, value_enum, default_value = "random")]
    pub placement: Placement,
    /// Place sensors from a `power_map.csv` written by `power-map`.
    #[arg(long)]
    pub sensors_from: Option<PathBuf>,
    /// Random mask draws (random placement only).
    #[arg(long, default_value_t = 1)]
    pub arrangements: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Input signal-to-noise ratio in dB; omit (or `inf`) for clean input.
    #[arg(long, value_parser = parse_snr)]
    pub snr_db: Option<f64>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageArgs {
    /// Test-block snapshot rendered to PPM.
    #[arg(long, default_value_t = 0)]
    pub snapshot: usize,
    /// Velocity component rendered to PPM.
    #[arg(long, default_value_t = 0)]
    pub component: usize,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub mask: MaskArgs,
    #[arg(long)]
    pub no_copy_through: bool,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub image: ImageArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "16")]
    pub patch_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub latent_dims: Vec<usize>,
    /// Comma-separated SNR levels in dB; `inf` is noise-free.
    #[arg(long, value_delimiter = ',', default_value = "inf", value_parser = parse_snr)]
    #[serde(with = "snr_list")]
    pub snr_db: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub coverages: Vec<f64>,
    #[arg(long, default_value_t = 25)]
    pub arrangements: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub regression: RegressionArgs,
    #[arg(long)]
    pub no_copy_through: bool,
    /// Skip cells whose model would exceed this many bytes.
    #[arg(long, default_value_t = 2 << 30)]
    pub budget_bytes: u64,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMapArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceSensorsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub coverage: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GappyArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Patch size of the mask grid.
    #[arg(long)]
    pub patch_size: usize,
    /// Number of global POD modes; defaults to `--latent-dim`.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[command(flatten)]
    pub mask: MaskArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub image: ImageArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Gappy POD modes; defaults to the model's latent dimension so both
    /// methods carry the same number of coefficients per fit.
    #[arg(long)]
    pub rank: Option<usize>,
    #[command(flatten)]
    pub mask: MaskArgs,
    #[arg(long)]
    pub no_copy_through: bool,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub image: ImageArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Accepts a number or `inf` (any case).
pub fn parse_snr(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number or `inf`"))?;
    if v.is_nan() || v == f64::NEG_INFINITY {
        return Err(format!("SNR must be finite or +inf, got {s}"));
    }
    Ok(v)
}

/// JSON has no infinity: noise-free levels are stored as `null`.
mod snr_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| x.is_finite().then_some(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}
