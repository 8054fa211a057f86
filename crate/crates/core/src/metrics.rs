//! Losses, predictive-power maps, sensor placement and parameter sweeps.

use std::fmt::Write as _;

use crate::datagen::{add_noise, derive_seed, noise_variance, signal_power, NoiseSpec};
use crate::latentattn::{reconstruct, AttentionModel, MaskSpec, TrainOptions};
use crate::par;
use crate::patchgrid::{normalize, patchify, PatchGrid, SnapshotSet, SplitSpec};
use crate::patchpod::PatchPodModel;
use crate::{LampError, Result};

/// Mean squared error per element in standardized units.
///
/// If exactly one side is standardized, the other is standardized with the
/// same statistics before comparing.
pub fn pred_loss(reconstruction: &SnapshotSet, truth: &SnapshotSet) -> Result<f64> {
    if !reconstruction.same_geometry(truth) || reconstruction.len() != truth.len() {
        return Err(LampError::shape(format!(
            "reconstruction {}x{}x{}x{} vs truth {}x{}x{}x{}",
            reconstruction.len(),
            reconstruction.height(),
            reconstruction.width(),
            reconstruction.components(),
            truth.len(),
            truth.height(),
            truth.width(),
            truth.components()
        )));
    }
    let (a, b) = match (reconstruction.norm_stats(), truth.norm_stats()) {
        (Some(sa), Some(sb)) if sa != sb => {
            return Err(LampError::invalid("reconstruction and truth use different normalizations"))
        }
        (Some(s), None) => (reconstruction.clone(), truth.apply_norm(s)?),
        (None, Some(s)) => (reconstruction.apply_norm(s)?, truth.clone()),
        _ => (reconstruction.clone(), truth.clone()),
    };
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data().len() as f64)
}

/// Per-patch predictive power reshaped on the patch grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl PowerMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols || values.is_empty() {
            return Err(LampError::shape(format!("{} power values for a {rows}x{cols} grid", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LampError::numerical("non-finite predictive power"));
        }
        Ok(PowerMap { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `power(n) = mean over m != n of -log(max(L_mn, floor))`, using the mean
/// training pair losses stored in the model.
pub fn predictive_power(model: &AttentionModel) -> PowerMap {
    let n_p = model.n_patches();
    let floor = model.options().error_floor;
    let values = (0..n_p)
        .map(|n| {
            if n_p == 1 {
                return 0.0;
            }
            let sum: f64 = (0..n_p).filter(|&m| m != n).map(|m| -model.pair_loss(m, n).max(floor).ln()).sum();
            sum / (n_p - 1) as f64
        })
        .collect();
    let grid = model.grid();
    PowerMap { rows: grid.rows(), cols: grid.cols(), values }
}

/// The `k` patches of highest power; ties go to the lower patch index.
pub fn place_sensors(map: &PowerMap, k: usize) -> Result<MaskSpec> {
    let n = map.values.len();
    if k == 0 || k > n {
        return Err(LampError::invalid(format!("sensor count {k} must lie in [1, {n}]")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| map.values[b].total_cmp(&map.values[a]).then(a.cmp(&b)));
    order.truncate(k);
    MaskSpec::new(order, n)
}

/// Median (mean of the two central values for even counts).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub split: SplitSpec,
    pub patch_sizes: Vec<usize>,
    pub latent_dims: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub coverages: Vec<f64>,
    pub n_arrangements: usize,
    pub seed: u64,
    pub options: TrainOptions,
    pub copy_through: bool,
    /// Cells whose model would exceed this many bytes are skipped.
    pub budget_bytes: Option<u128>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            split: SplitSpec::default(),
            patch_sizes: vec![16],
            latent_dims: vec![8],
            snr_db: vec![f64::INFINITY],
            coverages: vec![0.1],
            n_arrangements: 25,
            seed: 0,
            options: TrainOptions::default(),
            copy_through: true,
            budget_bytes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub patch_size: usize,
    pub latent_dim: usize,
    pub snr_db: f64,
    pub coverage: f64,
    pub median_pred_loss: f64,
    /// Autoencoding loss on the test block, the floor of `pred_loss`.
    pub ae_loss: f64,
    /// Median over arrangements of the noise variance in standardized units.
    pub noise_variance: f64,
    pub n_arrangements: usize,
    /// Base seed of the cell; arrangement `a` draws its mask with
    /// `derive_seed(seed ^ coverage.to_bits(), a)`.
    pub seed: u64,
    pub pred_losses: Vec<f64>,
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub n_arrangements: usize,
    pub cells: Vec<SweepCell>,
}

const NOISE_STREAM: u64 = 0x006e_6f69_7365;

impl SweepResult {
    pub const CSV_HEADER: &'static str =
        "P,N_e,snr_db,coverage,median_pred_loss,ae_loss,noise_variance,n_arrangements,seed";

    pub fn cell(&self, patch_size: usize, latent_dim: usize, snr_db: f64, coverage: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| {
            c.patch_size == patch_size && c.latent_dim == latent_dim && c.snr_db == snr_db && c.coverage == coverage
        })
    }

    /// One row per cell; skipped cells carry `NaN` losses.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{:e},{:e},{:e},{},{}",
                c.patch_size,
                c.latent_dim,
                c.snr_db,
                c.coverage,
                c.median_pred_loss,
                c.ae_loss,
                c.noise_variance,
                c.n_arrangements,
                c.seed
            );
        }
        out
    }
}

/// Trains one model per `(P, N_e)` on the train block and evaluates the
/// median masked-reconstruction loss on the test block over random mask
/// arrangements, for every SNR and coverage.
///
/// Masks depend only on `(seed, P, coverage, arrangement)`, so cells that
/// differ only in `N_e` or SNR see the same masks; noise draws depend only on
/// the mask seed, so SNR levels differ only by scale.
pub fn run_sweep(dataset: &SnapshotSet, config: &SweepConfig) -> Result<SweepResult> {
    if config.n_arrangements == 0 {
        return Err(LampError::invalid("at least one mask arrangement is required"));
    }
    let (train_range, test_range) = config.split.ranges(dataset.len())?;
    let normalized = normalize(dataset, train_range.clone())?;
    let stats = normalized.norm_stats().cloned().expect("normalize attaches stats");
    let train = normalized.slice(train_range)?;
    let test = normalized.slice(test_range.clone())?;
    let test_raw = dataset.slice(test_range)?;
    let inv_var: f64 = stats.std.iter().map(|s| 1.0 / (s * s)).sum::<f64>() / stats.std.len() as f64;

    let mut cells = Vec::new();
    let skip = |cells: &mut Vec<SweepCell>, p: usize, ne: usize, reason: String| {
        for &snr in &config.snr_db {
            for &coverage in &config.coverages {
                cells.push(SweepCell {
                    patch_size: p,
                    latent_dim: ne,
                    snr_db: snr,
                    coverage,
                    median_pred_loss: f64::NAN,
                    ae_loss: f64::NAN,
                    noise_variance: f64::NAN,
                    n_arrangements: config.n_arrangements,
                    seed: derive_seed(config.seed, p as u64),
                    pred_losses: Vec::new(),
                    skipped: Some(reason.clone()),
                });
            }
        }
    };
    for &p in &config.patch_sizes {
        let (patched_train, patched_test) = match (patchify(&train, p), patchify(&test, p)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                for &ne in &config.latent_dims {
                    skip(&mut cells, p, ne, e.to_string());
                }
                continue;
            }
        };
        let grid: PatchGrid = *patched_train.grid();
        let base_seed = derive_seed(config.seed, p as u64);
        for &ne in &config.latent_dims {
            if let Some(budget) = config.budget_bytes {
                let need = AttentionModel::storage_bytes(&grid, ne);
                if need > budget {
                    skip(&mut cells, p, ne, format!("model needs {need} bytes, budget is {budget}"));
                    continue;
                }
            }
            let fitted = PatchPodModel::fit(&patched_train, ne).and_then(|pod| {
                let latent = pod.encode(&patched_train)?;
                let ae = pod.ae_loss(&patched_test)?;
                Ok((AttentionModel::fit(pod, &latent, config.options)?, ae))
            });
            let (model, ae_loss) = match fitted {
                Ok(v) => v,
                Err(e) => {
                    skip(&mut cells, p, ne, e.to_string());
                    continue;
                }
            };
            for &snr in &config.snr_db {
                for &coverage in &config.coverages {
                    let k = MaskSpec::count_for_coverage(grid.n_patches(), coverage)?;
                    let runs = par::try_map_range(config.n_arrangements, |a| {
                        let mask_seed = derive_seed(base_seed ^ coverage.to_bits(), a as u64);
                        let mask = MaskSpec::random(grid.n_patches(), k, mask_seed)?;
                        let noise = NoiseSpec { snr_db: snr, seed: derive_seed(mask_seed, NOISE_STREAM) };
                        let variance = noise_variance(signal_power(&test_raw, &mask, p)?, snr)? * inv_var;
                        let noisy = add_noise(&test_raw, &mask, p, &noise)?;
                        let recon = reconstruct(&model, &noisy, &mask, config.copy_through)?;
                        Ok((pred_loss(&recon, &test)?, variance))
                    })?;
                    let (losses, variances): (Vec<f64>, Vec<f64>) = runs.into_iter().unzip();
                    cells.push(SweepCell {
                        patch_size: p,
                        latent_dim: ne,
                        snr_db: snr,
                        coverage,
                        median_pred_loss: median(&losses),
                        ae_loss,
                        noise_variance: median(&variances),
                        n_arrangements: config.n_arrangements,
                        seed: base_seed,
                        pred_losses: losses,
                        skipped: None,
                    });
                }
            }
        }
    }
    Ok(SweepResult { n_arrangements: config.n_arrangements, cells })
}
