//! Closed-form latent attention over patches.
//!
//! Training has two regression stages, both solved in closed form:
//!
//! 1. value maps: for every ordered pair `(m, n)` a linear map `W_mn`
//!    predicting latent patch `m` from latent patch `n`, by ridge least
//!    squares over the training snapshots;
//! 2. attention: for every pair an affine functional `w_mn . z_n + b_mn`
//!    regressing the per-snapshot negative log prediction error of stage 1.
//!
//! At inference each target row `m` mixes the pair-wise predictions
//! `W_mn z_n` from the observed patches with a softmax over those logits.
//! Masked sources and the target itself get logit `-inf`, hence exactly
//! zero weight.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{cholesky, shifted};
use crate::par;
use crate::patchgrid::{patchify, PatchGrid, SnapshotSet};
use crate::patchpod::{LatentSeries, PatchPodModel};
use crate::{LampError, Result};

/// Finite intercept stored for self pairs. Self pairs are never attended
/// to at inference; the value only has to be finite.
pub const SELF_LOGIT: f64 = 1.0e6;

pub const DEFAULT_ERROR_FLOOR: f64 = 1e-12;

/// Regularization of the normal equations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ridge {
    /// `lambda = factor * trace(Z_n Z_n^T) / N_e`, per source patch.
    Relative(f64),
    /// The same absolute `lambda` for every source patch.
    Fixed(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-8)
    }
}

impl Ridge {
    pub fn lambda(&self, gram: &DMatrix<f64>) -> f64 {
        match *self {
            Ridge::Fixed(l) => l,
            Ridge::Relative(factor) => {
                let dim = gram.nrows().max(1) as f64;
                let scaled = factor * gram.trace() / dim;
                // An all-zero source leaves nothing to scale by; any positive
                // shift yields the same (zero) solution.
                if scaled > 0.0 {
                    scaled
                } else {
                    factor
                }
            }
        }
    }

    /// Single-float encoding used by the model file: a nonnegative value is
    /// a fixed lambda, a negative value (including `-0.0`) a relative factor.
    pub fn to_f64(self) -> f64 {
        match self {
            Ridge::Fixed(l) => l,
            Ridge::Relative(f) => -f,
        }
    }

    pub fn from_f64(v: f64) -> Result<Self> {
        if !v.is_finite() {
            return Err(LampError::invalid(format!("ridge value {v} is not finite")));
        }
        Ok(if v.is_sign_negative() { Ridge::Relative(-v) } else { Ridge::Fixed(v) })
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            Ridge::Fixed(l) | Ridge::Relative(l) => l,
        };
        if !v.is_finite() || v < 0.0 {
            return Err(LampError::invalid(format!("ridge parameter must be finite and >= 0, got {v}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    pub ridge: Ridge,
    /// Lower clamp applied to pair errors before taking the log.
    pub error_floor: f64,
    /// Fit an intercept in the attention regression. Without it the
    /// log-error model is purely linear in the source latent.
    pub intercept: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { ridge: Ridge::default(), error_floor: DEFAULT_ERROR_FLOOR, intercept: true }
    }
}

impl TrainOptions {
    fn validate(&self) -> Result<()> {
        self.ridge.validate()?;
        if !(self.error_floor > 0.0) || !self.error_floor.is_finite() {
            return Err(LampError::invalid(format!("error floor must be positive, got {}", self.error_floor)));
        }
        Ok(())
    }
}

/// Factored normal equations of one source patch, shared by every target.
struct SourceSystem {
    z: DMatrix<f64>,
    lambda: f64,
    chol: Cholesky<f64, Dyn>,
    /// Mean of `z` over time and the factored centered system, when an
    /// intercept is fitted.
    centered: Option<(DVector<f64>, Cholesky<f64, Dyn>)>,
}

impl SourceSystem {
    fn new(n: usize, z: DMatrix<f64>, ridge: Ridge, intercept: bool) -> Result<Self> {
        let gram = &z * z.transpose();
        let lambda = ridge.lambda(&gram);
        let singular = |what: &str| {
            if lambda == 0.0 {
                LampError::invalid(format!(
                    "singular {what} normal matrix for source patch {n}; use a positive ridge lambda"
                ))
            } else {
                LampError::numerical(format!("{what} normal matrix for source patch {n} is not positive definite"))
            }
        };
        let chol = cholesky(shifted(&gram, lambda)).ok_or_else(|| singular("value"))?;
        let centered = if intercept {
            let t = z.ncols() as f64;
            let mean = z.column_sum() / t;
            let mut zc = z.clone();
            for mut col in zc.column_iter_mut() {
                col -= &mean;
            }
            let cgram = &zc * zc.transpose();
            let c = cholesky(shifted(&cgram, lambda)).ok_or_else(|| singular("attention"))?;
            Some((mean, c))
        } else {
            None
        };
        Ok(SourceSystem { z, lambda, chol, centered })
    }

    /// `W = (Z_m Z_n^T)(Z_n Z_n^T + lambda I)^-1` and the per-snapshot
    /// squared errors `||z_m(t) - W z_n(t)||^2`.
    fn value_pair(&self, target: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
        let cross = target * self.z.transpose();
        let w = self.chol.solve(&cross.transpose()).transpose();
        let residual = target - &w * &self.z;
        let errors = residual.column_iter().map(|c| c.norm_squared()).collect();
        (w, errors)
    }

    /// Ridge fit of `-log(max(err, floor)) ~ w . z_n + b`.
    fn attention_pair(&self, errors: &[f64], floor: f64) -> (DVector<f64>, f64) {
        let y = DVector::from_iterator(errors.len(), errors.iter().map(|e| -e.max(floor).ln()));
        match &self.centered {
            Some((mean, chol)) => {
                let y_mean = y.mean();
                let mut rhs = DVector::zeros(self.z.nrows());
                for (col, yt) in self.z.column_iter().zip(y.iter()) {
                    rhs.axpy(yt - y_mean, &(col - mean), 1.0);
                }
                let w = chol.solve(&rhs);
                let b = y_mean - w.dot(mean);
                (w, b)
            }
            None => (self.chol.solve(&(&self.z * y)), 0.0),
        }
    }
}

fn check_training_latent(train: &LatentSeries) -> Result<()> {
    if train.is_empty() || train.patches() == 0 || train.latent_dim() == 0 {
        return Err(LampError::shape("empty training latent series"));
    }
    if train.len() < train.latent_dim() {
        log::warn!(
            "T_train={} < N_e={}: pair regressions are underdetermined and rely on the ridge term",
            train.len(),
            train.latent_dim()
        );
    }
    Ok(())
}

fn source_systems(train: &LatentSeries, ridge: Ridge, intercept: bool) -> Result<Vec<SourceSystem>> {
    par::try_map_range(train.patches(), |n| SourceSystem::new(n, train.trajectory(n), ridge, intercept))
}

/// Stage-one fit: all value maps and per-snapshot pair errors.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueFit {
    /// `N x N` grid of `N_e x N_e` row-major blocks, block `(m, n)` at
    /// offset `(m * N + n) * N_e^2`.
    pub value_maps: Vec<f64>,
    /// `pair_errors[(m * N + n) * T + t]`.
    pub pair_errors: Vec<f64>,
    /// Effective ridge of every source patch.
    pub lambdas: Vec<f64>,
}

pub fn fit_value_tensor(train: &LatentSeries, ridge: Ridge) -> Result<ValueFit> {
    ridge.validate()?;
    check_training_latent(train)?;
    let (n_p, ne, t) = (train.patches(), train.latent_dim(), train.len());
    let systems = source_systems(train, ridge, false)?;
    let trajectories: Vec<DMatrix<f64>> = (0..n_p).map(|m| train.trajectory(m)).collect();
    let rows = par::map_range(n_p, |m| {
        (0..n_p)
            .map(|n| {
                if m == n {
                    (DMatrix::identity(ne, ne), vec![0.0; t])
                } else {
                    systems[n].value_pair(&trajectories[m])
                }
            })
            .collect::<Vec<_>>()
    });
    let mut value_maps = Vec::with_capacity(n_p * n_p * ne * ne);
    let mut pair_errors = Vec::with_capacity(n_p * n_p * t);
    for (w, errors) in rows.into_iter().flatten() {
        value_maps.extend(w.transpose().iter());
        pair_errors.extend(errors);
    }
    Ok(ValueFit { value_maps, pair_errors, lambdas: systems.iter().map(|s| s.lambda).collect() })
}

/// Stage-two fit: attention vectors and intercepts.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionFit {
    /// `vectors[(m * N + n) * N_e + e]`.
    pub vectors: Vec<f64>,
    pub intercepts: Vec<f64>,
}

pub fn fit_attention_tensor(
    train: &LatentSeries,
    pair_errors: &[f64],
    ridge: Ridge,
    error_floor: f64,
    intercept: bool,
) -> Result<AttentionFit> {
    TrainOptions { ridge, error_floor, intercept }.validate()?;
    check_training_latent(train)?;
    let (n_p, ne, t) = (train.patches(), train.latent_dim(), train.len());
    if pair_errors.len() != n_p * n_p * t {
        return Err(LampError::shape(format!("{} pair errors, expected N*N*T = {}", pair_errors.len(), n_p * n_p * t)));
    }
    let systems = source_systems(train, ridge, intercept)?;
    let cells = par::map_range(n_p * n_p, |idx| {
        let (m, n) = (idx / n_p, idx % n_p);
        if m == n {
            (DVector::zeros(ne), SELF_LOGIT)
        } else {
            systems[n].attention_pair(&pair_errors[idx * t..(idx + 1) * t], error_floor)
        }
    });
    let mut vectors = Vec::with_capacity(n_p * n_p * ne);
    let mut intercepts = Vec::with_capacity(n_p * n_p);
    for (w, b) in cells {
        vectors.extend(w.iter());
        intercepts.push(b);
    }
    Ok(AttentionFit { vectors, intercepts })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionModel {
    pod: PatchPodModel,
    value_maps: Vec<f64>,
    attn_vectors: Vec<f64>,
    attn_intercepts: Vec<f64>,
    /// Mean over training snapshots of the pair prediction error.
    pair_losses: Vec<f64>,
    options: TrainOptions,
}

impl AttentionModel {
    /// Fits both stages on `train_latent`, which must be the POD encoding
    /// of the training data under `pod`.
    ///
    /// Pairs are processed one source patch at a time so the `N^2 T`
    /// per-snapshot errors are never held in memory together.
    pub fn fit(pod: PatchPodModel, train_latent: &LatentSeries, options: TrainOptions) -> Result<Self> {
        options.validate()?;
        check_training_latent(train_latent)?;
        let (n_p, ne) = (pod.grid().n_patches(), pod.latent_dim());
        if train_latent.patches() != n_p || train_latent.latent_dim() != ne {
            return Err(LampError::shape("training latents do not match the POD model"));
        }
        let trajectories: Vec<DMatrix<f64>> = (0..n_p).map(|m| train_latent.trajectory(m)).collect();
        let columns = par::try_map_range(n_p, |n| {
            let system = SourceSystem::new(n, trajectories[n].clone(), options.ridge, options.intercept)?;
            Ok((0..n_p)
                .map(|m| {
                    if m == n {
                        (DMatrix::identity(ne, ne), DVector::zeros(ne), SELF_LOGIT, 0.0)
                    } else {
                        let (w, errors) = system.value_pair(&trajectories[m]);
                        let (a, b) = system.attention_pair(&errors, options.error_floor);
                        let loss = errors.iter().sum::<f64>() / errors.len() as f64;
                        (w, a, b, loss)
                    }
                })
                .collect::<Vec<_>>())
        })?;
        let mut value_maps = vec![0.0; n_p * n_p * ne * ne];
        let mut attn_vectors = vec![0.0; n_p * n_p * ne];
        let mut attn_intercepts = vec![0.0; n_p * n_p];
        let mut pair_losses = vec![0.0; n_p * n_p];
        for (n, column) in columns.into_iter().enumerate() {
            for (m, (w, a, b, loss)) in column.into_iter().enumerate() {
                let idx = m * n_p + n;
                for (dst, src) in value_maps[idx * ne * ne..(idx + 1) * ne * ne].iter_mut().zip(w.transpose().iter()) {
                    *dst = *src;
                }
                attn_vectors[idx * ne..(idx + 1) * ne].copy_from_slice(a.as_slice());
                attn_intercepts[idx] = b;
                pair_losses[idx] = loss;
            }
        }
        let model = AttentionModel { pod, value_maps, attn_vectors, attn_intercepts, pair_losses, options };
        model.check_finite()?;
        Ok(model)
    }

    /// Patch-wise POD followed by both regression stages on a training set
    /// (normally standardized).
    pub fn train(train: &SnapshotSet, patch_size: usize, latent_dim: usize, options: TrainOptions) -> Result<Self> {
        let patched = patchify(train, patch_size)?;
        let pod = PatchPodModel::fit(&patched, latent_dim)?;
        let latent = pod.encode(&patched)?;
        Self::fit(pod, &latent, options)
    }

    /// Assembles a model from stored arrays (used by the model file reader).
    pub fn from_parts(
        pod: PatchPodModel,
        value_maps: Vec<f64>,
        attn_vectors: Vec<f64>,
        attn_intercepts: Vec<f64>,
        pair_losses: Vec<f64>,
        options: TrainOptions,
    ) -> Result<Self> {
        let (n_p, ne) = (pod.grid().n_patches(), pod.latent_dim());
        let pairs = n_p * n_p;
        if value_maps.len() != pairs * ne * ne
            || attn_vectors.len() != pairs * ne
            || attn_intercepts.len() != pairs
            || pair_losses.len() != pairs
        {
            return Err(LampError::shape("attention model arrays do not match N and N_e"));
        }
        let model = AttentionModel { pod, value_maps, attn_vectors, attn_intercepts, pair_losses, options };
        model.check_finite()?;
        Ok(model)
    }

    fn check_finite(&self) -> Result<()> {
        let all =
            self.value_maps.iter().chain(&self.attn_vectors).chain(&self.attn_intercepts).chain(&self.pair_losses);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(LampError::numerical("attention model has non-finite entries"));
        }
        Ok(())
    }

    pub fn pod(&self) -> &PatchPodModel {
        &self.pod
    }

    pub fn grid(&self) -> &PatchGrid {
        self.pod.grid()
    }

    pub fn n_patches(&self) -> usize {
        self.pod.grid().n_patches()
    }

    pub fn latent_dim(&self) -> usize {
        self.pod.latent_dim()
    }

    pub fn options(&self) -> &TrainOptions {
        &self.options
    }

    /// `W_mn`, row-major `N_e x N_e`.
    pub fn value_map(&self, m: usize, n: usize) -> &[f64] {
        let ne2 = self.latent_dim() * self.latent_dim();
        let idx = m * self.n_patches() + n;
        &self.value_maps[idx * ne2..(idx + 1) * ne2]
    }

    pub fn attn_vector(&self, m: usize, n: usize) -> &[f64] {
        let ne = self.latent_dim();
        let idx = m * self.n_patches() + n;
        &self.attn_vectors[idx * ne..(idx + 1) * ne]
    }

    pub fn attn_intercept(&self, m: usize, n: usize) -> f64 {
        self.attn_intercepts[m * self.n_patches() + n]
    }

    /// Mean training error of predicting patch `m` from patch `n`.
    pub fn pair_loss(&self, m: usize, n: usize) -> f64 {
        self.pair_losses[m * self.n_patches() + n]
    }

    pub fn value_maps(&self) -> &[f64] {
        &self.value_maps
    }

    pub fn attn_vectors(&self) -> &[f64] {
        &self.attn_vectors
    }

    pub fn attn_intercepts(&self) -> &[f64] {
        &self.attn_intercepts
    }

    pub fn pair_losses(&self) -> &[f64] {
        &self.pair_losses
    }

    /// Dense storage the model needs, in bytes.
    pub fn storage_bytes(grid: &PatchGrid, latent_dim: usize) -> u128 {
        let (n, d, ne) = (grid.n_patches() as u128, grid.dim() as u128, latent_dim as u128);
        8 * (n * d * ne + n * ne + n * n * ne * ne + n * n * ne + 2 * n * n)
    }
}

/// Set of observed (unmasked) patches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSpec {
    unmasked: Vec<usize>,
    n_patches: usize,
    seed: Option<u64>,
}

impl MaskSpec {
    pub fn new(mut unmasked: Vec<usize>, n_patches: usize) -> Result<Self> {
        unmasked.sort_unstable();
        if unmasked.windows(2).any(|w| w[0] == w[1]) {
            return Err(LampError::invalid("duplicate unmasked patch index"));
        }
        if let Some(&last) = unmasked.last() {
            if last >= n_patches {
                return Err(LampError::invalid(format!("patch index {last} out of range for N={n_patches}")));
            }
        }
        Ok(MaskSpec { unmasked, n_patches, seed: None })
    }

    /// Every patch observed.
    pub fn full(n_patches: usize) -> Self {
        MaskSpec { unmasked: (0..n_patches).collect(), n_patches, seed: None }
    }

    /// `k` distinct patches drawn uniformly with a seeded generator.
    pub fn random(n_patches: usize, k: usize, seed: u64) -> Result<Self> {
        if k > n_patches {
            return Err(LampError::invalid(format!("cannot unmask {k} of {n_patches} patches")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked = rand::seq::index::sample(&mut rng, n_patches, k).into_vec();
        let mut mask = MaskSpec::new(picked, n_patches)?;
        mask.seed = Some(seed);
        Ok(mask)
    }

    /// Number of unmasked patches for a coverage fraction: `round(c * N)`,
    /// clamped to `[1, N]`.
    pub fn count_for_coverage(n_patches: usize, coverage: f64) -> Result<usize> {
        if !(coverage > 0.0 && coverage <= 1.0) {
            return Err(LampError::invalid(format!("coverage must lie in (0, 1], got {coverage}")));
        }
        Ok(((coverage * n_patches as f64).round() as usize).clamp(1, n_patches))
    }

    pub fn unmasked(&self) -> &[usize] {
        &self.unmasked
    }

    pub fn n_patches(&self) -> usize {
        self.n_patches
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn coverage(&self) -> f64 {
        self.unmasked.len() as f64 / self.n_patches as f64
    }

    pub fn is_unmasked(&self, n: usize) -> bool {
        self.unmasked.binary_search(&n).is_ok()
    }
}

/// Latent snapshot (`N x N_e`, row-major) whose masked rows are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedLatentSnapshot {
    values: Vec<f64>,
    latent_dim: usize,
    mask: MaskSpec,
}

impl MaskedLatentSnapshot {
    /// Zeroes the masked rows of `values`.
    pub fn new(mut values: Vec<f64>, latent_dim: usize, mask: MaskSpec) -> Result<Self> {
        if values.len() != mask.n_patches() * latent_dim {
            return Err(LampError::shape(format!(
                "{} latent values for N={} N_e={latent_dim}",
                values.len(),
                mask.n_patches()
            )));
        }
        for (n, row) in values.chunks_mut(latent_dim.max(1)).enumerate() {
            if !mask.is_unmasked(n) {
                row.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok(MaskedLatentSnapshot { values, latent_dim, mask })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &MaskSpec {
        &self.mask
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.latent_dim..(n + 1) * self.latent_dim]
    }
}

/// Numerically stable softmax. `-inf` entries get exactly zero weight.
pub fn softmax_row(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(LampError::numerical("softmax logits contain NaN or +inf"));
    }
    let max = logits
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .ok_or_else(|| LampError::invalid("softmax row has no finite entry"))?;
    let mut weights: Vec<f64> =
        logits.iter().map(|&v| if v == f64::NEG_INFINITY { 0.0 } else { (v - max).exp() }).collect();
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok(weights)
}

/// Predicts the full latent snapshot from a masked one.
///
/// For target `m` the logits are `w_mn . z_n + b_mn` over unmasked sources
/// `n != m` and `-inf` otherwise; the prediction is the softmax-weighted sum
/// of `W_mn z_n`. With `copy_through`, observed rows are returned as given.
/// An unmasked target with no other observed patch keeps its own latent.
pub fn predict_masked(model: &AttentionModel, input: &MaskedLatentSnapshot, copy_through: bool) -> Result<Vec<f64>> {
    let (n_p, ne) = (model.n_patches(), model.latent_dim());
    let mask = input.mask();
    if mask.n_patches() != n_p || input.latent_dim != ne {
        return Err(LampError::shape(format!(
            "masked snapshot has N={} N_e={}, model N={n_p} N_e={ne}",
            mask.n_patches(),
            input.latent_dim
        )));
    }
    if mask.unmasked().is_empty() {
        return Err(LampError::invalid("every patch is masked; at least one observation is required"));
    }
    let mut out = vec![0.0; n_p * ne];
    let mut logits = vec![f64::NEG_INFINITY; n_p];
    for m in 0..n_p {
        let row = &mut out[m * ne..(m + 1) * ne];
        if copy_through && mask.is_unmasked(m) {
            row.copy_from_slice(input.row(m));
            continue;
        }
        logits.iter_mut().for_each(|l| *l = f64::NEG_INFINITY);
        let mut candidates = 0;
        for &n in mask.unmasked() {
            if n == m {
                continue;
            }
            let z = input.row(n);
            let a: f64 =
                model.attn_vector(m, n).iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + model.attn_intercept(m, n);
            if !a.is_finite() {
                return Err(LampError::numerical(format!("non-finite attention logit for pair ({m}, {n})")));
            }
            logits[n] = a;
            candidates += 1;
        }
        if candidates == 0 {
            // m is the only observed patch
            row.copy_from_slice(input.row(m));
            continue;
        }
        let weights = softmax_row(&logits)?;
        for &n in mask.unmasked() {
            let weight = weights[n];
            if weight == 0.0 {
                continue;
            }
            let z = input.row(n);
            for (e, map_row) in model.value_map(m, n).chunks(ne).enumerate() {
                row[e] += weight * map_row.iter().zip(z).map(|(w, v)| w * v).sum::<f64>();
            }
        }
    }
    Ok(out)
}

/// Field-level masked reconstruction.
///
/// Raw input is standardized with the model's statistics first. Masked
/// patches are never read. The output is in standardized units.
pub fn reconstruct(
    model: &AttentionModel,
    field: &SnapshotSet,
    mask: &MaskSpec,
    copy_through: bool,
) -> Result<SnapshotSet> {
    let grid = *model.grid();
    if field.height() != grid.height() || field.width() != grid.width() || field.components() != grid.components() {
        return Err(LampError::shape(format!(
            "field {}x{}x{} does not match model grid {}x{}x{}",
            field.height(),
            field.width(),
            field.components(),
            grid.height(),
            grid.width(),
            grid.components()
        )));
    }
    if mask.n_patches() != grid.n_patches() {
        return Err(LampError::shape(format!(
            "mask covers {} patches, model has {}",
            mask.n_patches(),
            grid.n_patches()
        )));
    }
    if mask.unmasked().is_empty() {
        return Err(LampError::invalid("every patch is masked; at least one observation is required"));
    }
    let stats = model.pod().norm_stats();
    let input = field.normalized_with(stats)?;
    let (ne, d) = (model.latent_dim(), grid.dim());
    let frames = par::try_map_range(input.len(), |t| {
        let frame = input.snapshot(t);
        let mut latent = vec![0.0; grid.n_patches() * ne];
        let mut patch = Vec::with_capacity(d);
        for &n in mask.unmasked() {
            patch.clear();
            patch.extend(grid.frame_offsets(n).map(|i| frame[i]));
            latent[n * ne..(n + 1) * ne].copy_from_slice(&model.pod().encode_patch(n, &patch));
        }
        let masked = MaskedLatentSnapshot::new(latent, ne, mask.clone())?;
        let predicted = predict_masked(model, &masked, copy_through)?;
        let mut out = vec![0.0; frame.len()];
        let mut buf = vec![0.0; d];
        for n in 0..grid.n_patches() {
            model.pod().decode_patch_into(n, &predicted[n * ne..(n + 1) * ne], &mut buf);
            for (offset, v) in grid.frame_offsets(n).zip(&buf) {
                out[offset] = *v;
            }
        }
        Ok(out)
    })?;
    SnapshotSet::new(grid.height(), grid.width(), grid.components(), input.len(), frames.concat())?
        .with_norm(stats.clone())
}
