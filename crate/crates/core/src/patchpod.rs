//! Patch-wise proper orthogonal decomposition.
//!
//! Every patch `n` gets its own orthonormal basis `U_n` (`D x N_e`) made of
//! the leading left singular vectors of that patch's training snapshot
//! matrix. Encoding is `z_n = U_n^T x_n` and decoding `x_n ~ U_n z_n`, i.e.
//! block-diagonal encoder and decoder operators.

use nalgebra::DMatrix;

use crate::linalg::leading_left_singular;
use crate::par;
use crate::patchgrid::{NormStats, PatchGrid, PatchedSeries};
use crate::{LampError, Result};

/// `T x N x N_e` latent codes.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSeries {
    snapshots: usize,
    patches: usize,
    latent_dim: usize,
    values: Vec<f64>,
}

impl LatentSeries {
    pub fn new(snapshots: usize, patches: usize, latent_dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != snapshots * patches * latent_dim {
            return Err(LampError::shape(format!(
                "{} latent values for T={snapshots}, N={patches}, N_e={latent_dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LampError::numerical("non-finite latent value"));
        }
        Ok(LatentSeries { snapshots, patches, latent_dim, values })
    }

    pub fn len(&self) -> usize {
        self.snapshots
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots == 0
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Latent code of patch `n` at snapshot `t`.
    pub fn code(&self, t: usize, n: usize) -> &[f64] {
        let start = (t * self.patches + n) * self.latent_dim;
        &self.values[start..start + self.latent_dim]
    }

    /// Whole latent snapshot `t` as an `N x N_e` row-major block.
    pub fn snapshot(&self, t: usize) -> &[f64] {
        let len = self.patches * self.latent_dim;
        &self.values[t * len..(t + 1) * len]
    }

    /// Trajectory of patch `n` as an `N_e x T` matrix (columns are snapshots).
    pub fn trajectory(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.latent_dim, self.snapshots, |e, t| self.code(t, n)[e])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchPodModel {
    grid: PatchGrid,
    latent_dim: usize,
    /// One `D x N_e` orthonormal basis per patch.
    bases: Vec<DMatrix<f64>>,
    singular_values: Vec<Vec<f64>>,
    norm: NormStats,
}

impl PatchPodModel {
    /// Fits the `latent_dim` leading POD modes of every patch.
    pub fn fit(train: &PatchedSeries, latent_dim: usize) -> Result<Self> {
        let grid = *train.grid();
        let (d, t) = (grid.dim(), train.len());
        if latent_dim == 0 || latent_dim > d.min(t) {
            return Err(LampError::invalid(format!(
                "latent dimension {latent_dim} must lie in [1, min(D={d}, T_train={t})]"
            )));
        }
        let fits = par::try_map_range(grid.n_patches(), |n| {
            let x = DMatrix::from_fn(d, t, |i, s| train.patch(s, n)[i]);
            leading_left_singular(&x, latent_dim)
                .map_err(|e| LampError::numerical(format!("POD of patch {n} failed: {e}")))
        })?;
        let (bases, singular_values) = fits.into_iter().unzip();
        let norm = train.norm_stats().cloned().unwrap_or_else(|| NormStats::identity(grid.components()));
        Ok(PatchPodModel { grid, latent_dim, bases, singular_values, norm })
    }

    /// Assembles a model from stored parts (used by the model file reader).
    pub fn from_parts(
        grid: PatchGrid,
        latent_dim: usize,
        bases: Vec<DMatrix<f64>>,
        singular_values: Vec<Vec<f64>>,
        norm: NormStats,
    ) -> Result<Self> {
        let ok = bases.len() == grid.n_patches()
            && singular_values.len() == grid.n_patches()
            && bases.iter().all(|b| b.shape() == (grid.dim(), latent_dim))
            && singular_values.iter().all(|s| s.len() == latent_dim)
            && norm.components() == grid.components();
        if !ok {
            return Err(LampError::shape("POD model parts do not match the grid"));
        }
        Ok(PatchPodModel { grid, latent_dim, bases, singular_values, norm })
    }

    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn basis(&self, n: usize) -> &DMatrix<f64> {
        &self.bases[n]
    }

    pub fn singular_values(&self, n: usize) -> &[f64] {
        &self.singular_values[n]
    }

    /// Standardization the model was trained under.
    pub fn norm_stats(&self) -> &NormStats {
        &self.norm
    }

    /// `U_n^T x`.
    pub fn encode_patch(&self, n: usize, x: &[f64]) -> Vec<f64> {
        self.bases[n].column_iter().map(|col| col.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
    }

    /// `U_n z`, written into `out`.
    pub fn decode_patch_into(&self, n: usize, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (col, &coef) in self.bases[n].column_iter().zip(z) {
            for (o, u) in out.iter_mut().zip(col.iter()) {
                *o += coef * u;
            }
        }
    }

    fn check_grid(&self, grid: &PatchGrid) -> Result<()> {
        if grid != &self.grid {
            return Err(LampError::shape(format!("series grid {grid:?} != model grid {:?}", self.grid)));
        }
        Ok(())
    }

    pub fn encode(&self, series: &PatchedSeries) -> Result<LatentSeries> {
        self.check_grid(series.grid())?;
        let n_patches = self.grid.n_patches();
        let rows = par::map_range(series.len(), |t| {
            (0..n_patches).flat_map(|n| self.encode_patch(n, series.patch(t, n))).collect::<Vec<_>>()
        });
        LatentSeries::new(series.len(), n_patches, self.latent_dim, rows.concat())
    }

    pub fn decode(&self, latent: &LatentSeries) -> Result<PatchedSeries> {
        if latent.patches() != self.grid.n_patches() || latent.latent_dim() != self.latent_dim {
            return Err(LampError::shape(format!(
                "latent N={} N_e={} vs model N={} N_e={}",
                latent.patches(),
                latent.latent_dim(),
                self.grid.n_patches(),
                self.latent_dim
            )));
        }
        let d = self.grid.dim();
        let frames = par::map_range(latent.len(), |t| {
            let mut frame = vec![0.0; self.grid.n_patches() * d];
            for (n, chunk) in frame.chunks_mut(d).enumerate() {
                self.decode_patch_into(n, latent.code(t, n), chunk);
            }
            frame
        });
        Ok(PatchedSeries::new(self.grid, latent.len(), frames.concat())?.with_norm(Some(self.norm.clone())))
    }

    /// Raw autoencoding loss: sum over snapshots and patches of
    /// `||U_n U_n^T x_n - x_n||^2`.
    pub fn ae_loss_sum(&self, data: &PatchedSeries) -> Result<f64> {
        self.check_grid(data.grid())?;
        let d = self.grid.dim();
        let per_snapshot = par::map_range(data.len(), |t| {
            let mut buf = vec![0.0; d];
            let mut acc = 0.0;
            for n in 0..self.grid.n_patches() {
                let x = data.patch(t, n);
                self.decode_patch_into(n, &self.encode_patch(n, x), &mut buf);
                acc += buf.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
            acc
        });
        Ok(per_snapshot.iter().sum())
    }

    /// Autoencoding loss as mean squared error per element (`/ (T N D)`), so
    /// values are comparable across patch sizes and latent dimensions.
    pub fn ae_loss(&self, data: &PatchedSeries) -> Result<f64> {
        let count = (data.len() * self.grid.n_patches() * self.grid.dim()) as f64;
        Ok(self.ae_loss_sum(data)? / count)
    }
}
