//! Gappy POD reference reconstruction.
//!
//! Global POD modes are fitted on whole training snapshots (no patching).
//! A masked snapshot is reconstructed by a least-squares fit of the mode
//! coefficients to the observed pixels only, then evaluated everywhere.
//! The pixel mask is induced by the same patch-level [`MaskSpec`] LAMP
//! uses, so both methods see identical inputs.

use nalgebra::{DMatrix, DVector};

use crate::latentattn::{MaskSpec, Ridge};
use crate::linalg::{cholesky, leading_left_singular, shifted};
use crate::par;
use crate::patchgrid::{NormStats, PatchGrid, SnapshotSet};
use crate::{LampError, Result};

/// Default regularization of the observed-pixel normal equations.
pub const GAPPY_RIDGE: Ridge = Ridge::Relative(1e-12);

#[derive(Clone, Debug, PartialEq)]
pub struct GappyPodModel {
    height: usize,
    width: usize,
    components: usize,
    /// `H*W*C x r`, orthonormal columns.
    modes: DMatrix<f64>,
    singular_values: Vec<f64>,
    norm: NormStats,
    ridge: Ridge,
}

impl GappyPodModel {
    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn norm_stats(&self) -> &NormStats {
        &self.norm
    }

    pub fn with_ridge(mut self, ridge: Ridge) -> Self {
        self.ridge = ridge;
        self
    }

    /// Orthogonal projection of every snapshot onto the modes.
    pub fn project(&self, field: &SnapshotSet) -> Result<SnapshotSet> {
        self.check_geometry(field)?;
        let input = field.normalized_with(&self.norm)?;
        let frames = par::map_range(input.len(), |t| {
            let x = DVector::from_column_slice(input.snapshot(t));
            let coef = self.modes.tr_mul(&x);
            (&self.modes * coef).as_slice().to_vec()
        });
        SnapshotSet::new(self.height, self.width, self.components, input.len(), frames.concat())?
            .with_norm(self.norm.clone())
    }

    fn check_geometry(&self, field: &SnapshotSet) -> Result<()> {
        if field.height() != self.height || field.width() != self.width || field.components() != self.components {
            return Err(LampError::shape(format!(
                "field {}x{}x{} does not match gappy model {}x{}x{}",
                field.height(),
                field.width(),
                field.components(),
                self.height,
                self.width,
                self.components
            )));
        }
        Ok(())
    }
}

/// Global truncated POD of the training snapshots with `r` modes.
pub fn fit_gappy(train: &SnapshotSet, r: usize) -> Result<GappyPodModel> {
    let (len, t) = (train.frame_len(), train.len());
    if r == 0 || r > len.min(t) {
        return Err(LampError::invalid(format!("gappy mode count {r} must lie in [1, min(HWC={len}, T={t})]")));
    }
    let x = DMatrix::from_column_slice(len, t, train.data());
    let (modes, singular_values) = leading_left_singular(&x, r)?;
    Ok(GappyPodModel {
        height: train.height(),
        width: train.width(),
        components: train.components(),
        modes,
        singular_values,
        norm: train.norm_stats().cloned().unwrap_or_else(|| NormStats::identity(train.components())),
        ridge: GAPPY_RIDGE,
    })
}

/// Fits mode coefficients to the pixels of the unmasked patches and
/// evaluates the modes over the whole field. Output is in standardized
/// units.
pub fn reconstruct_gappy(
    model: &GappyPodModel,
    field: &SnapshotSet,
    mask: &MaskSpec,
    patch_size: usize,
) -> Result<SnapshotSet> {
    model.check_geometry(field)?;
    let grid = PatchGrid::for_set(field, patch_size)?;
    if mask.n_patches() != grid.n_patches() {
        return Err(LampError::shape(format!(
            "mask covers {} patches, grid has {}",
            mask.n_patches(),
            grid.n_patches()
        )));
    }
    let observed: Vec<usize> = mask.unmasked().iter().flat_map(|&n| grid.frame_offsets(n)).collect();
    let r = model.rank();
    if observed.len() < r {
        return Err(LampError::invalid(format!(
            "{} observed values cannot determine {r} gappy modes; use a smaller mode count",
            observed.len()
        )));
    }
    let phi_obs = model.modes.select_rows(observed.iter());
    let gram = phi_obs.tr_mul(&phi_obs);
    let lambda = model.ridge.lambda(&gram);
    let chol = cholesky(shifted(&gram, lambda)).ok_or_else(|| {
        LampError::numerical("observed-pixel normal matrix is singular; increase coverage or the ridge")
    })?;
    let input = field.normalized_with(&model.norm)?;
    let frames = par::map_range(input.len(), |t| {
        let frame = input.snapshot(t);
        let x_obs = DVector::from_iterator(observed.len(), observed.iter().map(|&i| frame[i]));
        let coef = chol.solve(&phi_obs.tr_mul(&x_obs));
        (&model.modes * coef).as_slice().to_vec()
    });
    SnapshotSet::new(field.height(), field.width(), field.components(), input.len(), frames.concat())?
        .with_norm(model.norm.clone())
}
