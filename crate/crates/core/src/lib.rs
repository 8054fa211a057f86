//! Flow-field reconstruction from a few observed patches (LAMP).
//!
//! Reconstructs full 2D multi-component fields from a small subset of
//! observed (possibly noisy) square patches. The pipeline is:
//!
//! 1. [`patchgrid`]: standardize snapshots and cut them into flattened
//!    non-overlapping `P x P` patches.
//! 2. [`patchpod`]: compress every patch with its own truncated POD basis.
//! 3. [`latentattn`]: predict every latent patch from every other latent
//!    patch with closed-form least-squares maps, and blend the pair-wise
//!    predictions with a softmax over regressed log-errors.
//!
//! Everything is trained in closed form, so fits are deterministic and
//! bit-reproducible. [`baseline`] provides gappy POD for comparison,
//! [`datagen`] synthetic wake-like datasets plus SNR-controlled noise, and
//! [`metrics`] losses, predictive-power maps, sensor placement and sweeps.
//!
//! With the default `parallel` feature the independent inner loops run on
//! rayon; without it they run sequentially with identical results.
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod datagen;
mod error;
pub mod format;
pub mod latentattn;
pub mod linalg;
pub mod metrics;
mod par;
pub mod patchgrid;
pub mod patchpod;

pub use error::{LampError, Result};

pub use baseline::{fit_gappy, reconstruct_gappy, GappyPodModel};
pub use datagen::{add_noise, generate, ChaoticParams, FlowKind, FlowSpec, LaminarParams, NoiseSpec};
pub use latentattn::{
    predict_masked, reconstruct, softmax_row, AttentionModel, MaskSpec, MaskedLatentSnapshot, Ridge, TrainOptions,
};
pub use metrics::{place_sensors, pred_loss, predictive_power, run_sweep, PowerMap, SweepConfig, SweepResult};
pub use patchgrid::{
    normalize, patchify, split, unpatchify, NormStats, PatchGrid, PatchedSeries, SnapshotSet, SplitSpec,
};
pub use patchpod::{LatentSeries, PatchPodModel};
