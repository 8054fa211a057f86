//! Field geometry: snapshot containers, standardization, patch extraction
//! and reassembly, and contiguous train/gap/test splitting.
//!
//! Layouts used throughout the crate:
//!
//! * snapshot data is snapshot-major, then row-major over pixels, with the
//!   component index fastest: `data[((t * H + y) * W + x) * C + c]`;
//! * patches are numbered row-major over the patch grid, and a flattened
//!   patch is row-major over its pixels with the component fastest:
//!   `patch[(iy * P + ix) * C + c]`.

use std::ops::Range;

use crate::{LampError, Result};

/// Per-component affine standardization `(x - mean) / std`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Stats that leave data unchanged.
    pub fn identity(components: usize) -> Self {
        NormStats { mean: vec![0.0; components], std: vec![1.0; components] }
    }

    pub fn components(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    height: usize,
    width: usize,
    components: usize,
    snapshots: usize,
    data: Vec<f64>,
    /// Present when `data` is in standardized units.
    norm: Option<NormStats>,
}

impl SnapshotSet {
    pub fn new(height: usize, width: usize, components: usize, snapshots: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || components == 0 || snapshots == 0 {
            return Err(LampError::shape(format!("empty geometry H={height} W={width} C={components} T={snapshots}")));
        }
        let expected = snapshots
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .and_then(|v| v.checked_mul(components))
            .ok_or_else(|| LampError::shape("geometry overflows usize"))?;
        if data.len() != expected {
            return Err(LampError::shape(format!("data length {} != T*H*W*C = {expected}", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(LampError::numerical(format!("non-finite value at flat index {i}")));
        }
        Ok(SnapshotSet { height, width, components, snapshots, data, norm: None })
    }

    /// Marks the data as standardized with `stats`. The values are not touched.
    pub fn with_norm(mut self, stats: NormStats) -> Result<Self> {
        if stats.components() != self.components || stats.std.len() != self.components {
            return Err(LampError::shape("norm stats do not match component count"));
        }
        self.norm = Some(stats);
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Number of snapshots `T`.
    pub fn len(&self) -> usize {
        self.snapshots
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn norm_stats(&self) -> Option<&NormStats> {
        self.norm.as_ref()
    }

    /// Number of values in one snapshot, `H * W * C`.
    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.components
    }

    pub fn snapshot(&self, t: usize) -> &[f64] {
        let len = self.frame_len();
        &self.data[t * len..(t + 1) * len]
    }

    pub fn value(&self, t: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[((t * self.height + y) * self.width + x) * self.components + c]
    }

    pub fn same_geometry(&self, other: &SnapshotSet) -> bool {
        self.height == other.height && self.width == other.width && self.components == other.components
    }

    /// Contiguous block of snapshots, keeping normalization metadata.
    pub fn slice(&self, range: Range<usize>) -> Result<SnapshotSet> {
        if range.start >= range.end || range.end > self.snapshots {
            return Err(LampError::invalid(format!("snapshot range {range:?} outside [0, {})", self.snapshots)));
        }
        let len = self.frame_len();
        Ok(SnapshotSet {
            snapshots: range.len(),
            data: self.data[range.start * len..range.end * len].to_vec(),
            norm: self.norm.clone(),
            ..*self
        })
    }

    /// Standardizes raw data with frozen `stats`.
    pub fn apply_norm(&self, stats: &NormStats) -> Result<SnapshotSet> {
        if self.norm.is_some() {
            return Err(LampError::invalid("data is already normalized"));
        }
        if stats.components() != self.components {
            return Err(LampError::shape(format!(
                "norm stats have {} components, data has {}",
                stats.components(),
                self.components
            )));
        }
        let c = self.components;
        let data = self.data.iter().enumerate().map(|(i, v)| (v - stats.mean[i % c]) / stats.std[i % c]).collect();
        Ok(SnapshotSet { data, norm: Some(stats.clone()), ..*self })
    }

    /// Maps standardized data back to raw units.
    pub fn denormalize(&self) -> Result<SnapshotSet> {
        let stats = self.norm.as_ref().ok_or_else(|| LampError::invalid("data is not normalized"))?;
        let c = self.components;
        let data = self.data.iter().enumerate().map(|(i, v)| v * stats.std[i % c] + stats.mean[i % c]).collect();
        Ok(SnapshotSet { data, norm: None, ..*self })
    }

    /// Returns the data in standardized units: unchanged if already
    /// normalized (the stats must then equal `stats`), otherwise standardized
    /// with `stats`.
    pub fn normalized_with(&self, stats: &NormStats) -> Result<SnapshotSet> {
        match &self.norm {
            Some(own) if own == stats => Ok(self.clone()),
            Some(_) => Err(LampError::invalid("data is normalized with different statistics")),
            None => self.apply_norm(stats),
        }
    }
}

/// Fits per-component population mean and std on `train_range` and applies
/// them to every snapshot.
pub fn normalize(set: &SnapshotSet, train_range: Range<usize>) -> Result<SnapshotSet> {
    if set.norm.is_some() {
        return Err(LampError::invalid("data is already normalized"));
    }
    if train_range.start >= train_range.end || train_range.end > set.snapshots {
        return Err(LampError::invalid(format!(
            "train range {train_range:?} must be non-empty and within [0, {})",
            set.snapshots
        )));
    }
    let c = set.components;
    let frame = set.frame_len();
    let block = &set.data[train_range.start * frame..train_range.end * frame];
    let count = (block.len() / c) as f64;
    let mut mean = vec![0.0; c];
    for (i, v) in block.iter().enumerate() {
        mean[i % c] += v;
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; c];
    for (i, v) in block.iter().enumerate() {
        let d = v - mean[i % c];
        var[i % c] += d * d;
    }
    let std: Vec<f64> = var.iter().map(|s| (s / count).sqrt()).collect();
    for (component, (&s, &m)) in std.iter().zip(&mean).enumerate() {
        // Constant components leave only rounding residue in the deviations.
        if !(s > 1e-14 * m.abs()) || s == 0.0 {
            return Err(LampError::ZeroVariance { component });
        }
    }
    set.apply_norm(&NormStats { mean, std })
}

/// Geometry of the non-overlapping patch tiling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    patch_size: usize,
    rows: usize,
    cols: usize,
    components: usize,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, components: usize, patch_size: usize) -> Result<Self> {
        if patch_size == 0 || !height.is_multiple_of(patch_size) || !width.is_multiple_of(patch_size) {
            return Err(LampError::Indivisible { height, width, patch: patch_size });
        }
        if components == 0 {
            return Err(LampError::shape("zero components"));
        }
        Ok(PatchGrid { patch_size, rows: height / patch_size, cols: width / patch_size, components })
    }

    pub fn for_set(set: &SnapshotSet, patch_size: usize) -> Result<Self> {
        Self::new(set.height, set.width, set.components, patch_size)
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn height(&self) -> usize {
        self.rows * self.patch_size
    }

    pub fn width(&self) -> usize {
        self.cols * self.patch_size
    }

    /// Patch count `N`.
    pub fn n_patches(&self) -> usize {
        self.rows * self.cols
    }

    /// Flattened patch dimension `D = C * P^2`.
    pub fn dim(&self) -> usize {
        self.components * self.patch_size * self.patch_size
    }

    /// Top-left pixel `(y, x)` of patch `n`.
    pub fn origin(&self, n: usize) -> (usize, usize) {
        ((n / self.cols) * self.patch_size, (n % self.cols) * self.patch_size)
    }

    /// Patch index containing pixel `(y, x)`.
    pub fn patch_of(&self, y: usize, x: usize) -> usize {
        (y / self.patch_size) * self.cols + x / self.patch_size
    }

    /// Offsets into a snapshot frame for every element of patch `n`, in
    /// flattened-patch order.
    pub fn frame_offsets(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        let (y0, x0) = self.origin(n);
        let (p, c, w) = (self.patch_size, self.components, self.width());
        (0..p).flat_map(move |iy| (0..p).flat_map(move |ix| (0..c).map(move |k| ((y0 + iy) * w + x0 + ix) * c + k)))
    }
}

/// `T x N x D` patch vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchedSeries {
    grid: PatchGrid,
    snapshots: usize,
    values: Vec<f64>,
    norm: Option<NormStats>,
}

impl PatchedSeries {
    pub fn new(grid: PatchGrid, snapshots: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != snapshots * grid.n_patches() * grid.dim() {
            return Err(LampError::shape(format!(
                "{} values for T={snapshots}, N={}, D={}",
                values.len(),
                grid.n_patches(),
                grid.dim()
            )));
        }
        Ok(PatchedSeries { grid, snapshots, values, norm: None })
    }

    pub fn with_norm(mut self, norm: Option<NormStats>) -> Self {
        self.norm = norm;
        self
    }

    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.snapshots
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots == 0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm_stats(&self) -> Option<&NormStats> {
        self.norm.as_ref()
    }

    pub fn patch(&self, t: usize, n: usize) -> &[f64] {
        let d = self.grid.dim();
        let start = (t * self.grid.n_patches() + n) * d;
        &self.values[start..start + d]
    }
}

pub fn patchify(set: &SnapshotSet, patch_size: usize) -> Result<PatchedSeries> {
    let grid = PatchGrid::for_set(set, patch_size)?;
    let mut values = Vec::with_capacity(set.data.len());
    for t in 0..set.snapshots {
        let frame = set.snapshot(t);
        for n in 0..grid.n_patches() {
            values.extend(grid.frame_offsets(n).map(|i| frame[i]));
        }
    }
    Ok(PatchedSeries { grid, snapshots: set.snapshots, values, norm: set.norm.clone() })
}

pub fn unpatchify(series: &PatchedSeries) -> Result<SnapshotSet> {
    let grid = &series.grid;
    let frame_len = grid.n_patches() * grid.dim();
    if series.values.len() != series.snapshots * frame_len {
        return Err(LampError::shape(format!(
            "series holds {} values, grid expects {} per snapshot",
            series.values.len(),
            frame_len
        )));
    }
    let mut data = vec![0.0; series.values.len()];
    for t in 0..series.snapshots {
        let frame = &mut data[t * frame_len..(t + 1) * frame_len];
        for n in 0..grid.n_patches() {
            for (offset, v) in grid.frame_offsets(n).zip(series.patch(t, n)) {
                frame[offset] = *v;
            }
        }
    }
    Ok(SnapshotSet {
        height: grid.height(),
        width: grid.width(),
        components: grid.components(),
        snapshots: series.snapshots,
        data,
        norm: series.norm.clone(),
    })
}

/// Contiguous train block, discarded gap, then test block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub gap_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.75, test_fraction: 0.20, gap_fraction: 0.05 }
    }
}

impl SplitSpec {
    /// Train and test snapshot ranges for a series of length `t`.
    pub fn ranges(&self, t: usize) -> Result<(Range<usize>, Range<usize>)> {
        let fractions = [self.train_fraction, self.test_fraction, self.gap_fraction];
        if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(LampError::invalid(format!("split fractions must be nonnegative: {self:?}")));
        }
        if fractions.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(LampError::invalid(format!("split fractions sum above one: {self:?}")));
        }
        // The epsilon absorbs representation error such as 0.2 * 100.
        let count = |f: f64| ((f * t as f64) + 1e-9).floor() as usize;
        let train = count(self.train_fraction).min(t);
        let gap = count(self.gap_fraction);
        let test_start = (train + gap).min(t);
        let test_end = (test_start + count(self.test_fraction)).min(t);
        if train == 0 {
            return Err(LampError::invalid(format!("empty train block for T={t}")));
        }
        if test_end == test_start {
            return Err(LampError::invalid(format!("empty test block for T={t}")));
        }
        Ok((0..train, test_start..test_end))
    }
}

pub fn split(set: &SnapshotSet, spec: &SplitSpec) -> Result<(SnapshotSet, SnapshotSet)> {
    let (train, test) = spec.ranges(set.snapshots)?;
    Ok((set.slice(train)?, set.slice(test)?))
}
