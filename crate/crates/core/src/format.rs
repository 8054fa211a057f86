//! Binary containers (all little-endian).
//!
//! Dataset, `LAMP-DS v1`:
//!
//! ```text
//! magic "LAMPDS01" | u32 H, W, C, T | u8 normalized
//! | if normalized: C x (f64 mean, f64 std)
//! | T*H*W*C f64, snapshot-major, row-major, component fastest
//! ```
//!
//! Model, `LAMP-MODEL v1`:
//!
//! ```text
//! magic "LAMPMD01" | u32 H, W, C, P, N_e | u8 intercept | f64 ridge | f64 error_floor
//! | C x (f64 mean, f64 std)
//! | N x (D x N_e f64, column-major)          POD bases
//! | N x (N_e f64)                            singular values
//! | N^2 x (N_e x N_e f64, row-major)         value maps, block (m, n) at m*N+n
//! | N^2 x N_e f64                            attention vectors
//! | N^2 f64                                  attention intercepts
//! | N^2 f64                                  mean training pair losses
//! ```
//!
//! The ridge float is nonnegative for a fixed lambda and negative (sign bit
//! set) for a relative factor, see [`Ridge::to_f64`]. Readers reject unknown
//! magic and trailing bytes.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::latentattn::{AttentionModel, Ridge, TrainOptions};
use crate::patchgrid::{NormStats, PatchGrid, SnapshotSet};
use crate::patchpod::PatchPodModel;
use crate::{LampError, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"LAMPDS01";
pub const MODEL_MAGIC: &[u8; 8] = b"LAMPMD01";

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b)?;
        Ok(())
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| LampError::invalid(format!("{v} does not fit in u32")))?;
        self.bytes(&v.to_le_bytes())
    }

    fn u8(&mut self, v: bool) -> Result<()> {
        self.bytes(&[v as u8])
    }

    fn f64s<'a>(&mut self, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
        let mut buf = Vec::new();
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.bytes(&buf)
    }
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => LampError::Format("file is truncated".into()),
            _ => LampError::Io(e),
        })
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let mut m = [0u8; 8];
        self.exact(&mut m)?;
        if &m != expected {
            return Err(LampError::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&m),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<usize> {
        let mut b = [0u8; 4];
        self.exact(&mut b)?;
        Ok(u32::from_le_bytes(b) as usize)
    }

    fn flag(&mut self) -> Result<bool> {
        let mut b = [0u8; 1];
        self.exact(&mut b)?;
        match b[0] {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(LampError::Format(format!("flag byte {other} is neither 0 nor 1"))),
        }
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = count.checked_mul(8).ok_or_else(|| LampError::Format("array size overflows".into()))?;
        // Read in bounded chunks so a corrupt header cannot force a huge allocation.
        let mut out = Vec::new();
        let mut remaining = bytes;
        let mut chunk = vec![0u8; 1 << 16];
        while remaining > 0 {
            let take = remaining.min(chunk.len());
            self.exact(&mut chunk[..take])?;
            out.extend(chunk[..take].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())));
            remaining -= take;
        }
        Ok(out)
    }

    fn end(mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(LampError::Format("trailing bytes after payload".into())),
        }
    }
}

fn write_stats<W: Write>(w: &mut Writer<W>, stats: &NormStats) -> Result<()> {
    let pairs: Vec<f64> = stats.mean.iter().zip(&stats.std).flat_map(|(m, s)| [*m, *s]).collect();
    w.f64s(&pairs)
}

fn read_stats<R: Read>(r: &mut Reader<R>, components: usize) -> Result<NormStats> {
    let pairs = r.f64s(2 * components)?;
    Ok(NormStats {
        mean: pairs.iter().step_by(2).copied().collect(),
        std: pairs.iter().skip(1).step_by(2).copied().collect(),
    })
}

pub fn write_dataset<W: Write>(out: W, set: &SnapshotSet) -> Result<()> {
    let mut w = Writer { inner: out };
    w.bytes(DATASET_MAGIC)?;
    for v in [set.height(), set.width(), set.components(), set.len()] {
        w.u32(v)?;
    }
    w.u8(set.norm_stats().is_some())?;
    if let Some(stats) = set.norm_stats() {
        write_stats(&mut w, stats)?;
    }
    w.f64s(set.data())?;
    w.inner.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<SnapshotSet> {
    let mut r = Reader { inner: input };
    r.magic(DATASET_MAGIC)?;
    let (h, w, c, t) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let normalized = r.flag()?;
    let stats = if normalized { Some(read_stats(&mut r, c)?) } else { None };
    let count = t
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| LampError::Format("dataset dimensions overflow".into()))?;
    let data = r.f64s(count)?;
    r.end()?;
    let set = SnapshotSet::new(h, w, c, t, data)?;
    match stats {
        Some(s) => set.with_norm(s),
        None => Ok(set),
    }
}

pub fn write_model<W: Write>(out: W, model: &AttentionModel) -> Result<()> {
    let mut w = Writer { inner: out };
    let pod = model.pod();
    let grid = pod.grid();
    let options = model.options();
    w.bytes(MODEL_MAGIC)?;
    for v in [grid.height(), grid.width(), grid.components(), grid.patch_size(), pod.latent_dim()] {
        w.u32(v)?;
    }
    w.u8(options.intercept)?;
    w.f64s(&[options.ridge.to_f64(), options.error_floor])?;
    write_stats(&mut w, pod.norm_stats())?;
    for n in 0..grid.n_patches() {
        w.f64s(pod.basis(n).as_slice())?;
    }
    for n in 0..grid.n_patches() {
        w.f64s(pod.singular_values(n))?;
    }
    w.f64s(model.value_maps())?;
    w.f64s(model.attn_vectors())?;
    w.f64s(model.attn_intercepts())?;
    w.f64s(model.pair_losses())?;
    w.inner.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(input: R) -> Result<AttentionModel> {
    let mut r = Reader { inner: input };
    r.magic(MODEL_MAGIC)?;
    let (h, w, c, p, ne) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let intercept = r.flag()?;
    let ridge = Ridge::from_f64(r.f64()?).map_err(|e| LampError::Format(e.to_string()))?;
    let error_floor = r.f64()?;
    let grid = PatchGrid::new(h, w, c, p).map_err(|e| LampError::Format(e.to_string()))?;
    if ne == 0 || ne > grid.dim() {
        return Err(LampError::Format(format!("latent dimension {ne} invalid for D={}", grid.dim())));
    }
    let stats = read_stats(&mut r, c)?;
    let (n_p, d) = (grid.n_patches(), grid.dim());
    let mut bases = Vec::with_capacity(n_p);
    for _ in 0..n_p {
        bases.push(DMatrix::from_column_slice(d, ne, &r.f64s(d * ne)?));
    }
    let mut singular_values = Vec::with_capacity(n_p);
    for _ in 0..n_p {
        singular_values.push(r.f64s(ne)?);
    }
    let pairs = n_p * n_p;
    let value_maps = r.f64s(pairs * ne * ne)?;
    let attn_vectors = r.f64s(pairs * ne)?;
    let attn_intercepts = r.f64s(pairs)?;
    let pair_losses = r.f64s(pairs)?;
    r.end()?;
    let pod = PatchPodModel::from_parts(grid, ne, bases, singular_values, stats)?;
    let options = TrainOptions { ridge, error_floor, intercept };
    AttentionModel::from_parts(pod, value_maps, attn_vectors, attn_intercepts, pair_losses, options)
}
