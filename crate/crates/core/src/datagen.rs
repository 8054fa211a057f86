//! Synthetic wake-like datasets and SNR-controlled measurement noise.
//!
//! Two surrogate families are provided. The laminar one is a periodic
//! vortex-street pattern made of a few harmonics of one shedding frequency,
//! so every patch has low, known rank. The chaotic one superposes many
//! divergence-free travelling modes with random wavenumbers and mutually
//! incommensurate frequencies, which gives a broadband, high-rank,
//! non-repeating series.
//!
//! All generators are pure functions of their spec. Per-snapshot random
//! streams are seeded with [`derive_seed`], so results do not depend on
//! how snapshots are scheduled across threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::latentattn::MaskSpec;
use crate::par;
use crate::patchgrid::{PatchGrid, SnapshotSet};
use crate::{LampError, Result};

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th independent stream under `seed`:
/// `splitmix64(seed ^ splitmix64(index))`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaminarParams {
    /// Streamwise wavelength of the fundamental, in pixels.
    pub wavelength: f64,
    /// Shedding period in snapshots.
    pub period: f64,
    /// Gaussian half-width of the wake as a fraction of the height.
    pub envelope_width: f64,
    /// Number of harmonics of the shedding frequency, 1 to 6.
    pub harmonics: usize,
    /// Amplitude ratio between consecutive harmonics.
    pub harmonic_decay: f64,
    pub free_stream: f64,
    /// Depth of the steady velocity deficit on the wake centreline.
    pub deficit: f64,
    /// Rows at the top and bottom held at the free stream (no dynamics).
    pub inert_border: usize,
}

impl Default for LaminarParams {
    fn default() -> Self {
        LaminarParams {
            wavelength: 24.0,
            period: 32.0,
            envelope_width: 0.25,
            harmonics: 4,
            harmonic_decay: 0.1,
            free_stream: 1.0,
            deficit: 0.3,
            inert_border: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChaoticParams {
    /// Number of travelling modes `K`.
    pub modes: usize,
    /// Wavenumber magnitude range in cycles per domain.
    pub min_wavenumber: f64,
    pub max_wavenumber: f64,
    /// Mean convection speed in pixels per snapshot.
    pub convection: f64,
    /// Mode amplitude scales as `wavenumber^-amplitude_decay`.
    pub amplitude_decay: f64,
    /// Standard deviation of the random frequency offset, radians per snapshot.
    pub frequency_jitter: f64,
    pub free_stream: f64,
}

impl Default for ChaoticParams {
    fn default() -> Self {
        ChaoticParams {
            modes: 40,
            min_wavenumber: 1.0,
            max_wavenumber: 6.0,
            convection: 0.5,
            amplitude_decay: 1.0,
            frequency_jitter: 0.05,
            free_stream: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FlowKind {
    Laminar(LaminarParams),
    Chaotic(ChaoticParams),
}

/// Two-component (u, v) surrogate flow.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSpec {
    pub kind: FlowKind,
    pub height: usize,
    pub width: usize,
    pub snapshots: usize,
    pub seed: u64,
}

pub fn generate(spec: &FlowSpec) -> Result<SnapshotSet> {
    if spec.height == 0 || spec.width == 0 || spec.snapshots == 0 {
        return Err(LampError::invalid("flow dimensions must be positive"));
    }
    let frames = match &spec.kind {
        FlowKind::Laminar(p) => laminar(spec, p)?,
        FlowKind::Chaotic(p) => chaotic(spec, p)?,
    };
    SnapshotSet::new(spec.height, spec.width, 2, spec.snapshots, frames.concat())
}

fn laminar(spec: &FlowSpec, p: &LaminarParams) -> Result<Vec<Vec<f64>>> {
    if !(1..=6).contains(&p.harmonics) {
        return Err(LampError::invalid(format!("laminar surrogate takes 1 to 6 harmonics, got {}", p.harmonics)));
    }
    if !(p.wavelength > 0.0 && p.period > 0.0 && p.envelope_width > 0.0) {
        return Err(LampError::invalid("wavelength, period and envelope width must be positive"));
    }
    let (h, w) = (spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phases: Vec<f64> = (0..p.harmonics).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    let k = 2.0 * PI / p.wavelength;
    let omega = 2.0 * PI / p.period;
    let yc = (h as f64 - 1.0) / 2.0;
    let width = p.envelope_width * h as f64;
    // Spatial factors shared by all snapshots.
    let mut gauss = vec![0.0; h * w];
    let mut odd = vec![0.0; h * w];
    for y in 0..h {
        let active = y >= p.inert_border && y + p.inert_border < h;
        let eta = (y as f64 - yc) / width;
        for x in 0..w {
            let ramp = 1.0 - (-(x as f64 + 1.0) / p.wavelength).exp();
            let g = if active { (-eta * eta).exp() * ramp } else { 0.0 };
            gauss[y * w + x] = g;
            odd[y * w + x] = -2.0 * eta * g;
        }
    }
    Ok(par::map_range(spec.snapshots, |t| {
        let mut frame = vec![0.0; h * w * 2];
        for i in 0..h * w {
            let x = (i % w) as f64;
            let mut u = p.free_stream - p.deficit * gauss[i];
            let mut v = 0.0;
            let mut amp = 1.0;
            for (hm, phase) in phases.iter().enumerate() {
                let arg = (hm + 1) as f64 * (k * x - omega * t as f64) + phase;
                u += amp * odd[i] * arg.sin();
                v += amp * gauss[i] * arg.cos();
                amp *= p.harmonic_decay;
            }
            frame[2 * i] = u;
            frame[2 * i + 1] = v;
        }
        frame
    }))
}

struct TravellingMode {
    /// `sin` and `cos` of the spatial phase at every pixel.
    sin_space: Vec<f64>,
    cos_space: Vec<f64>,
    omega: f64,
    /// Velocity amplitude along u and v.
    au: f64,
    av: f64,
}

fn chaotic(spec: &FlowSpec, p: &ChaoticParams) -> Result<Vec<Vec<f64>>> {
    if p.modes == 0 || !(p.min_wavenumber > 0.0 && p.max_wavenumber >= p.min_wavenumber) {
        return Err(LampError::invalid("chaotic surrogate needs modes > 0 and 0 < min <= max wavenumber"));
    }
    let (h, w) = (spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut modes = Vec::with_capacity(p.modes);
    for _ in 0..p.modes {
        let kappa = p.min_wavenumber + rng.random::<f64>() * (p.max_wavenumber - p.min_wavenumber);
        let angle = rng.random::<f64>() * 2.0 * PI;
        let phase = rng.random::<f64>() * 2.0 * PI;
        let jitter: f64 = rng.sample(StandardNormal);
        let kx = 2.0 * PI * kappa * angle.cos() / w as f64;
        let ky = 2.0 * PI * kappa * angle.sin() / h as f64;
        let kn = (kx * kx + ky * ky).sqrt();
        let amp = kappa.powf(-p.amplitude_decay);
        let mut sin_space = vec![0.0; h * w];
        let mut cos_space = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let s = kx * x as f64 + ky * y as f64 + phase;
                sin_space[y * w + x] = s.sin();
                cos_space[y * w + x] = s.cos();
            }
        }
        // Streamfunction mode a cos(k.x - wt): u = d(psi)/dy, v = -d(psi)/dx,
        // normalized by |k|.
        modes.push(TravellingMode {
            sin_space,
            cos_space,
            omega: p.convection * kx + p.frequency_jitter * jitter,
            au: -amp * ky / kn,
            av: amp * kx / kn,
        });
    }
    Ok(par::map_range(spec.snapshots, |t| {
        let mut frame = vec![0.0; h * w * 2];
        for i in 0..h * w {
            frame[2 * i] = p.free_stream;
        }
        for mode in &modes {
            // sin(s - wt) = sin s cos wt - cos s sin wt
            let (st, ct) = (mode.omega * t as f64).sin_cos();
            for i in 0..h * w {
                let s = mode.sin_space[i] * ct - mode.cos_space[i] * st;
                frame[2 * i] += mode.au * s;
                frame[2 * i + 1] += mode.av * s;
            }
        }
        frame
    }))
}

/// Gaussian measurement noise at a given signal-to-noise ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Decibels; `f64::INFINITY` means noise-free.
    pub snr_db: f64,
    pub seed: u64,
}

fn observed_offsets(grid: &PatchGrid, mask: &MaskSpec) -> Vec<usize> {
    mask.unmasked().iter().flat_map(|&n| grid.frame_offsets(n)).collect()
}

fn mask_grid(field: &SnapshotSet, mask: &MaskSpec, patch_size: usize) -> Result<PatchGrid> {
    let grid = PatchGrid::for_set(field, patch_size)?;
    if mask.n_patches() != grid.n_patches() {
        return Err(LampError::shape(format!(
            "mask covers {} patches, grid has {}",
            mask.n_patches(),
            grid.n_patches()
        )));
    }
    Ok(grid)
}

/// Mean squared value of the observed (unmasked) entries.
pub fn signal_power(field: &SnapshotSet, mask: &MaskSpec, patch_size: usize) -> Result<f64> {
    let grid = mask_grid(field, mask, patch_size)?;
    let offsets = observed_offsets(&grid, mask);
    if offsets.is_empty() {
        return Err(LampError::invalid("no observed patches"));
    }
    let sum: f64 = (0..field.len())
        .map(|t| {
            let frame = field.snapshot(t);
            offsets.iter().map(|&i| frame[i] * frame[i]).sum::<f64>()
        })
        .sum();
    Ok(sum / (offsets.len() * field.len()) as f64)
}

/// Noise variance `P_sig * 10^(-snr/10)`, zero for infinite SNR.
pub fn noise_variance(signal_power: f64, snr_db: f64) -> Result<f64> {
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    if !snr_db.is_finite() {
        return Err(LampError::invalid(format!("SNR must be finite or +inf, got {snr_db}")));
    }
    if !(signal_power > 0.0) {
        return Err(LampError::invalid("zero signal power with a finite SNR"));
    }
    Ok(signal_power * 10f64.powf(-snr_db / 10.0))
}

/// Adds i.i.d. Gaussian noise to the observed pixels of a raw (unnormalized)
/// field. Masked patches are left untouched.
pub fn add_noise(field: &SnapshotSet, mask: &MaskSpec, patch_size: usize, noise: &NoiseSpec) -> Result<SnapshotSet> {
    if field.norm_stats().is_some() {
        return Err(LampError::invalid("noise is defined on unnormalized data"));
    }
    if noise.snr_db == f64::INFINITY {
        mask_grid(field, mask, patch_size)?;
        return Ok(field.clone());
    }
    let variance = noise_variance(signal_power(field, mask, patch_size)?, noise.snr_db)?;
    let sigma = variance.sqrt();
    let grid = mask_grid(field, mask, patch_size)?;
    let offsets = observed_offsets(&grid, mask);
    let frames = par::map_range(field.len(), |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(noise.seed, t as u64));
        let mut frame = field.snapshot(t).to_vec();
        for &i in &offsets {
            let e: f64 = rng.sample(StandardNormal);
            frame[i] += sigma * e;
        }
        frame
    });
    SnapshotSet::new(field.height(), field.width(), field.components(), field.len(), frames.concat())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laminar_spec(t: usize) -> FlowSpec {
        FlowSpec { kind: FlowKind::Laminar(LaminarParams::default()), height: 32, width: 32, snapshots: t, seed: 5 }
    }

    #[test]
    fn laminar_is_periodic() {
        let set = generate(&laminar_spec(64)).unwrap();
        for t in 0..32 {
            for (a, b) in set.snapshot(t).iter().zip(set.snapshot(t + 32)) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate(&laminar_spec(10)).unwrap(), generate(&laminar_spec(10)).unwrap());
        let chaotic = FlowSpec {
            kind: FlowKind::Chaotic(ChaoticParams::default()),
            height: 16,
            width: 16,
            snapshots: 8,
            seed: 1,
        };
        assert_eq!(generate(&chaotic).unwrap(), generate(&chaotic).unwrap());
        let other = FlowSpec { seed: 2, ..chaotic.clone() };
        assert_ne!(generate(&chaotic).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn harmonic_count_is_bounded() {
        let mut spec = laminar_spec(4);
        spec.kind = FlowKind::Laminar(LaminarParams { harmonics: 7, ..Default::default() });
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn infinite_snr_is_identity() {
        let set = generate(&laminar_spec(4)).unwrap();
        let mask = MaskSpec::random(16, 3, 9).unwrap();
        let out = add_noise(&set, &mask, 8, &NoiseSpec { snr_db: f64::INFINITY, seed: 1 }).unwrap();
        assert_eq!(out, set);
    }

    #[test]
    fn variance_law() {
        assert!((noise_variance(1.0, 20.0).unwrap() - 0.01).abs() < 1e-15);
        assert!((noise_variance(3.0, 10.0).unwrap() - 0.3).abs() < 1e-15);
        assert!(noise_variance(0.0, 10.0).is_err());
        assert_eq!(noise_variance(0.0, f64::INFINITY).unwrap(), 0.0);
        assert!(noise_variance(1.0, f64::NAN).is_err());
    }

    #[test]
    fn noise_only_touches_observed_patches() {
        let set = generate(&laminar_spec(3)).unwrap();
        let mask = MaskSpec::new(vec![0, 5], 16).unwrap();
        let noisy = add_noise(&set, &mask, 8, &NoiseSpec { snr_db: 10.0, seed: 4 }).unwrap();
        let grid = PatchGrid::for_set(&set, 8).unwrap();
        for t in 0..3 {
            for n in 0..16 {
                let changed = grid.frame_offsets(n).any(|i| noisy.snapshot(t)[i] != set.snapshot(t)[i]);
                assert_eq!(changed, mask.is_unmasked(n), "patch {n}");
            }
        }
    }

    #[test]
    fn zero_signal_with_finite_snr_fails() {
        let set = SnapshotSet::new(4, 4, 1, 2, vec![0.0; 32]).unwrap();
        let mask = MaskSpec::full(4);
        assert!(add_noise(&set, &mask, 2, &NoiseSpec { snr_db: 10.0, seed: 0 }).is_err());
    }
}
