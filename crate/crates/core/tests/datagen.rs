mod common;

use common::{jacobi_eigen, matmul, transpose, Mat};
use lamp_core::datagen::{derive_seed, noise_variance, signal_power};
use lamp_core::{
    add_noise, generate, normalize, patchify, ChaoticParams, FlowKind, FlowSpec, LaminarParams, MaskSpec, NoiseSpec,
    PatchPodModel, SnapshotSet,
};
use nalgebra::DMatrix;

/// Smallest number of leading eigenvalues holding `fraction` of the total.
fn energy_rank(eigenvalues: &[f64], fraction: f64) -> usize {
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let mut acc = 0.0;
    for (i, v) in eigenvalues.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= fraction * total {
            return i + 1;
        }
    }
    eigenvalues.len()
}

#[test]
fn chaotic_surrogate_has_high_effective_rank() {
    // Long enough for the slowest modes to decorrelate; short windows
    // understate the rank of any travelling-wave field.
    let t = 1000;
    let spec =
        FlowSpec { kind: FlowKind::Chaotic(ChaoticParams::default()), height: 48, width: 48, snapshots: t, seed: 3 };
    let set = normalize(&generate(&spec).unwrap(), 0..t).unwrap();
    // Golub-Kahan on the Gram matrix, not the symmetric eigen route the
    // crate uses.
    let x = DMatrix::from_column_slice(set.frame_len(), t, set.data());
    let mut spectrum: Vec<f64> = (x.transpose() * &x).singular_values().iter().copied().collect();
    spectrum.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = set.data().iter().map(|v| v * v).sum();
    assert!((spectrum.iter().sum::<f64>() / total - 1.0).abs() < 1e-9);
    let rank = energy_rank(&spectrum, 0.99);
    assert!(rank > 30, "99% energy rank {rank}");
}

#[test]
fn laminar_patches_are_low_rank() {
    for harmonics in 1..=6 {
        let params = LaminarParams { harmonics, ..Default::default() };
        let spec = FlowSpec { kind: FlowKind::Laminar(params), height: 32, width: 32, snapshots: 64, seed: 1 };
        let set = normalize(&generate(&spec).unwrap(), 0..64).unwrap();
        let patched = patchify(&set, 8).unwrap();
        let model = PatchPodModel::fit(&patched, 20).unwrap();
        for n in 0..patched.grid().n_patches() {
            // Fluctuations about the temporal mean: one sine/cosine pair per
            // harmonic.
            let mut x: Mat = (0..64).map(|t| patched.patch(t, n).to_vec()).collect();
            let d = x[0].len();
            for i in 0..d {
                let mean = x.iter().map(|row| row[i]).sum::<f64>() / 64.0;
                x.iter_mut().for_each(|row| row[i] -= mean);
            }
            let fluct = jacobi_eigen(&matmul(&x, &transpose(&x))).0;
            let effective = energy_rank(&fluct, 0.99);
            assert!(effective <= 2 * harmonics, "harmonics {harmonics}, patch {n}: rank {effective}");
            // Uncentered, the steady part adds one mode.
            let energies: Vec<f64> = model.singular_values(n).iter().map(|s| s * s).collect();
            let numerical = energies.iter().filter(|&&e| e > 1e-12 * energies[0]).count();
            assert!(numerical <= 2 * harmonics + 1, "harmonics {harmonics}, patch {n}: numerical rank {numerical}");
        }
    }
}

#[test]
fn noise_matches_the_snr_law() {
    let spec =
        FlowSpec { kind: FlowKind::Laminar(LaminarParams::default()), height: 32, width: 32, snapshots: 100, seed: 2 };
    let clean = generate(&spec).unwrap();
    let mask = MaskSpec::full(16);
    let power = signal_power(&clean, &mask, 8).unwrap();
    let noisy = add_noise(&clean, &mask, 8, &NoiseSpec { snr_db: 10.0, seed: 9 }).unwrap();
    let samples = clean.data().len();
    assert!(samples >= 100_000);
    let diff: Vec<f64> = noisy.data().iter().zip(clean.data()).map(|(a, b)| a - b).collect();
    let mean = diff.iter().sum::<f64>() / samples as f64;
    let variance = diff.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / samples as f64;
    let expected = power * 0.1;
    assert!((variance / expected - 1.0).abs() < 0.05, "{variance} vs {expected}");
}

#[test]
fn noise_touches_only_observed_patches() {
    let spec =
        FlowSpec { kind: FlowKind::Laminar(LaminarParams::default()), height: 16, width: 16, snapshots: 4, seed: 2 };
    let clean = generate(&spec).unwrap();
    let mask = MaskSpec::new(vec![1, 2], 4).unwrap();
    let noisy = add_noise(&clean, &mask, 8, &NoiseSpec { snr_db: 0.0, seed: 1 }).unwrap();
    for t in 0..4 {
        for y in 0..16 {
            for x in 0..16 {
                let n = (y / 8) * 2 + x / 8;
                for c in 0..2 {
                    let same = noisy.value(t, y, x, c) == clean.value(t, y, x, c);
                    assert_eq!(same, !mask.is_unmasked(n));
                }
            }
        }
    }
}

#[test]
fn infinite_snr_is_identity_and_zero_power_fails() {
    let spec =
        FlowSpec { kind: FlowKind::Laminar(LaminarParams::default()), height: 16, width: 16, snapshots: 3, seed: 2 };
    let clean = generate(&spec).unwrap();
    let mask = MaskSpec::full(4);
    let out = add_noise(&clean, &mask, 8, &NoiseSpec { snr_db: f64::INFINITY, seed: 1 }).unwrap();
    assert_eq!(out, clean);
    let zero = SnapshotSet::new(16, 16, 2, 1, vec![0.0; 512]).unwrap();
    assert!(add_noise(&zero, &mask, 8, &NoiseSpec { snr_db: 10.0, seed: 1 }).is_err());
    assert!((noise_variance(1.0, 20.0).unwrap() - 0.01).abs() < 1e-15);
}

#[test]
fn noise_is_seeded_per_snapshot() {
    let spec =
        FlowSpec { kind: FlowKind::Laminar(LaminarParams::default()), height: 16, width: 16, snapshots: 6, seed: 2 };
    let clean = generate(&spec).unwrap();
    let mask = MaskSpec::full(4);
    let noise = NoiseSpec { snr_db: 10.0, seed: 5 };
    let a = add_noise(&clean, &mask, 8, &noise).unwrap();
    assert_eq!(a, add_noise(&clean, &mask, 8, &noise).unwrap());
    let b = add_noise(&clean, &mask, 8, &NoiseSpec { seed: 6, ..noise }).unwrap();
    assert_ne!(a, b);
    assert_ne!(derive_seed(5, 0), derive_seed(5, 1));
}
