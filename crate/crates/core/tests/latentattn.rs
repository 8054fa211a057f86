mod common;

use common::{
    affine_ridge, gaussian, matmul, max_abs_diff, random_mat, reference_softmax, ridge_map, rng, solve, transpose, Mat,
};
use lamp_core::latentattn::{fit_attention_tensor, fit_value_tensor};
use lamp_core::patchgrid::{patchify, PatchGrid, PatchedSeries};
use lamp_core::{
    predict_masked, reconstruct, softmax_row, AttentionModel, LatentSeries, MaskSpec, MaskedLatentSnapshot,
    PatchPodModel, Ridge, SnapshotSet, TrainOptions,
};

const FLOOR: f64 = 1e-12;

/// Per-patch `N_e x T` trajectories.
fn random_latent(seed: u64, t: usize, n: usize, ne: usize) -> (LatentSeries, Vec<Mat>) {
    let mut r = rng(seed);
    let trajectories: Vec<Mat> = (0..n).map(|_| random_mat(&mut r, ne, t)).collect();
    (to_series(&trajectories), trajectories)
}

fn to_series(trajectories: &[Mat]) -> LatentSeries {
    let (n, ne, t) = (trajectories.len(), trajectories[0].len(), trajectories[0][0].len());
    let values = (0..t).flat_map(|s| (0..n).flat_map(move |p| (0..ne).map(move |e| trajectories[p][e][s]))).collect();
    LatentSeries::new(t, n, ne, values).unwrap()
}

fn oracle_lambda(ridge: Ridge, z: &Mat) -> f64 {
    match ridge {
        Ridge::Fixed(l) => l,
        Ridge::Relative(f) => {
            let trace: f64 = z.iter().flatten().map(|v| v * v).sum();
            f * trace / z.len() as f64
        }
    }
}

fn residual_errors(w: &Mat, zm: &Mat, zn: &Mat) -> Vec<f64> {
    let pred = matmul(w, zn);
    (0..zm[0].len()).map(|t| (0..zm.len()).map(|e| (zm[e][t] - pred[e][t]).powi(2)).sum()).collect()
}

fn check_instance(seed: u64, ridge: Ridge, intercept: bool) {
    let mut r = rng(seed ^ 0xABCD);
    let ne = 1 + (gaussian(&mut r).abs() * 10.0) as usize % 5;
    let t = 10 + (gaussian(&mut r).abs() * 100.0) as usize % 31;
    let n = 3;
    let (series, traj) = random_latent(seed, t, n, ne);
    let values = fit_value_tensor(&series, ridge).unwrap();
    let attn = fit_attention_tensor(&series, &values.pair_errors, ridge, FLOOR, intercept).unwrap();
    for m in 0..n {
        for s in 0..n {
            if m == s {
                continue;
            }
            let lambda = oracle_lambda(ridge, &traj[s]);
            let w = ridge_map(&traj[m], &traj[s], lambda);
            let idx = m * n + s;
            let got = &values.value_maps[idx * ne * ne..(idx + 1) * ne * ne];
            let flat: Vec<f64> = w.iter().flatten().copied().collect();
            assert!(max_abs_diff(got, &flat) < 1e-8, "seed {seed} W^V({m},{s})");

            let y: Vec<f64> = residual_errors(&w, &traj[m], &traj[s]).iter().map(|e| -e.max(FLOOR).ln()).collect();
            let (a, b) = if intercept {
                affine_ridge(&traj[s], &y, lambda)
            } else {
                let row = ridge_map(&vec![y.clone()], &traj[s], lambda);
                (row[0].clone(), 0.0)
            };
            assert!(max_abs_diff(&attn.vectors[idx * ne..(idx + 1) * ne], &a) < 1e-8, "seed {seed} W^A({m},{s})");
            assert!((attn.intercepts[idx] - b).abs() < 1e-8, "seed {seed} b({m},{s})");
        }
    }
}

#[test]
fn fits_match_brute_force_normal_equations() {
    for seed in 0..50 {
        check_instance(seed, Ridge::Fixed(1e-3), true);
    }
    for seed in 50..60 {
        check_instance(seed, Ridge::Relative(1e-8), true);
        check_instance(seed, Ridge::Fixed(0.5), false);
    }
}

#[test]
fn value_maps_minimize_ridge_objective() {
    let (series, traj) = random_latent(100, 30, 2, 3);
    let lambda = 0.1;
    let fit = fit_value_tensor(&series, Ridge::Fixed(lambda)).unwrap();
    let w: Mat = fit.value_maps[9..18].chunks(3).map(|c| c.to_vec()).collect(); // block (0, 1)
    let objective = |w: &Mat| -> f64 {
        residual_errors(w, &traj[0], &traj[1]).iter().sum::<f64>()
            + lambda * w.iter().flatten().map(|v| v * v).sum::<f64>()
    };
    let best = objective(&w);
    let mut r = rng(101);
    for _ in 0..50 {
        let mut p = w.clone();
        for v in p.iter_mut().flatten() {
            *v += 1e-3 * gaussian(&mut r);
        }
        assert!(objective(&p) > best);
    }
}

#[test]
fn proportional_latents_give_exact_maps() {
    let (_, mut traj) = random_latent(102, 20, 2, 3);
    traj[0] = traj[1].iter().map(|row| row.iter().map(|v| 2.0 * v).collect()).collect();
    let series = to_series(&traj);
    let fit = fit_value_tensor(&series, Ridge::Fixed(0.0)).unwrap();
    let w01 = &fit.value_maps[9..18];
    let expected = [2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0];
    assert!(max_abs_diff(w01, &expected) < 1e-12);
    let errors = &fit.pair_errors[20..40]; // pair (0, 1)
    assert!(errors.iter().all(|e| *e < 1e-24));
    // The floored target is constant, so the attention slope vanishes and
    // the intercept is -ln(floor).
    let attn = fit_attention_tensor(&series, &fit.pair_errors, Ridge::Fixed(1e-6), FLOOR, true).unwrap();
    assert!(attn.vectors[3..6].iter().all(|v| v.abs() < 1e-9));
    assert!((attn.intercepts[1] + FLOOR.ln()).abs() < 1e-9);
}

#[test]
fn vanishing_ridge_approaches_least_squares() {
    let (series, traj) = random_latent(103, 25, 2, 4);
    let w0 = {
        // Unregularized normal equations; Z_n has full row rank.
        let g = matmul(&traj[1], &transpose(&traj[1]));
        transpose(&solve(&g, &matmul(&traj[1], &transpose(&traj[0]))))
    };
    let flat0: Vec<f64> = w0.iter().flatten().copied().collect();
    let mut last = f64::INFINITY;
    for lambda in [1e-6, 1e-9, 1e-12] {
        let fit = fit_value_tensor(&series, Ridge::Fixed(lambda)).unwrap();
        let diff = max_abs_diff(&fit.value_maps[16..32], &flat0);
        // First order: |W_lambda - W_0| ~ lambda |W_0| / sigma_min(Z_n)^2.
        assert!(diff < lambda + 1e-12, "lambda {lambda}: {diff}");
        assert!(diff <= last + 1e-13);
        last = diff;
    }
}

#[test]
fn fused_fit_equals_two_stage_fit() {
    let (series, _) = random_latent(104, 40, 5, 3);
    let grid = PatchGrid::new(2, 10, 1, 2).unwrap();
    let mut r = rng(105);
    let patches = PatchedSeries::new(grid, 40, (0..40 * 5 * 4).map(|_| gaussian(&mut r)).collect()).unwrap();
    let pod = PatchPodModel::fit(&patches, 3).unwrap();
    let options = TrainOptions::default();
    let model = AttentionModel::fit(pod, &series, options).unwrap();
    let values = fit_value_tensor(&series, options.ridge).unwrap();
    let attn = fit_attention_tensor(&series, &values.pair_errors, options.ridge, options.error_floor, true).unwrap();
    assert_eq!(model.value_maps(), &values.value_maps[..]);
    assert_eq!(model.attn_vectors(), &attn.vectors[..]);
    assert_eq!(model.attn_intercepts(), &attn.intercepts[..]);
    for m in 0..5 {
        for n in 0..5 {
            if m != n {
                let mean = values.pair_errors[(m * 5 + n) * 40..(m * 5 + n + 1) * 40].iter().sum::<f64>() / 40.0;
                assert_eq!(model.pair_loss(m, n), mean);
            }
        }
    }
}

fn field(seed: u64, h: usize, w: usize, t: usize) -> SnapshotSet {
    let mut r = rng(seed);
    let base: Vec<f64> = (0..h * w * 2 * 3).map(|_| gaussian(&mut r)).collect();
    // Three spatial structures with random time coefficients plus a little
    // independent content.
    let mut data = Vec::with_capacity(t * h * w * 2);
    for _ in 0..t {
        let c: Vec<f64> = (0..3).map(|_| gaussian(&mut r)).collect();
        for i in 0..h * w * 2 {
            data.push(
                c[0] * base[i] + c[1] * base[h * w * 2 + i] + c[2] * base[2 * h * w * 2 + i] + 0.01 * gaussian(&mut r),
            );
        }
    }
    SnapshotSet::new(h, w, 2, t, data).unwrap()
}

#[test]
fn refits_are_bit_identical() {
    let set = field(106, 8, 8, 30);
    let a = AttentionModel::train(&set, 4, 3, TrainOptions::default()).unwrap();
    let b = AttentionModel::train(&set, 4, 3, TrainOptions::default()).unwrap();
    let bits = |m: &AttentionModel| -> Vec<u64> {
        m.value_maps()
            .iter()
            .chain(m.attn_vectors())
            .chain(m.attn_intercepts())
            .chain(m.pair_losses())
            .map(|v| v.to_bits())
            .collect()
    };
    assert_eq!(bits(&a), bits(&b));
}

#[cfg(feature = "parallel")]
#[test]
fn thread_count_does_not_change_results() {
    let set = field(107, 8, 8, 30);
    let options = TrainOptions::default();
    let parallel = AttentionModel::train(&set, 2, 4, options).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| AttentionModel::train(&set, 2, 4, options).unwrap());
    assert_eq!(parallel, serial);
    let mask = MaskSpec::random(16, 4, 1).unwrap();
    let ra = reconstruct(&parallel, &set, &mask, true).unwrap();
    let rb = pool.install(|| reconstruct(&serial, &set, &mask, true).unwrap());
    assert_eq!(ra, rb);
}

#[test]
fn full_coverage_with_copy_through_is_pod_projection() {
    let set = field(108, 8, 8, 25);
    let model = AttentionModel::train(&set, 4, 2, TrainOptions::default()).unwrap();
    let rec = reconstruct(&model, &set, &MaskSpec::full(4), true).unwrap();
    let patched = patchify(&set, 4).unwrap();
    let projected = model.pod().decode(&model.pod().encode(&patched).unwrap()).unwrap();
    let expected = lamp_core::unpatchify(&projected).unwrap();
    assert!(max_abs_diff(rec.data(), expected.data()) < 1e-12);
}

#[test]
fn masking_everything_is_an_error() {
    let set = field(109, 8, 8, 10);
    let model = AttentionModel::train(&set, 4, 2, TrainOptions::default()).unwrap();
    let empty = MaskSpec::new(vec![], 4).unwrap();
    assert!(reconstruct(&model, &set, &empty, true).is_err());
    let masked = MaskedLatentSnapshot::new(vec![0.0; 8], 2, empty).unwrap();
    assert!(predict_masked(&model, &masked, true).is_err());
}

/// Three patches, `N_e = 2`, hand-set value maps `W_mn = (n + 1) I` and
/// constant logits given by `intercepts`.
fn hand_model(intercepts: [f64; 9]) -> AttentionModel {
    let grid = PatchGrid::new(2, 6, 1, 2).unwrap();
    let mut r = rng(110);
    let patches = PatchedSeries::new(grid, 6, (0..6 * 3 * 4).map(|_| gaussian(&mut r)).collect()).unwrap();
    let pod = PatchPodModel::fit(&patches, 2).unwrap();
    let mut maps = Vec::new();
    for _m in 0..3 {
        for n in 0..3 {
            let s = (n + 1) as f64;
            maps.extend([s, 0.0, 0.0, s]);
        }
    }
    AttentionModel::from_parts(pod, maps, vec![0.0; 18], intercepts.to_vec(), vec![1.0; 9], TrainOptions::default())
        .unwrap()
}

#[test]
fn single_candidate_gets_full_weight() {
    let model = hand_model([0.0; 9]);
    let z = vec![9.0, 9.0, 1.5, -2.0, 9.0, 9.0];
    let input = MaskedLatentSnapshot::new(z, 2, MaskSpec::new(vec![1], 3).unwrap()).unwrap();
    let out = predict_masked(&model, &input, true).unwrap();
    // Targets 0 and 2 see only source 1 with W = 2I.
    assert_eq!(out, vec![3.0, -4.0, 1.5, -2.0, 3.0, -4.0]);
}

#[test]
fn equal_logits_average_the_candidates() {
    let model = hand_model([0.7; 9]);
    let z = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let input = MaskedLatentSnapshot::new(z, 2, MaskSpec::new(vec![0, 2], 3).unwrap()).unwrap();
    let out = predict_masked(&model, &input, true).unwrap();
    // Target 1: 0.5 * (1 * z0) + 0.5 * (3 * z2).
    assert!(max_abs_diff(&out[2..4], &[0.5 * 1.0 + 0.5 * 15.0, 0.5 * 2.0 + 0.5 * 18.0]) < 1e-15);
    assert_eq!(&out[0..2], &[1.0, 2.0]);
}

#[test]
fn without_copy_through_observed_rows_are_predicted() {
    let mut b = [0.0; 9];
    b[1] = 2.0f64.ln(); // target 0 prefers source 1 two to one over source 2
    let model = hand_model(b);
    let z = vec![1.0, 1.0, 1.0, 0.0, 0.0, 1.0];
    let input = MaskedLatentSnapshot::new(z, 2, MaskSpec::full(3)).unwrap();
    let out = predict_masked(&model, &input, false).unwrap();
    let w = reference_softmax(&[f64::NEG_INFINITY, 2.0f64.ln(), 0.0]);
    let expected = [w[1] * 2.0 * 1.0 + w[2] * 3.0 * 0.0, w[1] * 2.0 * 0.0 + w[2] * 3.0 * 1.0];
    assert!(max_abs_diff(&out[0..2], &expected) < 1e-15);
}

#[test]
fn softmax_matches_reference_at_large_logits() {
    let got = softmax_row(&[1000.0, 999.0]).unwrap();
    let want = reference_softmax(&[1000.0, 999.0]);
    assert!(max_abs_diff(&got, &want) < 1e-15);
    let e = (-1.0f64).exp();
    assert!((got[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
    assert!(softmax_row(&[f64::NEG_INFINITY; 3]).is_err());
    assert!(softmax_row(&[0.0, f64::NAN]).is_err());
}
