//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::ops::Range;
use std::path::Path;

use lamp_core::datagen::{derive_seed, noise_variance, signal_power};
use lamp_core::format::{read_dataset, read_model, write_dataset, write_model};
use lamp_core::metrics::median;
use lamp_core::{
    add_noise, fit_gappy, generate, normalize, patchify, place_sensors, pred_loss, predictive_power, reconstruct,
    reconstruct_gappy, run_sweep, AttentionModel, ChaoticParams, FlowKind, FlowSpec, LaminarParams, MaskSpec,
    NoiseSpec, NormStats, PatchGrid, PatchPodModel, PowerMap, SnapshotSet, SweepConfig,
};
use log::info;
use serde_json::{json, Value};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::manifest::{Manifest, OutDir};
use crate::ppm::{component_plane, range, Image};

pub const DATASET_FILE: &str = "dataset.lampds";
pub const MODEL_FILE: &str = "model.lampm";
pub const POWER_MAP_FILE: &str = "power_map.csv";
const DS_FORMAT: &str = "LAMP-DS v1";
const MODEL_FORMAT: &str = "LAMP-MODEL v1";
/// Stream tag separating noise seeds from mask seeds.
const NOISE_STREAM: u64 = 0x006e_6f69_7365;

/// Runs one command; returns the files written.
pub fn run(command: &Command) -> CliResult<Vec<String>> {
    match command {
        Command::Generate(a) => cmd_generate(a, command),
        Command::Train(a) => cmd_train(a, command),
        Command::Reconstruct(a) => cmd_reconstruct(a, command),
        Command::Sweep(a) => cmd_sweep(a, command),
        Command::PowerMap(a) => cmd_power_map(a, command),
        Command::PlaceSensors(a) => cmd_place_sensors(a, command),
        Command::Gappy(a) => cmd_gappy(a, command),
        Command::Compare(a) => cmd_compare(a, command),
        Command::Replay(a) => cmd_replay(a),
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn with_path<T>(path: &Path, r: lamp_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| match CliError::from(e) {
        CliError::Io(msg) => CliError::io(path, msg),
        other => other,
    })
}

/// Reads a dataset in raw units (normalized files are mapped back).
pub fn load_dataset(path: &Path) -> CliResult<SnapshotSet> {
    let set = with_path(path, read_dataset(open(path)?))?;
    Ok(if set.norm_stats().is_some() { set.denormalize()? } else { set })
}

pub fn load_model(path: &Path) -> CliResult<AttentionModel> {
    with_path(path, read_model(open(path)?))
}

fn check_geometry(model: &AttentionModel, set: &SnapshotSet) -> CliResult<()> {
    let g = model.grid();
    if (g.height(), g.width(), g.components()) != (set.height(), set.width(), set.components()) {
        return Err(CliError::usage(format!(
            "model expects {}x{}x{} fields, dataset has {}x{}x{}",
            g.height(),
            g.width(),
            g.components(),
            set.height(),
            set.width(),
            set.components()
        )));
    }
    Ok(())
}

fn check_inputs(paths: &[&Path]) -> CliResult<()> {
    for p in paths {
        if !p.is_file() {
            return Err(CliError::io(p, "no such file"));
        }
    }
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn stats_json(stats: &NormStats) -> Value {
    json!({ "mean": stats.mean, "std": stats.std })
}

fn cmd_generate(a: &GenerateArgs, run: &Command) -> CliResult<Vec<String>> {
    let kind = match a.flow {
        Flow::Laminar => FlowKind::Laminar(LaminarParams {
            harmonics: a.harmonics,
            period: a.period,
            wavelength: a.wavelength,
            inert_border: a.inert_border,
            ..Default::default()
        }),
        Flow::Chaotic => FlowKind::Chaotic(ChaoticParams { modes: a.modes, ..Default::default() }),
    };
    let spec = FlowSpec { kind, height: a.height, width: a.width, snapshots: a.snapshots, seed: a.seed };
    let set = generate(&spec)?;
    let mut out = OutDir::create(&a.out.out_dir)?;
    let mut bytes = Vec::new();
    write_dataset(&mut bytes, &set)?;
    out.write(DATASET_FILE, &bytes)?;
    let (lo, hi) = range(set.data());
    info!("generated {}x{}x{} field, {} snapshots", set.height(), set.width(), set.components(), set.len());
    let diagnostics = json!({
        "shape": [set.len(), set.height(), set.width(), set.components()],
        "value_range": [lo, hi],
    });
    out.finish(run.clone(), &[DS_FORMAT], diagnostics)
}

/// Raw dataset with its split ranges.
struct Split {
    raw: SnapshotSet,
    train: Range<usize>,
    test: Range<usize>,
}

fn split_dataset(path: &Path, split: &SplitArgs) -> CliResult<Split> {
    let raw = load_dataset(path)?;
    let (train, test) = split.spec().ranges(raw.len())?;
    Ok(Split { raw, train, test })
}

fn pair_loss_summary(model: &AttentionModel) -> Value {
    let n = model.n_patches();
    let losses: Vec<f64> = (0..n)
        .flat_map(|m| (0..n).filter(move |&k| k != m).map(move |k| (m, k)))
        .map(|(m, k)| model.pair_loss(m, k))
        .collect();
    if losses.is_empty() {
        return Value::Null;
    }
    let (lo, hi) = range(&losses);
    json!({
        "min": lo,
        "median": median(&losses),
        "mean": losses.iter().sum::<f64>() / losses.len() as f64,
        "max": hi,
    })
}

fn cmd_train(a: &TrainArgs, run: &Command) -> CliResult<Vec<String>> {
    check_inputs(&[&a.dataset])?;
    let data = split_dataset(&a.dataset, &a.split)?;
    PatchGrid::for_set(&data.raw, a.patch_size)?;
    let normalized = normalize(&data.raw, data.train.clone())?;
    let train = patchify(&normalized.slice(data.train.clone())?, a.patch_size)?;
    let test = patchify(&normalized.slice(data.test.clone())?, a.patch_size)?;
    let pod = PatchPodModel::fit(&train, a.latent_dim)?;
    let latent = pod.encode(&train)?;
    let (ae_train, ae_test) = (pod.ae_loss(&train)?, pod.ae_loss(&test)?);
    let model = AttentionModel::fit(pod, &latent, a.regression.options())?;
    info!("trained P={} N_e={}: ae_loss train {ae_train:e}, test {ae_test:e}", a.patch_size, a.latent_dim);

    let mut out = OutDir::create(&a.out.out_dir)?;
    let mut bytes = Vec::new();
    write_model(&mut bytes, &model)?;
    out.write(MODEL_FILE, &bytes)?;
    let diagnostics = json!({
        "ae_loss_train": ae_train,
        "ae_loss_test": ae_test,
        "pair_loss": pair_loss_summary(&model),
        "n_patches": model.n_patches(),
        "train_range": [data.train.start, data.train.end],
        "test_range": [data.test.start, data.test.end],
        "normalization": stats_json(model.pod().norm_stats()),
        "model_bytes": bytes.len(),
    });
    out.finish(run.clone(), &[DS_FORMAT, MODEL_FORMAT], diagnostics)
}

pub fn power_map_csv(map: &PowerMap) -> String {
    let mut s = String::from("patch,row,col,power\n");
    for r in 0..map.rows() {
        for c in 0..map.cols() {
            let _ = writeln!(s, "{},{r},{c},{}", r * map.cols() + c, map.get(r, c));
        }
    }
    s
}

pub fn read_power_map(path: &Path) -> CliResult<PowerMap> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |line: usize, what: &str| CliError::io(path, format!("line {line}: {what}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "patch,row,col,power")) => {}
        _ => return Err(bad(1, "expected header `patch,row,col,power`")),
    }
    let mut cells = Vec::new();
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(i + 1, "expected 4 fields"));
        }
        let idx = |s: &str| s.trim().parse::<usize>().map_err(|_| bad(i + 1, "bad index"));
        let power: f64 = f[3].trim().parse().map_err(|_| bad(i + 1, "bad power value"))?;
        cells.push((idx(f[0])?, idx(f[1])?, idx(f[2])?, power));
    }
    let rows = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let cols = cells.iter().map(|c| c.2 + 1).max().unwrap_or(0);
    for (k, &(n, r, c, _)) in cells.iter().enumerate() {
        if n != k || n != r * cols + c {
            return Err(bad(k + 2, "patches must be listed in row-major order"));
        }
    }
    with_path(path, PowerMap::new(rows, cols, cells.iter().map(|c| c.3).collect()))
}

/// One mask and the seed it was drawn with (`None` for deterministic
/// placements).
struct Draw {
    mask: MaskSpec,
    seed: Option<u64>,
}

fn mask_plan(a: &MaskArgs, grid: &PatchGrid, model: Option<&AttentionModel>) -> CliResult<Vec<Draw>> {
    let n = grid.n_patches();
    let k = MaskSpec::count_for_coverage(n, a.coverage)?;
    if let Some(path) = &a.sensors_from {
        let map = read_power_map(path)?;
        if (map.rows(), map.cols()) != (grid.rows(), grid.cols()) {
            return Err(CliError::usage(format!(
                "power map is {}x{} patches, grid is {}x{}",
                map.rows(),
                map.cols(),
                grid.rows(),
                grid.cols()
            )));
        }
        return Ok(vec![Draw { mask: place_sensors(&map, k)?, seed: None }]);
    }
    match a.placement {
        Placement::TopPower => {
            let model = model.ok_or_else(|| {
                CliError::usage("top-power placement needs a trained model; pass --sensors-from <power_map.csv>")
            })?;
            Ok(vec![Draw { mask: place_sensors(&predictive_power(model), k)?, seed: None }])
        }
        Placement::Random => {
            if a.arrangements == 0 {
                return Err(CliError::usage("--arrangements must be at least 1"));
            }
            (0..a.arrangements as u64)
                .map(|i| {
                    let seed = derive_seed(a.seed, i);
                    Ok(Draw { mask: MaskSpec::random(n, k, seed)?, seed: Some(seed) })
                })
                .collect()
        }
    }
}

/// Masked, optionally noisy input in raw units and its noise variance in
/// standardized units.
fn noisy_input(
    a: &MaskArgs,
    draw: &Draw,
    test_raw: &SnapshotSet,
    p: usize,
    stats: &NormStats,
) -> CliResult<(SnapshotSet, f64)> {
    match a.snr_db.filter(|s| s.is_finite()) {
        None => Ok((test_raw.clone(), 0.0)),
        Some(snr) => {
            let seed = derive_seed(draw.seed.unwrap_or(a.seed), NOISE_STREAM);
            let noisy = add_noise(test_raw, &draw.mask, p, &NoiseSpec { snr_db: snr, seed })?;
            let inv_var = stats.std.iter().map(|s| 1.0 / (s * s)).sum::<f64>() / stats.std.len() as f64;
            Ok((noisy, noise_variance(signal_power(test_raw, &draw.mask, p)?, snr)? * inv_var))
        }
    }
}

/// Truth, masked input and reconstructions of one snapshot component on
/// the truth's color range.
fn panels(
    img: &ImageArgs,
    grid: &PatchGrid,
    mask: &MaskSpec,
    truth: &SnapshotSet,
    input: &SnapshotSet,
    outputs: &[&SnapshotSet],
) -> CliResult<(Image, (f64, f64))> {
    let (w, h) = (truth.width(), truth.height());
    let plane = component_plane(truth, img.snapshot, img.component)?;
    let (lo, hi) = range(&plane);
    let mut shown = vec![Image::heatmap(w, h, &plane, lo, hi)];
    let mut masked = component_plane(input, img.snapshot, img.component)?;
    for n in (0..grid.n_patches()).filter(|&n| !mask.is_unmasked(n)) {
        let (y0, x0) = grid.origin(n);
        for y in y0..y0 + grid.patch_size() {
            masked[y * w + x0..y * w + x0 + grid.patch_size()].iter_mut().for_each(|v| *v = f64::NAN);
        }
    }
    let mut input_img = Image::heatmap(w, h, &masked, lo, hi);
    input_img.outline_masked(grid, mask);
    shown.push(input_img);
    for field in outputs {
        shown.push(Image::heatmap(w, h, &component_plane(field, img.snapshot, img.component)?, lo, hi));
    }
    Ok((Image::side_by_side(&shown), (lo, hi)))
}

fn loss_table(header: &str, rows: &[(Option<u64>, usize, Vec<f64>)]) -> String {
    let mut s = format!("arrangement,mask_seed,unmasked,{header}\n");
    for (i, (seed, k, losses)) in rows.iter().enumerate() {
        let seed = seed.map(|v| v.to_string()).unwrap_or_default();
        let vals: Vec<String> = losses.iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(s, "{i},{seed},{k},{}", vals.join(","));
    }
    s
}

fn cmd_reconstruct(a: &ReconstructArgs, run: &Command) -> CliResult<Vec<String>> {
    check_inputs(&[&a.dataset, &a.model])?;
    let model = load_model(&a.model)?;
    let data = split_dataset(&a.dataset, &a.split)?;
    check_geometry(&model, &data.raw)?;
    let grid = *model.grid();
    let stats = model.pod().norm_stats().clone();
    let test_raw = data.raw.slice(data.test.clone())?;
    let truth = test_raw.apply_norm(&stats)?;
    let draws = mask_plan(&a.mask, &grid, Some(&model))?;
    let ae_floor = model.pod().ae_loss(&patchify(&truth, grid.patch_size())?)?;

    let mut rows = Vec::new();
    let mut variances = Vec::new();
    let mut first = None;
    for draw in &draws {
        let (input, variance) = noisy_input(&a.mask, draw, &test_raw, grid.patch_size(), &stats)?;
        let rec = reconstruct(&model, &input, &draw.mask, !a.no_copy_through)?;
        rows.push((draw.seed, draw.mask.unmasked().len(), vec![pred_loss(&rec, &truth)?]));
        variances.push(variance);
        if first.is_none() {
            first = Some((input.apply_norm(&stats)?, rec));
        }
    }
    let losses: Vec<f64> = rows.iter().map(|r| r.2[0]).collect();
    let mut out = OutDir::create(&a.out.out_dir)?;
    out.write("reconstruct.csv", loss_table("pred_loss", &rows).as_bytes())?;
    let (input, rec) = first.expect("at least one draw");
    let (image, (lo, hi)) = panels(&a.image, &grid, &draws[0].mask, &truth, &input, &[&rec])?;
    out.write("reconstruct.ppm", &image.to_ppm())?;
    let diagnostics = json!({
        "median_pred_loss": median(&losses),
        "ae_loss_test": ae_floor,
        "noise_variance": median(&variances),
        "image_panels": ["truth", "input", "lamp"],
        "image_range": [lo, hi],
        "unmasked_first": draws[0].mask.unmasked(),
    });
    info!("median pred_loss {:e} over {} arrangement(s)", median(&losses), draws.len());
    out.finish(run.clone(), &[DS_FORMAT, MODEL_FORMAT], diagnostics)
}

/// `log10` median loss on a `P x N_e` grid, one block per cell.
fn sweep_heatmap(values: &[Vec<f64>]) -> Image {
    const BLOCK: usize = 16;
    let (rows, cols) = (values.len(), values.first().map_or(0, |r| r.len()));
    let logs: Vec<f64> = values.iter().flatten().map(|v| v.log10()).collect();
    let finite: Vec<f64> = logs.iter().copied().filter(|v| v.is_finite()).collect();
    let (lo, hi) = range(&finite);
    let mut img = Image::heatmap(cols, rows, &logs, lo, hi);
    for (px, v) in img.pixels.iter_mut().zip(&logs) {
        if !v.is_finite() {
            *px = crate::ppm::OUTLINE;
        }
    }
    img.scaled(BLOCK)
}

fn snr_label(snr: f64) -> String {
    if snr.is_finite() {
        format!("{snr}")
    } else {
        "inf".to_string()
    }
}

fn cmd_sweep(a: &SweepArgs, run: &Command) -> CliResult<Vec<String>> {
    check_inputs(&[&a.dataset])?;
    let raw = load_dataset(&a.dataset)?;
    let config = SweepConfig {
        split: a.split.spec(),
        patch_sizes: a.patch_sizes.clone(),
        latent_dims: a.latent_dims.clone(),
        snr_db: a.snr_db.clone(),
        coverages: a.coverages.clone(),
        n_arrangements: a.arrangements,
        seed: a.seed,
        options: a.regression.options(),
        copy_through: !a.no_copy_through,
        budget_bytes: Some(a.budget_bytes as u128),
    };
    let result = run_sweep(&raw, &config)?;
    let mut out = OutDir::create(&a.out.out_dir)?;
    out.write("sweep.csv", result.to_csv().as_bytes())?;
    let mut best = Vec::new();
    for &snr in &a.snr_db {
        for &cov in &a.coverages {
            let grid: Vec<Vec<f64>> = a
                .patch_sizes
                .iter()
                .map(|&p| {
                    a.latent_dims
                        .iter()
                        .map(|&ne| result.cell(p, ne, snr, cov).map_or(f64::NAN, |c| c.median_pred_loss))
                        .collect()
                })
                .collect();
            let name = format!("sweep_snr{}_cov{cov}.ppm", snr_label(snr));
            out.write(&name, &sweep_heatmap(&grid).to_ppm())?;
            let winner = result
                .cells
                .iter()
                .filter(|c| c.snr_db == snr && c.coverage == cov && c.median_pred_loss.is_finite())
                .min_by(|x, y| x.median_pred_loss.total_cmp(&y.median_pred_loss));
            if let Some(c) = winner {
                best.push(json!({
                    "snr_db": snr_label(snr),
                    "coverage": cov,
                    "P": c.patch_size,
                    "N_e": c.latent_dim,
                    "median_pred_loss": c.median_pred_loss,
                }));
            }
        }
    }
    let skipped: Vec<Value> = result
        .cells
        .iter()
        .filter_map(|c| c.skipped.as_ref().map(|r| (c, r)))
        .map(|(c, r)| json!({ "P": c.patch_size, "N_e": c.latent_dim, "snr_db": snr_label(c.snr_db), "coverage": c.coverage, "reason": r }))
        .collect();
    let diagnostics = json!({
        "cells": result.cells.len(),
        "best": best,
        "skipped": skipped,
        "heatmap": "rows are patch sizes, columns latent dims, color is log10 median loss, black is skipped",
    });
    out.finish(run.clone(), &[DS_FORMAT], diagnostics)
}

/// Predictive power drawn at field resolution, one block per patch.
fn power_image(map: &PowerMap, grid: &PatchGrid) -> Image {
    let (lo, hi) = (map.min(), map.max());
    let coarse = Image::heatmap(map.cols(), map.rows(), map.values(), lo, hi);
    coarse.scaled(grid.patch_size())
}

fn cmd_power_map(a: &PowerMapArgs, run: &Command) -> CliResult<Vec<String>> {
    check_inputs(&[&a.model])?;
    let model = load_model(&a.model)?;
    let map = predictive_power(&model);
    let mut out = OutDir::create(&a.out.out_dir)?;
    out.write(POWER_MAP_FILE, power_map_csv(&map).as_bytes())?;
    out.write("power_map.ppm", &power_image(&map, model.grid()).to_ppm())?;
    let diagnostics = json!({ "rows": map.rows(), "cols": map.cols(), "range": [map.min(), map.max()] });
    out.finish(run.clone(), &[MODEL_FORMAT], diagnostics)
}

fn cmd_place_sensors(a: &PlaceSensorsArgs, run: &Command) -> CliResult<Vec<String>> {
    check_inputs(&[&a.model])?;
    let model = load_model(&a.model)?;
    let map = predictive_power(&model);
    let k = MaskSpec::count_for_coverage(model.n_patches(), a.coverage)?;
    let mask = place_sensors(&map, k)?;
    let mut ranked: Vec<usize> = mask.unmasked().to_vec();
    ranked.sort_by(|&x, &y| map.values()[y].total_cmp(&map.values()[x]).then(x.cmp(&y)));
    let mut csv = String::from("rank,patch,row,col,power\n");
    for (rank, &n) in ranked.iter().enumerate() {
        let _ = writeln!(csv, "{rank},{n},{},{},{}", n / map.cols(), n % map.cols(), map.values()[n]);
    }
    let mut out = OutDir::create(&a.out.out_dir)?;
    out.write("sensors.csv", csv.as_bytes())?;
    let mut img = power_image(&map, model.grid());
    img.outline_masked(model.grid(), &mask);
    out.write("sensors.ppm", &img.to_ppm())?;
    let diagnostics = json!({ "sensors": k, "coverage": mask.coverage(), "unmasked": mask.unmasked() });
    out.finish(run.clone(), &[MODEL_FORMAT], diagnostics)
}

fn cmd_gappy(a: &GappyArgs, run: &Command) -> CliResult<Vec<String>> {
    check_inputs(&[&a.dataset])?;
    let rank = a.rank.or(a.latent_dim).ok_or_else(|| CliError::usage("gappy needs --rank or --latent-dim"))?;
    let data = split_dataset(&a.dataset, &a.split)?;
    let grid = PatchGrid::for_set(&data.raw, a.patch_size)?;
    let normalized = normalize(&data.raw, data.train.clone())?;
    let stats = normalized.norm_stats().cloned().expect("normalize attaches stats");
    let model = fit_gappy(&normalized.slice(data.train.clone())?, rank)?;
    let test_raw = data.raw.slice(data.test.clone())?;
    let truth = normalized.slice(data.test.clone())?;
    let draws = mask_plan(&a.mask, &grid, None)?;
    let floor = pred_loss(&model.project(&truth)?, &truth)?;

    let mut rows = Vec::new();
    let mut first = None;
    for draw in &draws {
        let (input, _) = noisy_input(&a.mask, draw, &test_raw, a.patch_size, &stats)?;
        let rec = reconstruct_gappy(&model, &input, &draw.mask, a.patch_size)?;
        rows.push((draw.seed, draw.mask.unmasked().len(), vec![pred_loss(&rec, &truth)?]));
        if first.is_none() {
            first = Some((input.apply_norm(&stats)?, rec));
        }
    }
    let losses: Vec<f64> = rows.iter().map(|r| r.2[0]).collect();
    let mut out = OutDir::create(&a.out.out_dir)?;
    out.write("gappy.csv", loss_table("pred_loss", &rows).as_bytes())?;
    let (input, rec) = first.expect("at least one draw");
    let (image, (lo, hi)) = panels(&a.image, &grid, &draws[0].mask, &truth, &input, &[&rec])?;
    out.write("gappy.ppm", &image.to_ppm())?;
    let diagnostics = json!({
        "rank": rank,
        "median_pred_loss": median(&losses),
        "projection_loss_test": floor,
        "image_panels": ["truth", "input", "gappy"],
        "image_range": [lo, hi],
    });
    out.finish(run.clone(), &[DS_FORMAT], diagnostics)
}

fn cmd_compare(a: &CompareArgs, run: &Command) -> CliResult<Vec<String>> {
    check_inputs(&[&a.dataset, &a.model])?;
    let model = load_model(&a.model)?;
    let data = split_dataset(&a.dataset, &a.split)?;
    check_geometry(&model, &data.raw)?;
    let grid = *model.grid();
    let p = grid.patch_size();
    let stats = model.pod().norm_stats().clone();
    let rank = a.rank.unwrap_or(model.latent_dim());
    let gappy = fit_gappy(&data.raw.slice(data.train.clone())?.apply_norm(&stats)?, rank)?;
    let test_raw = data.raw.slice(data.test.clone())?;
    let truth = test_raw.apply_norm(&stats)?;
    let draws = mask_plan(&a.mask, &grid, Some(&model))?;

    let mut rows = Vec::new();
    let mut first = None;
    for draw in &draws {
        let (input, _) = noisy_input(&a.mask, draw, &test_raw, p, &stats)?;
        let lamp = reconstruct(&model, &input, &draw.mask, !a.no_copy_through)?;
        let gap = reconstruct_gappy(&gappy, &input, &draw.mask, p)?;
        let (l, g) = (pred_loss(&lamp, &truth)?, pred_loss(&gap, &truth)?);
        rows.push((draw.seed, draw.mask.unmasked().len(), vec![l, g, l / g]));
        if first.is_none() {
            first = Some((input.apply_norm(&stats)?, lamp, gap));
        }
    }
    let lamp_losses: Vec<f64> = rows.iter().map(|r| r.2[0]).collect();
    let gappy_losses: Vec<f64> = rows.iter().map(|r| r.2[1]).collect();
    let (lm, gm) = (median(&lamp_losses), median(&gappy_losses));
    let mut csv = loss_table("lamp_loss,gappy_loss,ratio", &rows);
    let _ = writeln!(csv, "median,,,{},{},{}", fmt_f64(lm), fmt_f64(gm), fmt_f64(lm / gm));
    let mut out = OutDir::create(&a.out.out_dir)?;
    out.write("compare.csv", csv.as_bytes())?;
    let (input, lamp, gap) = first.expect("at least one draw");
    let (image, (lo, hi)) = panels(&a.image, &grid, &draws[0].mask, &truth, &input, &[&lamp, &gap])?;
    out.write("compare.ppm", &image.to_ppm())?;
    info!("lamp {lm:e} vs gappy {gm:e} (ratio {:.3})", lm / gm);
    let diagnostics = json!({
        "median_lamp_loss": lm,
        "median_gappy_loss": gm,
        "ratio": lm / gm,
        "gappy_rank": rank,
        "image_panels": ["truth", "input", "lamp", "gappy"],
        "image_range": [lo, hi],
    });
    out.finish(run.clone(), &[DS_FORMAT, MODEL_FORMAT], diagnostics)
}

/// Swaps the output directory of a recorded command.
fn retarget(mut command: Command, out_dir: &Path) -> CliResult<Command> {
    let out = match &mut command {
        Command::Generate(a) => &mut a.out,
        Command::Train(a) => &mut a.out,
        Command::Reconstruct(a) => &mut a.out,
        Command::Sweep(a) => &mut a.out,
        Command::PowerMap(a) => &mut a.out,
        Command::PlaceSensors(a) => &mut a.out,
        Command::Gappy(a) => &mut a.out,
        Command::Compare(a) => &mut a.out,
        Command::Replay(_) => return Err(CliError::usage("a manifest cannot record a replay")),
    };
    out.out_dir = out_dir.to_path_buf();
    Ok(command)
}

fn cmd_replay(a: &ReplayArgs) -> CliResult<Vec<String>> {
    check_inputs(&[&a.manifest])?;
    let manifest = Manifest::read(&a.manifest)?;
    info!("replaying manifest {} into {}", a.manifest.display(), a.out.out_dir.display());
    run(&retarget(manifest.run, &a.out.out_dir)?)
}
