//! Handwritten-digit experiment: synthetic digits from migrated control
//! points, an autoencoder trained on (synthetic, real) HOG pairs, and SVM
//! scores for each choice of training set.

use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::Serialize;

use smcae_core::eval::{
    cross_validate, default_grids, f1_score, sq_distances, svm_train_with_distances, CvOptions, CvOutcome, MetricReport,
    SvmParams,
};
use smcae_core::hog::hog_matrix;
use smcae_core::smcae::train_stack;
use smcae_core::synthgen::{
    fit_mvn, rasterize, sample_shapes, BinaryImage, ClassTemplate, ShapeDistribution, ShapeModel, SynthConfig,
};
use smcae_core::{FeatureMatrix, GrayImage, HogConfig, MinMaxScaler, SmcaeConfig, SmcaeModel, Variant};

use crate::config::{ExperimentConfig, SvmConfig};
use crate::data::{load_bitmaps, LabeledBitmap, BITMAP_SIDE};
use crate::output::{CsvSink, Manifest, ResultRow};
use crate::{derive_seed, par_map};

pub const CLASSES: usize = 10;

/// Training sets compared on the fixed test set.
pub const TRAINING_SETS: [&str; 4] = ["real", "synthetic", "transformed", "real+transformed"];

pub fn load_digit_split(cfg: &ExperimentConfig) -> Result<(Vec<LabeledBitmap>, Vec<LabeledBitmap>)> {
    let mut train = load_bitmaps(&cfg.data.digits_train)?;
    let test = load_bitmaps(&cfg.data.digits_test)?;
    let cap = cfg.digits.max_train_per_class;
    if cap > 0 {
        let mut seen = [0usize; CLASSES];
        train.retain(|b| {
            seen[b.label] += 1;
            seen[b.label] <= cap
        });
    }
    Ok((train, test))
}

/// Per-class templates, migrated counterparts and fitted shape distributions.
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub templates: Vec<ClassTemplate>,
    /// Synthetic partner of every training bitmap, in input order.
    pub counterparts: Vec<BinaryImage>,
    pub shapes: Vec<ShapeModel>,
    /// `(initial, final)` overlap with the real bitmap.
    pub ious: Vec<(f64, f64)>,
    pub distributions: Vec<ShapeDistribution>,
}

impl Synthesis {
    pub fn mean_iou(&self) -> (f64, f64) {
        let n = self.ious.len().max(1) as f64;
        let (a, b) = self.ious.iter().fold((0.0, 0.0), |acc, (i, f)| (acc.0 + i, acc.1 + f));
        (a / n, b / n)
    }
}

fn by_class(items: &[LabeledBitmap]) -> Result<Vec<Vec<BinaryImage>>> {
    let mut out = vec![Vec::new(); CLASSES];
    for it in items {
        out[it.label].push(it.image.clone());
    }
    if let Some(c) = out.iter().position(|v| v.len() < 2) {
        bail!("digit class {c} has fewer than 2 training bitmaps");
    }
    Ok(out)
}

pub fn synthesize(train: &[LabeledBitmap], cfg: &SynthConfig, workers: usize) -> Result<Synthesis> {
    let t0 = Instant::now();
    let groups = by_class(train)?;
    let templates = par_map(workers, &groups, |imgs| Ok(ClassTemplate::build(imgs, cfg)?))?;
    info!("built {} class templates in {:.1?}", templates.len(), t0.elapsed());

    let t0 = Instant::now();
    let fits = par_map(workers, train, |b| Ok(templates[b.label].fit(&b.image, cfg)?))?;
    info!("migrated control points onto {} bitmaps in {:.1?}", fits.len(), t0.elapsed());

    let mut per_class: Vec<Vec<ShapeModel>> = vec![Vec::new(); CLASSES];
    for (b, f) in train.iter().zip(&fits) {
        per_class[b.label].push(f.shape.clone());
    }
    let distributions = per_class.iter().map(|s| fit_mvn(s)).collect::<smcae_core::Result<Vec<_>>>()?;
    Ok(Synthesis {
        templates,
        ious: fits.iter().map(|f| (f.initial_iou, f.iou)).collect(),
        counterparts: fits.iter().map(|f| f.image.clone()).collect(),
        shapes: fits.into_iter().map(|f| f.shape).collect(),
        distributions,
    })
}

/// `per_class` fresh digits of every class, class-major.
pub fn sample_digits(dists: &[ShapeDistribution], per_class: usize, seed: u64) -> Result<Vec<LabeledBitmap>> {
    let mut out = Vec::with_capacity(per_class * dists.len());
    for (label, d) in dists.iter().enumerate() {
        for s in sample_shapes(d, per_class, derive_seed(seed, label as u64))? {
            out.push(LabeledBitmap { image: rasterize(&s, BITMAP_SIDE, BITMAP_SIDE)?, label });
        }
    }
    Ok(out)
}

pub fn hog_of(images: &[BinaryImage], hog: &HogConfig) -> Result<FeatureMatrix> {
    let grays: Vec<GrayImage> = images.iter().map(BinaryImage::to_gray).collect();
    Ok(hog_matrix(&grays, hog)?)
}

fn labels_of(items: &[LabeledBitmap]) -> Vec<usize> {
    items.iter().map(|b| b.label).collect()
}

fn images_of(items: &[LabeledBitmap]) -> Vec<BinaryImage> {
    items.iter().map(|b| b.image.clone()).collect()
}

/// Scaled HOG features for everything derived from the real training set.
#[derive(Clone, Debug)]
pub struct DigitAssets {
    pub synthesis: Synthesis,
    pub scaler: MinMaxScaler,
    pub x_real: FeatureMatrix,
    pub y_real: Vec<usize>,
    /// Counterpart features, row-aligned with `x_real`.
    pub x_pair: FeatureMatrix,
    pub x_test: FeatureMatrix,
    pub y_test: Vec<usize>,
}

impl DigitAssets {
    pub fn build(
        train: &[LabeledBitmap],
        test: &[LabeledBitmap],
        synth: &SynthConfig,
        hog: &HogConfig,
        workers: usize,
    ) -> Result<Self> {
        let synthesis = synthesize(train, synth, workers)?;
        let real = hog_of(&images_of(train), hog)?;
        let (scaler, x_real) = MinMaxScaler::fit_transform(real.view())?;
        let x_pair = scaler.transform(hog_of(&synthesis.counterparts, hog)?.view())?;
        let x_test = if test.is_empty() {
            Array2::zeros((0, x_real.ncols()))
        } else {
            scaler.transform(hog_of(&images_of(test), hog)?.view())?
        };
        Ok(Self { synthesis, scaler, x_real, y_real: labels_of(train), x_pair, x_test, y_test: labels_of(test) })
    }

    /// Freshly sampled synthetic digits as scaled features.
    pub fn sample_features(&self, per_class: usize, seed: u64, hog: &HogConfig) -> Result<(FeatureMatrix, Vec<usize>)> {
        let digits = sample_digits(&self.synthesis.distributions, per_class, seed)?;
        let x = self.scaler.transform(hog_of(&images_of(&digits), hog)?.view())?;
        Ok((x, labels_of(&digits)))
    }

    pub fn train_model(&self, variant: Variant, cfg: &SmcaeConfig) -> Result<SmcaeModel> {
        let t0 = Instant::now();
        let mut m = train_stack(self.x_pair.view(), self.x_real.view(), variant, cfg)?;
        m.scaler = Some(self.scaler.clone());
        info!("{variant} trained in {:.1?} ({} iterations)", t0.elapsed(), m.total_iterations());
        Ok(m)
    }
}

/// Balanced subsample of at most `per_class` rows per label, in input order.
fn cap_per_class(y: &[usize], per_class: usize) -> Vec<usize> {
    let mut seen = [0usize; CLASSES];
    (0..y.len())
        .filter(|&i| {
            seen[y[i]] += 1;
            per_class == 0 || seen[y[i]] <= per_class
        })
        .collect()
}

pub fn select_svm(x: ArrayView2<'_, f64>, y: &[usize], svm: &SvmConfig, seed: u64) -> Result<CvOutcome> {
    let idx = cap_per_class(y, svm.cv_per_class);
    let xs = x.select(Axis(0), &idx);
    let ys: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
    let (dc, dg) = default_grids(x.ncols());
    let c_grid = if svm.c_grid.is_empty() { dc } else { svm.c_grid.clone() };
    let g_grid = if svm.g_grid.is_empty() { dg } else { svm.g_grid.clone() };
    let opts = CvOptions { folds: svm.folds, seed, averaging: svm.averaging, tolerance: svm.tolerance };
    let t0 = Instant::now();
    let out = cross_validate(xs.view(), &ys, &c_grid, &g_grid, &opts)?;
    info!("grid search picked c={} g={} (cv f1 {:.4}) in {:.1?}", out.c_box, out.g_rbf, out.mean_f1, t0.elapsed());
    Ok(out)
}

pub fn svm_params(cv: &CvOutcome, svm: &SvmConfig) -> SvmParams {
    SvmParams { tolerance: svm.tolerance, ..SvmParams::new(cv.c_box, cv.g_rbf) }
}

/// Test F1 of an SVM trained on `x` with precomputed squared distances.
fn score_with_distances(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    d: ArrayView2<'_, f64>,
    assets: &DigitAssets,
    p: &SvmParams,
    svm: &SvmConfig,
) -> Result<f64> {
    let model = svm_train_with_distances(x, y, d, p)?;
    let pred = model.predict(assets.x_test.view())?;
    Ok(f1_score(&pred, &assets.y_test, svm.averaging)?)
}

pub fn score(x: ArrayView2<'_, f64>, y: &[usize], assets: &DigitAssets, p: &SvmParams, svm: &SvmConfig) -> Result<f64> {
    let d = sq_distances(x, x)?;
    score_with_distances(x, y, d.view(), assets, p, svm)
}

/// Test F1 for each of [`TRAINING_SETS`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainingSetScores {
    pub real: f64,
    pub synthetic: f64,
    pub transformed: f64,
    pub real_plus_transformed: f64,
    pub synthetic_count: usize,
}

impl TrainingSetScores {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "real" => Some(self.real),
            "synthetic" => Some(self.synthetic),
            "transformed" => Some(self.transformed),
            "real+transformed" => Some(self.real_plus_transformed),
            _ => None,
        }
    }
}

pub fn score_training_sets(
    assets: &DigitAssets,
    model: &SmcaeModel,
    x_syn: ArrayView2<'_, f64>,
    y_syn: &[usize],
    p: &SvmParams,
    svm: &SvmConfig,
) -> Result<TrainingSetScores> {
    let x_tr = model.transform(x_syn)?;
    let real = score(assets.x_real.view(), &assets.y_real, assets, p, svm)?;
    let synthetic = score(x_syn, y_syn, assets, p, svm)?;
    let transformed = score(x_tr.view(), y_syn, assets, p, svm)?;
    let x_both = concatenate(Axis(0), &[assets.x_real.view(), x_tr.view()])?;
    let y_both: Vec<usize> = assets.y_real.iter().chain(y_syn).copied().collect();
    let real_plus_transformed = score(x_both.view(), &y_both, assets, p, svm)?;
    Ok(TrainingSetScores { real, synthetic, transformed, real_plus_transformed, synthetic_count: y_syn.len() })
}

/// Row indices taking the first `total` samples spread over the classes of a
/// class-major block with `per_class` rows per class.
fn schedule_rows(total: usize, per_class: usize, offset: usize) -> Vec<usize> {
    let mut rows = Vec::with_capacity(total);
    for c in 0..CLASSES {
        let take = total / CLASSES + usize::from(c < total % CLASSES);
        rows.extend((0..take.min(per_class)).map(|i| offset + c * per_class + i));
    }
    rows
}

/// F1 of real + transformed synthetic data for each schedule count, one
/// independent synthetic draw per replicate seed.
pub fn count_sweep(
    assets: &DigitAssets,
    model: &SmcaeModel,
    schedule: &[usize],
    replicate_seed: u64,
    hog: &HogConfig,
    p: &SvmParams,
    svm: &SvmConfig,
) -> Result<Vec<(usize, f64)>> {
    let max = schedule.iter().copied().max().unwrap_or(0);
    let per_class = max.div_ceil(CLASSES);
    let (x_syn, y_syn) = assets.sample_features(per_class, replicate_seed, hog)?;
    let x_tr = model.transform(x_syn.view())?;
    let pool = concatenate(Axis(0), &[assets.x_real.view(), x_tr.view()])?;
    let y_pool: Vec<usize> = assets.y_real.iter().chain(&y_syn).copied().collect();
    let d_pool = sq_distances(pool.view(), pool.view())?;
    let n_real = assets.y_real.len();
    let mut out = Vec::with_capacity(schedule.len());
    for &count in schedule {
        let rows: Vec<usize> = (0..n_real).chain(schedule_rows(count, per_class, n_real)).collect();
        let x = pool.select(Axis(0), &rows);
        let y: Vec<usize> = rows.iter().map(|&i| y_pool[i]).collect();
        let d = d_pool.select(Axis(0), &rows).select(Axis(1), &rows);
        let f1 = score_with_distances(x.view(), &y, d.view(), assets, p, svm)?;
        info!("count sweep seed {replicate_seed}: {count} synthetic -> f1 {f1:.4}");
        out.push((count, f1));
    }
    Ok(out)
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Clone, Debug)]
pub struct DigitReport {
    pub rows: Vec<ResultRow>,
    pub metrics: MetricReport,
    pub scores: TrainingSetScores,
    pub cv: CvOutcome,
    pub iterations: usize,
}

fn row(study: &str, variant: Variant, set: &str, count: usize, seed: u64, metric: &str, value: f64) -> ResultRow {
    ResultRow {
        study: study.into(),
        variant: variant.to_string(),
        training_set: set.into(),
        count,
        seed,
        metric: metric.into(),
        value,
    }
}

/// Full digit experiment. Writes `results.csv`, `metrics.json` and
/// `manifest.json` to the output directory.
pub fn run_digits_experiment(cfg: &ExperimentConfig) -> Result<DigitReport> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let csv_path = dir.join("results.csv");
    let mut sink = CsvSink::create(&csv_path)?;
    let v = cfg.variant;
    let seed = cfg.seed;

    let (train, test) = load_digit_split(cfg)?;
    if test.is_empty() {
        bail!("digit test set is empty");
    }
    info!("{} training and {} test bitmaps", train.len(), test.len());
    let assets = DigitAssets::build(&train, &test, &cfg.digits.synth, &cfg.hog, cfg.workers)?;
    let (iou0, iou1) = assets.synthesis.mean_iou();
    sink.push(row("synthesis", v, "counterparts", train.len(), seed, "mean_initial_iou", iou0))?;
    sink.push(row("synthesis", v, "counterparts", train.len(), seed, "mean_iou", iou1))?;

    let model = assets.train_model(v, &cfg.smcae_for_seed(seed))?;
    sink.push(row("model", v, "pairs", train.len(), seed, "iterations", model.total_iterations() as f64))?;

    let cv = select_svm(assets.x_real.view(), &assets.y_real, &cfg.svm, seed)?;
    let p = svm_params(&cv, &cfg.svm);
    sink.push(row("svm", v, "real", assets.y_real.len(), seed, "c_box", cv.c_box))?;
    sink.push(row("svm", v, "real", assets.y_real.len(), seed, "g_rbf", cv.g_rbf))?;

    let (x_syn, y_syn) = assets.sample_features(cfg.digits.synthetic_per_class, seed, &cfg.hog)?;
    let scores = score_training_sets(&assets, &model, x_syn.view(), &y_syn, &p, &cfg.svm)?;
    for set in TRAINING_SETS {
        let count = if set == "real" { 0 } else { scores.synthetic_count };
        sink.push(row("training-set", v, set, count, seed, "f1", scores.get(set).expect("known set")))?;
    }

    if cfg.digits.sweep {
        for r in 0..cfg.digits.replicates as u64 {
            let rs = seed + r;
            for (count, f1) in count_sweep(&assets, &model, &cfg.digits.schedule, derive_seed(rs, 1 << 32), &cfg.hog, &p, &cfg.svm)? {
                sink.push(row("synthetic-count", v, "real+transformed", count, rs, "f1", f1))?;
            }
        }
    }

    let (csv_path, rows) = sink.finish()?;
    let mut metrics = MetricReport::new();
    for set in TRAINING_SETS {
        metrics.insert(format!("f1.{set}"), scores.get(set).expect("known set"));
    }
    metrics
        .insert("iterations", model.total_iterations() as f64)
        .insert("svm.c_box", cv.c_box)
        .insert("svm.g_rbf", cv.g_rbf)
        .insert("synthesis.mean_iou", iou1);
    let metrics_path = write_metrics(&dir, &metrics)?;

    let mut manifest = Manifest::new("eval-digits", cfg);
    manifest.feature_source = Some("hog-bitmaps".into());
    manifest.add_output(&dir, &csv_path)?;
    manifest.add_output(&dir, &metrics_path)?;
    manifest.write(&dir)?;
    Ok(DigitReport { rows, metrics, scores, cv, iterations: model.total_iterations() })
}

pub fn write_metrics(dir: &Path, metrics: &MetricReport) -> Result<std::path::PathBuf> {
    let path = dir.join("metrics.json");
    let text = serde_json::to_string_pretty(metrics)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Per-class counts of a label vector, for log lines and sanity checks.
pub fn class_counts(y: &[usize]) -> Result<[usize; CLASSES]> {
    let mut out = [0; CLASSES];
    for &l in y {
        *out.get_mut(l).ok_or_else(|| anyhow!("label {l} outside 0..9"))? += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_rows_spread_over_classes() {
        let rows = schedule_rows(23, 5, 100);
        assert_eq!(rows.len(), 23);
        assert_eq!(&rows[..3], &[100, 101, 102]);
        assert_eq!(rows[3], 105);
        assert_eq!(*rows.last().unwrap(), 100 + 9 * 5 + 1);
    }

    #[test]
    fn slope_of_a_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        assert!((ls_slope(&pts) - 2.0).abs() < 1e-12);
        assert_eq!(ls_slope(&[(1.0, 3.0), (1.0, 4.0)]), 0.0);
    }

    #[test]
    fn cap_keeps_input_order() {
        assert_eq!(cap_per_class(&[1, 1, 2, 1, 2], 1), vec![0, 2]);
        assert_eq!(cap_per_class(&[1, 1], 0), vec![0, 1]);
    }
}
