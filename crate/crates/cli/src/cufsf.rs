//! Sketch-to-photo retrieval: HOG of face images, a transform from the
//! sketch domain toward the photo domain, nearest-neighbour matching.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use ndarray::{concatenate, ArrayView2, Axis};
use serde::Serialize;

use smcae_core::eval::{distances, rank1, roc_and_auc, vr_at_far, MetricReport, RocPoint, ScoredPairs};
use smcae_core::hog::{hog_matrix, resize};
use smcae_core::smcae::train_stack;
use smcae_core::{FeatureMatrix, GrayImage, HogConfig, MinMaxScaler, SmcaeConfig, SmcaeModel, Variant};

use crate::config::ExperimentConfig;
use crate::data::{load_image_pairs, FaceSplit};
use crate::digits::write_metrics;
use crate::output::{CsvSink, Manifest, ResultRow};

/// False acceptance rate at which the verification rate is reported.
pub const FAR: f64 = 0.001;

pub const ROC_HEADER: &str = "variant,threshold,far,vr";

/// Scaled features of both partitions. Rows of `*_sketch` and `*_photo`
/// with the same index belong to one person.
#[derive(Clone, Debug)]
pub struct FaceFeatures {
    pub train_sketch: FeatureMatrix,
    pub train_photo: FeatureMatrix,
    pub test_sketch: FeatureMatrix,
    pub test_photo: FeatureMatrix,
}

impl FaceFeatures {
    /// Fits a [0.1, 0.9] scaler on every training row of both domains and
    /// applies it to all four blocks.
    pub fn from_raw(
        train_sketch: ArrayView2<'_, f64>,
        train_photo: ArrayView2<'_, f64>,
        test_sketch: ArrayView2<'_, f64>,
        test_photo: ArrayView2<'_, f64>,
    ) -> Result<(Self, MinMaxScaler)> {
        if train_sketch.nrows() != train_photo.nrows() || test_sketch.nrows() != test_photo.nrows() {
            bail!("sketch and photo rows must pair up");
        }
        let both = concatenate(Axis(0), &[train_sketch, train_photo])?;
        let scaler = MinMaxScaler::fit(both.view())?;
        let f = Self {
            train_sketch: scaler.transform(train_sketch)?,
            train_photo: scaler.transform(train_photo)?,
            test_sketch: scaler.transform(test_sketch)?,
            test_photo: scaler.transform(test_photo)?,
        };
        Ok((f, scaler))
    }

    pub fn from_split(split: &FaceSplit, size: usize, hog: &HogConfig) -> Result<(Self, MinMaxScaler)> {
        let feats = |imgs: &[GrayImage]| -> Result<FeatureMatrix> {
            let resized = imgs.iter().map(|i| resize(i, size, size)).collect::<smcae_core::Result<Vec<_>>>()?;
            Ok(hog_matrix(&resized, hog)?)
        };
        Self::from_raw(
            feats(&split.train.sketches)?.view(),
            feats(&split.train.photos)?.view(),
            feats(&split.test.sketches)?.view(),
            feats(&split.test.photos)?.view(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Retrieval {
    pub rank1: f64,
    pub auc: f64,
    pub vr: f64,
    pub roc: Vec<RocPoint>,
}

/// Scores queries against a gallery whose row `i` is the mate of query `i`.
pub fn retrieval(queries: ArrayView2<'_, f64>, gallery: ArrayView2<'_, f64>) -> Result<Retrieval> {
    let mates: Vec<usize> = (0..queries.nrows()).collect();
    let sp = ScoredPairs::from_distances(distances(queries, gallery)?.view(), &mates)?;
    let (roc, auc) = roc_and_auc(&sp)?;
    Ok(Retrieval { rank1: rank1(queries, gallery, &mates)?, auc, vr: vr_at_far(&sp, FAR)?, roc })
}

/// Trains `variant` on the training pairs and scores transformed test
/// sketches against the test photos.
pub fn train_and_score(f: &FaceFeatures, variant: Variant, cfg: &SmcaeConfig) -> Result<(SmcaeModel, Retrieval)> {
    let model = train_stack(f.train_sketch.view(), f.train_photo.view(), variant, cfg)?;
    let queries = model.transform(f.test_sketch.view())?;
    let r = retrieval(queries.view(), f.test_photo.view())?;
    Ok((model, r))
}

#[derive(Clone, Debug)]
pub struct CufsfReport {
    pub rows: Vec<ResultRow>,
    pub raw: Retrieval,
    pub transformed: Retrieval,
    pub iterations: usize,
}

#[derive(Serialize)]
struct RocRow<'a> {
    variant: &'a str,
    threshold: f64,
    far: f64,
    vr: f64,
}

fn retrieval_rows(variant: &str, n: usize, seed: u64, r: &Retrieval) -> Vec<ResultRow> {
    [("rank1", r.rank1), ("auc", r.auc), ("vr_at_far_0.001", r.vr)]
        .into_iter()
        .map(|(metric, value)| ResultRow {
            study: "cufsf".into(),
            variant: variant.into(),
            training_set: "test".into(),
            count: n,
            seed,
            metric: metric.into(),
            value,
        })
        .collect()
}

/// Checks that the user-supplied face data is where the config says.
fn require_face_data(cfg: &ExperimentConfig) -> Result<()> {
    let d = &cfg.data;
    for (what, p) in [("photo directory", &d.photo_dir), ("sketch directory", &d.sketch_dir), ("split file", &d.split_file)] {
        if !p.exists() {
            bail!(
                "{what} {} not found. The CUFSF photo/sketch dataset is licensed and must be supplied by the user; \
                 set data.photo_dir, data.sketch_dir and data.split_file",
                p.display()
            );
        }
    }
    Ok(())
}

/// Full retrieval experiment from image directories. Writes `results.csv`,
/// `roc.csv`, `metrics.json` and `manifest.json`.
pub fn run_cufsf_experiment(cfg: &ExperimentConfig) -> Result<CufsfReport> {
    cfg.validate()?;
    require_face_data(cfg)?;
    let split = load_image_pairs(&cfg.data.photo_dir, &cfg.data.sketch_dir, &cfg.data.split_file)?;
    info!("{} training and {} test pairs", split.train.len(), split.test.len());
    let (features, _) = FaceFeatures::from_split(&split, cfg.data.face_size, &cfg.hog)?;
    run_on_features(&features, cfg, "hog-faces")
}

/// The experiment on precomputed, already scaled features.
pub fn run_on_features(f: &FaceFeatures, cfg: &ExperimentConfig, source: &str) -> Result<CufsfReport> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let n = f.test_sketch.nrows();
    let seed = cfg.seed;

    let raw = retrieval(f.test_sketch.view(), f.test_photo.view())?;
    let (model, transformed) = train_and_score(f, cfg.variant, &cfg.smcae_for_seed(seed))?;
    let label = cfg.variant.to_string();

    let mut sink = CsvSink::create(&dir.join("results.csv"))?;
    for r in retrieval_rows("raw", n, seed, &raw).into_iter().chain(retrieval_rows(&label, n, seed, &transformed)) {
        sink.push(r)?;
    }
    sink.push(ResultRow {
        study: "model".into(),
        variant: label.clone(),
        training_set: "pairs".into(),
        count: f.train_sketch.nrows(),
        seed,
        metric: "iterations".into(),
        value: model.total_iterations() as f64,
    })?;
    let (csv_path, rows) = sink.finish()?;

    let roc_path = write_roc(&dir, &[("raw", &raw), (&label, &transformed)])?;
    let mut metrics = MetricReport::new();
    for (name, r) in [("raw", &raw), ("transformed", &transformed)] {
        metrics
            .insert(format!("{name}.rank1"), r.rank1)
            .insert(format!("{name}.auc"), r.auc)
            .insert(format!("{name}.vr_at_far_0.001"), r.vr);
    }
    metrics.insert("iterations", model.total_iterations() as f64);
    let metrics_path = write_metrics(&dir, &metrics)?;

    let mut manifest = Manifest::new("eval-cufsf", cfg);
    manifest.feature_source = Some(source.into());
    for p in [&csv_path, &roc_path, &metrics_path] {
        manifest.add_output(&dir, p)?;
    }
    manifest.write(&dir)?;
    Ok(CufsfReport { rows, raw, transformed, iterations: model.total_iterations() })
}

fn write_roc(dir: &Path, curves: &[(&str, &Retrieval)]) -> Result<PathBuf> {
    let path = dir.join("roc.csv");
    let mut sink = CsvSink::create(&path)?;
    for (variant, r) in curves {
        for p in &r.roc {
            sink.push(RocRow { variant, threshold: p.threshold, far: p.far, vr: p.vr })?;
        }
    }
    Ok(sink.finish()?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_domains_retrieve_perfectly() {
        let x = array![[0.1, 0.2], [0.8, 0.3], [0.4, 0.9]];
        let r = retrieval(x.view(), x.view()).unwrap();
        assert_eq!(r.rank1, 1.0);
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.vr, 1.0);
    }
}
