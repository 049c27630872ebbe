//! Retraining across balance weights, recording the score and the optimizer
//! cost of each.

use anyhow::{bail, Context, Result};
use log::info;
use ndarray::{concatenate, Axis};
use serde::Serialize;

use smcae_core::SmcaeConfig;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::cufsf::{train_and_score, FaceFeatures};
use crate::data::load_image_pairs;
use crate::digits::{load_digit_split, score, select_svm, svm_params, DigitAssets};
use crate::output::{CsvSink, Manifest};
use crate::toy::run_gap;
use crate::{derive_seed, par_map};

pub const SWEEP_HEADER: &str = "experiment,variant,gamma,seed,metric,value,iterations";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub experiment: String,
    pub variant: String,
    pub gamma: f64,
    pub seed: u64,
    /// Empty when scoring is switched off.
    pub metric: String,
    pub value: Option<f64>,
    pub iterations: usize,
}

struct Task {
    gamma: f64,
    seed: u64,
}

fn tasks(cfg: &ExperimentConfig) -> Vec<Task> {
    let mut out = Vec::new();
    for r in 0..cfg.sweep.replicates as u64 {
        for &gamma in &cfg.sweep.gammas {
            out.push(Task { gamma, seed: cfg.seed + r });
        }
    }
    out
}

fn model_cfg(cfg: &ExperimentConfig, t: &Task) -> SmcaeConfig {
    SmcaeConfig { gamma: t.gamma, ..cfg.smcae_for_seed(t.seed) }
}

/// One row per (replicate, γ) in grid order. Writes `gamma_sweep.csv` and
/// `manifest.json`.
pub fn run_gamma_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let tasks = tasks(cfg);
    let exp = cfg.experiment.to_string();
    let variant = cfg.variant.to_string();
    let row = |t: &Task, metric: &str, value: Option<f64>, iterations: usize| SweepRow {
        experiment: exp.clone(),
        variant: variant.clone(),
        gamma: t.gamma,
        seed: t.seed,
        metric: if value.is_some() { metric.into() } else { String::new() },
        value,
        iterations,
    };
    let score_on = cfg.sweep.score;

    let rows: Vec<SweepRow> = match cfg.experiment {
        ExperimentKind::Digits => {
            let (train, test) = load_digit_split(cfg)?;
            let assets = DigitAssets::build(&train, &test, &cfg.digits.synth, &cfg.hog, cfg.workers)?;
            let svm = if score_on {
                if test.is_empty() {
                    bail!("scoring the sweep needs a digit test set");
                }
                let cv = select_svm(assets.x_real.view(), &assets.y_real, &cfg.svm, cfg.seed)?;
                Some(svm_params(&cv, &cfg.svm))
            } else {
                None
            };
            par_map(cfg.workers, &tasks, |t| {
                let model = assets.train_model(cfg.variant, &model_cfg(cfg, t))?;
                let value = match &svm {
                    Some(p) => {
                        let (xs, ys) = assets.sample_features(
                            cfg.digits.synthetic_per_class,
                            derive_seed(t.seed, 1 << 33),
                            &cfg.hog,
                        )?;
                        let xt = model.transform(xs.view())?;
                        let x = concatenate(Axis(0), &[assets.x_real.view(), xt.view()])?;
                        let y: Vec<usize> = assets.y_real.iter().chain(&ys).copied().collect();
                        Some(score(x.view(), &y, &assets, p, &cfg.svm)?)
                    }
                    None => None,
                };
                Ok(row(t, "f1", value, model.total_iterations()))
            })?
        }
        ExperimentKind::Cufsf => {
            let split = load_image_pairs(&cfg.data.photo_dir, &cfg.data.sketch_dir, &cfg.data.split_file)?;
            let (f, _) = FaceFeatures::from_split(&split, cfg.data.face_size, &cfg.hog)?;
            par_map(cfg.workers, &tasks, |t| {
                let (model, r) = train_and_score(&f, cfg.variant, &model_cfg(cfg, t))?;
                Ok(row(t, "rank1", score_on.then_some(r.rank1), model.total_iterations()))
            })?
        }
        ExperimentKind::ToyGap => par_map(cfg.workers, &tasks, |t| {
            let g = run_gap(&cfg.toy, &model_cfg(cfg, t), cfg.variant, t.seed)?;
            Ok(row(t, "gap_distance", score_on.then_some(g.distance), g.iterations))
        })?,
        ExperimentKind::Gradcheck => bail!("gamma-sweep needs a digits, cufsf or toy-gap experiment"),
    };

    let mut sink = CsvSink::create(&dir.join("gamma_sweep.csv"))?;
    for r in rows {
        info!("gamma {} seed {}: {} {:?}, {} iterations", r.gamma, r.seed, r.metric, r.value, r.iterations);
        sink.push(r)?;
    }
    let (path, rows) = sink.finish()?;
    let mut manifest = Manifest::new("gamma-sweep", cfg);
    manifest.add_output(&dir, &path)?;
    manifest.write(&dir)?;
    Ok(rows)
}
