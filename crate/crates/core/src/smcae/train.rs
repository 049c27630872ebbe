use log::{debug, info, warn};
use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::objective::{layer_eval, LayerObjective};
use super::stack::{stack_eval, stack_from_flat_like, stack_to_flat};
use super::variant::{build_variant, ChannelSet, Variant};
use super::{LogEntry, SmcaeConfig, SmcaeLayer, SmcaeModel, Stage, StageLog};
use crate::ae::SparsityConfig;
use crate::error::Result;
use crate::optim::{minimize, LbfgsOptions, Minimum};

#[derive(Clone, Debug)]
pub struct LayerTraining {
    pub layer: SmcaeLayer,
    pub log: StageLog,
}

/// Runs L-BFGS on `eval` and pairs every accepted step with its channel values.
fn run<F>(mut eval: F, x0: &[f64], opts: &LbfgsOptions, stage: Stage) -> Result<(Minimum, StageLog)>
where
    F: FnMut(&[f64], bool) -> Result<(LayerObjective, Option<Vec<f64>>)>,
{
    let mut seen: Vec<LayerObjective> = Vec::new();
    let min = minimize(
        |x, g| match eval(x, true) {
            Ok((o, Some(grad))) => {
                g.copy_from_slice(&grad);
                seen.push(o);
                o.e
            }
            _ => f64::INFINITY,
        },
        x0,
        opts,
    )?;
    let entries = min
        .trace
        .iter()
        .filter_map(|t| {
            seen.iter().rev().find(|o| o.e.to_bits() == t.f.to_bits()).map(|o| LogEntry {
                iteration: t.iteration,
                e: o.e,
                j_left: o.j_left,
                j_right: o.j_right,
            })
        })
        .collect();
    if min.warning() {
        warn!("{stage:?}: line search failed after {} iterations; keeping best point", min.iterations);
    }
    let log = StageLog {
        stage,
        entries,
        iterations: min.iterations,
        termination: min.termination,
    };
    Ok((min, log))
}

/// Trains one layer of `width` hidden units on the given channel bindings.
pub fn train_layer(
    data: &ChannelSet<'_>,
    width: usize,
    s: &SparsityConfig,
    gamma: f64,
    opts: &LbfgsOptions,
    seed: u64,
) -> Result<LayerTraining> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = SmcaeLayer::init(data.input_dim(), data.target_dim(), width, data.is_two_channel(), &mut rng);
    // fail on shape errors before the optimizer swallows them
    layer_eval(&init, data, s, gamma, false)?;
    let (min, log) = run(
        |x, g| {
            let layer = init.from_flat_like(x)?;
            let (o, grad) = layer_eval(&layer, data, s, gamma, g)?;
            Ok((o, grad.map(|g| g.to_flat())))
        },
        &init.to_flat(),
        opts,
        Stage::Layer(0),
    )?;
    Ok(LayerTraining {
        layer: init.from_flat_like(&min.x)?,
        log,
    })
}

/// Greedy layerwise training followed by optional fine-tuning of the
/// unrolled stack.
///
/// Layer `j + 1` is trained on the layer-`j` encodings of both input streams
/// with the same variant bindings. Inner layers keep only their left decoder,
/// which the two channels then share.
pub fn train_stack(
    x_s: ArrayView2<'_, f64>,
    x_r: ArrayView2<'_, f64>,
    variant: Variant,
    config: &SmcaeConfig,
) -> Result<SmcaeModel> {
    config.validate()?;
    let opts = config.lbfgs();
    let s = &config.sparsity;
    let mut layers: Vec<SmcaeLayer> = Vec::with_capacity(config.layer_sizes.len());
    let mut training_log = Vec::new();
    let mut streams: Option<(ndarray::Array2<f64>, ndarray::Array2<f64>)> = None;

    for (j, &width) in config.layer_sizes.iter().enumerate() {
        let (cur_s, cur_r) = match &streams {
            Some((a, b)) => (a.view(), b.view()),
            None => (x_s, x_r),
        };
        let data = build_variant(variant, cur_s, cur_r)?;
        info!("{variant}: training layer {} ({} -> {width}) on {} rows", j + 1, data.input_dim(), data.left.len());
        let seed = config.rng_seed.wrapping_add(j as u64);
        let LayerTraining { mut layer, mut log } = train_layer(&data, width, s, config.gamma, &opts, seed)?;
        log.stage = Stage::Layer(j);
        debug!("layer {} finished after {} iterations ({:?})", j + 1, log.iterations, log.termination);
        training_log.push(log);

        if j + 1 < config.layer_sizes.len() {
            let next = (layer.encoder.forward(cur_s)?, layer.encoder.forward(cur_r)?);
            streams = Some(next);
        }
        if j > 0 {
            layer.right = None;
        }
        layers.push(layer);
    }
    drop(streams);

    if config.fine_tune {
        let data = build_variant(variant, x_s, x_r)?;
        info!("{variant}: fine-tuning {} layers", layers.len());
        let like = layers.clone();
        let (min, log) = run(
            |x, g| {
                let params = stack_from_flat_like(&like, x)?;
                let (o, grad) = stack_eval(&params, &data, s, config.gamma, g)?;
                Ok((o, grad.map(|g| stack_to_flat(&g))))
            },
            &stack_to_flat(&layers),
            &opts,
            Stage::FineTune,
        )?;
        layers = stack_from_flat_like(&like, &min.x)?;
        training_log.push(log);
    }

    Ok(SmcaeModel {
        layers,
        config: config.clone(),
        variant,
        training_log,
        scaler: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smcae::objective::layer_objective;
    use crate::smcae::stack::stack_objective;
    use ndarray::Array2;
    use rand::Rng;

    fn unit(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(0.1..0.9))
    }

    fn small_config(widths: Vec<usize>, fine_tune: bool) -> SmcaeConfig {
        SmcaeConfig {
            layer_sizes: widths,
            max_iterations: 60,
            fine_tune,
            rng_seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn constant_data_is_learned() {
        let x = Array2::from_elem((10, 4), 0.5);
        let data = build_variant(Variant::Smcae, x.view(), x.view()).unwrap();
        let s = SparsityConfig::none();
        let opts = LbfgsOptions::default().with_max_iterations(100);
        let t = train_layer(&data, 3, &s, 1.0, &opts, 0).unwrap();
        let last = t.log.last().unwrap();
        assert!(last.j_left <= 1e-3 && last.j_right.unwrap() <= 1e-3, "{last:?}");
        assert!(t.log.iterations <= 100);
    }

    #[test]
    fn descent_and_determinism() {
        let xs = unit(12, 5, 1);
        let xr = unit(12, 5, 2);
        let data = build_variant(Variant::Smcae, xs.view(), xr.view()).unwrap();
        let s = SparsityConfig::default();
        let opts = LbfgsOptions::default().with_max_iterations(40);
        let a = train_layer(&data, 3, &s, 50.0, &opts, 7).unwrap();
        let b = train_layer(&data, 3, &s, 50.0, &opts, 7).unwrap();
        assert_eq!(a.layer, b.layer);
        assert_eq!(a.log, b.log);

        let e = &a.log.entries;
        assert_eq!(e.len(), a.log.iterations + 1);
        assert!(e.windows(2).all(|w| w[1].e <= w[0].e));
        let final_e = layer_objective(&a.layer, &data, &s, 50.0).unwrap().e;
        assert_eq!(final_e, e.last().unwrap().e);
    }

    #[test]
    fn single_layer_stack_matches_train_layer() {
        let xs = unit(10, 4, 3);
        let xr = unit(10, 4, 4);
        let cfg = small_config(vec![3], false);
        let model = train_stack(xs.view(), xr.view(), Variant::Smcae, &cfg).unwrap();
        let data = build_variant(Variant::Smcae, xs.view(), xr.view()).unwrap();
        let t = train_layer(&data, 3, &cfg.sparsity, cfg.gamma, &cfg.lbfgs(), cfg.rng_seed).unwrap();
        assert_eq!(model.layers, vec![t.layer]);
        model.validate().unwrap();
    }

    #[test]
    fn two_layer_stack_chains_and_fine_tune_descends() {
        let xs = unit(14, 6, 5);
        let xr = unit(14, 6, 6);
        for variant in Variant::ALL {
            let greedy = train_stack(xs.view(), xr.view(), variant, &small_config(vec![4, 3], false)).unwrap();
            greedy.validate().unwrap();
            assert_eq!(greedy.layers[1].input_dim(), greedy.layers[0].width());
            assert!(greedy.layers[1].right.is_none());

            let tuned = train_stack(xs.view(), xr.view(), variant, &small_config(vec![4, 3], true)).unwrap();
            assert_eq!(tuned.training_log.last().unwrap().stage, Stage::FineTune);
            let data = build_variant(variant, xs.view(), xr.view()).unwrap();
            let s = &greedy.config.sparsity;
            let before = stack_objective(&greedy.layers, &data, s, 50.0).unwrap().e;
            let after = stack_objective(&tuned.layers, &data, s, 50.0).unwrap().e;
            assert!(after <= before, "{variant}: {after} > {before}");
        }
    }
}
