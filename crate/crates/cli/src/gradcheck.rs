//! Finite-difference check of the analytic gradients on random small layers.

use std::fmt;

use anyhow::Result;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use smcae_core::ae::{channel_gradient, channel_objective};
use smcae_core::optim::{finite_diff, relative_errors};
use smcae_core::smcae::{smcae_gradient, smcae_objective};
use smcae_core::{ChannelParams, SmcaeLayer, SparsityConfig};

pub const THRESHOLD: f64 = 1e-5;
const STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    pub gammas: Vec<f64>,
    pub seeds: usize,
    pub seed: u64,
    pub input_dim: usize,
    pub hidden: usize,
    pub instances: usize,
    /// Multiplies every analytic gradient before comparison. Anything other
    /// than 1 must make the check fail.
    pub sabotage_scale: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { gammas: vec![0.0, 1.0, 50.0], seeds: 20, seed: 0, input_dim: 6, hidden: 4, instances: 8, sabotage_scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockError {
    /// `smcae` for the joint layer objective, `channel` for a single channel.
    pub target: String,
    pub gamma: Option<f64>,
    pub block: String,
    pub max_relative_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub blocks: Vec<BlockError>,
}

impl GradcheckReport {
    pub fn max_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_relative_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_relative_error < THRESHOLD)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            let g = b.gamma.map_or_else(|| "-".to_string(), |g| g.to_string());
            writeln!(f, "{:<8} gamma={:<5} {:<16} {:.3e}", b.target, g, b.block, b.max_relative_error)?;
        }
        write!(f, "max relative error {:.3e} ({})", self.max_error(), if self.passed() { "ok" } else { "FAILED" })
    }
}

fn unit(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(0.05..0.95))
}

fn random_sparsity(rng: &mut ChaCha8Rng) -> SparsityConfig {
    SparsityConfig { delta: rng.random_range(0.05..0.5), rho: rng.random_range(0.0..1.0), lambda: rng.random_range(0.0..0.01) }
}

/// Folds per-coordinate errors into per-block maxima given block sizes.
fn block_max(errors: &[f64], sizes: &[(&'static str, usize)], into: &mut [f64]) {
    let mut at = 0;
    for (i, (_, len)) in sizes.iter().enumerate() {
        let m = errors[at..at + len].iter().copied().fold(0.0, f64::max);
        into[i] = into[i].max(m);
        at += len;
    }
}

fn affine_blocks(name: &'static str, out: usize, inp: usize) -> [(&'static str, usize); 2] {
    let (w, b): (&'static str, &'static str) = match name {
        "encoder" => ("encoder.weights", "encoder.bias"),
        "left" => ("left.weights", "left.bias"),
        "right" => ("right.weights", "right.bias"),
        _ => ("decoder.weights", "decoder.bias"),
    };
    [(w, out * inp), (b, out)]
}

pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let (m, k, n) = (opts.input_dim, opts.hidden, opts.instances);
    let layer_blocks: Vec<_> = [affine_blocks("encoder", k, m), affine_blocks("left", m, k), affine_blocks("right", m, k)]
        .concat();
    let channel_blocks: Vec<_> = [affine_blocks("encoder", k, m), affine_blocks("decoder", m, k)].concat();

    let mut blocks = Vec::new();
    for &gamma in &opts.gammas {
        let mut worst = vec![0.0; layer_blocks.len()];
        for s in 0..opts.seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(s as u64));
            let layer = SmcaeLayer::init(m, m, k, true, &mut rng);
            let xs = unit(&mut rng, n, m);
            let xr = unit(&mut rng, n, m);
            let sp = random_sparsity(&mut rng);
            let g: Vec<f64> = smcae_gradient(&layer, xs.view(), xr.view(), &sp, gamma)?
                .to_flat()
                .into_iter()
                .map(|v| v * opts.sabotage_scale)
                .collect();
            let fd = finite_diff(
                |w| {
                    let l = layer.from_flat_like(w).expect("same layout");
                    smcae_objective(&l, xs.view(), xr.view(), &sp, gamma).map_or(f64::NAN, |o| o.0)
                },
                &layer.to_flat(),
                STEP,
            );
            block_max(&relative_errors(&g, &fd), &layer_blocks, &mut worst);
        }
        for ((name, _), e) in layer_blocks.iter().zip(worst) {
            blocks.push(BlockError { target: "smcae".into(), gamma: Some(gamma), block: (*name).into(), max_relative_error: e });
        }
    }

    let mut worst = vec![0.0; channel_blocks.len()];
    for s in 0..opts.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(s as u64));
        let p = ChannelParams::init(m, k, &mut rng);
        let x = unit(&mut rng, n, m);
        let t = unit(&mut rng, n, m);
        let sp = random_sparsity(&mut rng);
        let g: Vec<f64> =
            channel_gradient(&p, x.view(), t.view(), &sp)?.to_flat().into_iter().map(|v| v * opts.sabotage_scale).collect();
        let fd = finite_diff(
            |w| {
                let q = ChannelParams::from_flat(w, m, k).expect("same layout");
                channel_objective(&q, x.view(), t.view(), &sp).unwrap_or(f64::NAN)
            },
            &p.to_flat(),
            STEP,
        );
        block_max(&relative_errors(&g, &fd), &channel_blocks, &mut worst);
    }
    for ((name, _), e) in channel_blocks.iter().zip(worst) {
        blocks.push(BlockError { target: "channel".into(), gamma: None, block: (*name).into(), max_relative_error: e });
    }
    Ok(GradcheckReport { blocks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_run_is_tight_and_repeatable() {
        let opts = GradcheckOptions { seeds: 5, ..Default::default() };
        let a = run_gradcheck(&opts).unwrap();
        assert_eq!(a.blocks.len(), 3 * 6 + 4);
        assert!(a.max_error() < 1e-6, "{a}");
        assert_eq!(a, run_gradcheck(&opts).unwrap());
    }

    #[test]
    fn doubled_gradient_fails() {
        let opts = GradcheckOptions { seeds: 2, sabotage_scale: 2.0, ..Default::default() };
        assert!(!run_gradcheck(&opts).unwrap().passed());
    }
}
