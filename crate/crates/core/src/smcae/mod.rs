//! Stacked multichannel autoencoder.
//!
//! Two reconstruction tasks share every encoder layer: the left channel maps
//! synthetic features to their paired real features, the right channel
//! reconstructs real features from themselves. Only the output decoder is
//! split between the channels. Their objectives are tied together by a
//! balance term `γ·½(J_L − J_R)²` that keeps either task from dominating.
//!
//! Training is greedy, one layer at a time on the encodings of the previous
//! layer, followed by an optional joint fine-tuning pass over the unrolled
//! stack. New synthetic data is mapped through the encoders, the shared inner
//! decoders and finally the left output decoder.

mod io;
mod objective;
mod stack;
mod train;
mod variant;

pub use io::{load_model, read_model, save_model, write_model, MODEL_VERSION};
pub use objective::{layer_gradient, layer_objective, smcae_gradient, smcae_objective, LayerObjective};
pub use stack::{stack_gradient, stack_objective, transform, StackParams};
pub use train::{train_layer, train_stack, LayerTraining};
pub use variant::{build_variant, ChannelData, ChannelSet, Variant};

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ae::{Affine, SparsityConfig};
use crate::error::{Error, Result};
use crate::hog::MinMaxScaler;
use crate::optim::Termination;

/// One layer: shared encoder plus the left and right decoders.
///
/// Single-channel layers, and inner layers of a trained stack (whose decoders
/// are shared by both channels), carry no right decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmcaeLayer {
    pub encoder: Affine,
    pub left: Affine,
    pub right: Option<Affine>,
}

/// Gradients with the same block structure as the parameters.
pub type LayerGradient = SmcaeLayer;

impl SmcaeLayer {
    pub fn new(encoder: Affine, left: Affine, right: Option<Affine>) -> Result<Self> {
        let k = encoder.out_dim();
        for dec in std::iter::once(&left).chain(right.as_ref()) {
            if dec.in_dim() != k {
                return Err(Error::shape("decoder input vs encoder width", k, dec.in_dim()));
            }
        }
        if let Some(r) = &right {
            if r.out_dim() != left.out_dim() {
                return Err(Error::shape("right vs left decoder output", left.out_dim(), r.out_dim()));
            }
        }
        Ok(Self { encoder, left, right })
    }

    /// Random initialisation; encoder first, then left, then right decoder.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        width: usize,
        two_channel: bool,
        rng: &mut R,
    ) -> Self {
        let encoder = Affine::init(width, input_dim, rng);
        let left = Affine::init(output_dim, width, rng);
        let right = two_channel.then(|| Affine::init(output_dim, width, rng));
        Self { encoder, left, right }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn width(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.left.out_dim()
    }

    pub fn is_two_channel(&self) -> bool {
        self.right.is_some()
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params()
            + self.left.num_params()
            + self.right.as_ref().map_or(0, Affine::num_params)
    }

    /// Layout: `W_e`, `b_e`, `W_d^L`, `b_d^L`, then `W_d^R`, `b_d^R` if present.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        self.encoder.write_flat(&mut v);
        self.left.write_flat(&mut v);
        if let Some(r) = &self.right {
            r.write_flat(&mut v);
        }
        v
    }

    /// Inverse of [`to_flat`](Self::to_flat) for a layer with the same shape as `self`.
    pub fn from_flat_like(&self, flat: &[f64]) -> Result<Self> {
        let (encoder, rest) = Affine::read_flat(flat, self.width(), self.input_dim())?;
        let (left, rest) = Affine::read_flat(rest, self.output_dim(), self.width())?;
        let (right, rest) = match &self.right {
            Some(_) => {
                let (r, rest) = Affine::read_flat(rest, self.output_dim(), self.width())?;
                (Some(r), rest)
            }
            None => (None, rest),
        };
        if !rest.is_empty() {
            return Err(Error::shape("flat layer parameters", self.num_params(), flat.len()));
        }
        Ok(Self { encoder, left, right })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcaeConfig {
    /// Hidden widths, input side first.
    pub layer_sizes: Vec<usize>,
    pub sparsity: SparsityConfig,
    /// Weight of the balance term. Ignored by single-channel variants.
    pub gamma: f64,
    /// L-BFGS iteration cap for each greedy layer and for fine-tuning.
    pub max_iterations: usize,
    /// Relative objective change at which L-BFGS stops.
    pub tolerance: f64,
    pub lbfgs_memory: usize,
    pub fine_tune: bool,
    pub rng_seed: u64,
}

impl Default for SmcaeConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![1000, 1000],
            sparsity: SparsityConfig::default(),
            gamma: 50.0,
            max_iterations: 400,
            tolerance: 1e-7,
            lbfgs_memory: 10,
            fine_tune: true,
            rng_seed: 0,
        }
    }
}

impl SmcaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(
                "layer_sizes must be a nonempty list of positive widths".into(),
            ));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be positive".into()));
        }
        self.sparsity.validate()
    }

    pub(crate) fn lbfgs(&self) -> crate::optim::LbfgsOptions {
        crate::optim::LbfgsOptions {
            memory: self.lbfgs_memory,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            ..Default::default()
        }
    }
}

/// One accepted optimizer step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    /// Full objective `E`.
    pub e: f64,
    pub j_left: f64,
    /// `None` for single-channel training.
    pub j_right: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Greedy training of the layer at this (zero-based) depth.
    Layer(usize),
    FineTune,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: Stage,
    pub entries: Vec<LogEntry>,
    pub iterations: usize,
    pub termination: Termination,
}

impl StageLog {
    pub fn first(&self) -> Option<&LogEntry> {
        self.entries.first()
    }

    pub fn last(&self) -> Option<&LogEntry> {
        self.entries.last()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmcaeModel {
    pub layers: Vec<SmcaeLayer>,
    pub config: SmcaeConfig,
    pub variant: Variant,
    pub training_log: Vec<StageLog>,
    /// Input scaling fitted on the training features, if the caller used one.
    #[serde(default)]
    pub scaler: Option<MinMaxScaler>,
}

impl SmcaeModel {
    pub fn input_dim(&self) -> Option<usize> {
        self.layers.first().map(SmcaeLayer::input_dim)
    }

    /// Total optimizer iterations across every stage.
    pub fn total_iterations(&self) -> usize {
        self.training_log.iter().map(|s| s.iterations).sum()
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        transform(self, x)
    }

    /// Checks that consecutive layers chain and that the decoder sharing
    /// pattern is the one the stack expects.
    pub fn validate(&self) -> Result<()> {
        for w in self.layers.windows(2) {
            if w[1].input_dim() != w[0].width() {
                return Err(Error::shape("layer chaining", w[0].width(), w[1].input_dim()));
            }
        }
        for (j, layer) in self.layers.iter().enumerate().skip(1) {
            if layer.right.is_some() {
                return Err(Error::InvalidArgument(format!(
                    "inner layer {j} carries a right decoder; inner decoders are shared"
                )));
            }
        }
        if let Some(first) = self.layers.first() {
            if first.is_two_channel() != self.variant.is_two_channel() {
                return Err(Error::InvalidArgument(format!(
                    "variant {} does not match the output layer's channel count",
                    self.variant
                )));
            }
        }
        Ok(())
    }
}
