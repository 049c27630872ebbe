//! Single-channel sparse autoencoder.
//!
//! One channel is an encoder `h = f(W_e x + b_e)` followed by a decoder
//! `y = f(W_d h + b_d)` with `f` the logistic sigmoid. The objective is the
//! mean squared reconstruction error against a target (which need not equal
//! the input), plus weight decay on both weight matrices and a KL sparsity
//! penalty on the mean hidden activations.
//!
//! Parameters flatten to a single vector in the order `W_e` (row-major),
//! `b_e`, `W_d` (row-major), `b_d`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n × m` matrix, one instance per row.
pub type FeatureMatrix = Array2<f64>;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One reusable output buffer per thread. Fresh multi-megabyte allocations
/// cost as much as the matrix products in an objective evaluation.
mod scratch {
    use std::cell::RefCell;

    use ndarray::Array2;

    thread_local! {
        static BUF: RefCell<Option<Array2<f64>>> = const { RefCell::new(None) };
    }

    pub(super) fn take(rows: usize, cols: usize) -> Array2<f64> {
        BUF.with(|b| match b.borrow_mut().take() {
            Some(a) if a.dim() == (rows, cols) => a,
            _ => Array2::zeros((rows, cols)),
        })
    }

    pub(super) fn give(a: Array2<f64>) {
        BUF.with(|b| *b.borrow_mut() = Some(a));
    }
}

/// A fully connected sigmoid layer: `out = sigmoid(x · Wᵀ + b)`.
///
/// `weights` is `out_dim × in_dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Affine {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::shape("affine bias", weights.nrows(), bias.len()));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("affine", "non-finite parameter"));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weights: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    /// Uniform weights in `[-r, r]` with `r = sqrt(6 / (fan_in + fan_out))`,
    /// zero bias.
    pub fn init<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let r = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((out_dim, in_dim), || rng.random_range(-r..=r));
        Self {
            weights,
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Pre-activation `x · Wᵀ + b`.
    pub fn linear(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::shape("layer input", self.in_dim(), x.ncols()));
        }
        let mut z = x.dot(&self.weights.t());
        z += &self.bias;
        Ok(z)
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut z = self.linear(x)?;
        z.mapv_inplace(sigmoid);
        Ok(z)
    }

    pub fn sum_sq_weights(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend(self.weights.iter().copied());
        out.extend(self.bias.iter().copied());
    }

    /// Reads an `out_dim × in_dim` layer from the front of `flat`, returning
    /// the unread remainder.
    pub fn read_flat(flat: &[f64], out_dim: usize, in_dim: usize) -> Result<(Self, &[f64])> {
        let need = out_dim * in_dim + out_dim;
        if flat.len() < need {
            return Err(Error::shape("flat parameter vector", need, flat.len()));
        }
        let (w, rest) = flat.split_at(out_dim * in_dim);
        let (b, rest) = rest.split_at(out_dim);
        let weights = Array2::from_shape_vec((out_dim, in_dim), w.to_vec())
            .expect("length checked above");
        Ok((
            Self {
                weights,
                bias: Array1::from(b.to_vec()),
            },
            rest,
        ))
    }

    pub(crate) fn scaled_add(&mut self, alpha: f64, other: &Affine) {
        self.weights.scaled_add(alpha, &other.weights);
        self.bias.scaled_add(alpha, &other.bias);
    }

    pub(crate) fn scale(&mut self, alpha: f64) {
        self.weights *= alpha;
        self.bias *= alpha;
    }
}

/// Encoder and decoder of one channel. Also used to carry gradients, which
/// have the same block shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub encoder: Affine,
    pub decoder: Affine,
}

pub type ChannelGradient = ChannelParams;

impl ChannelParams {
    pub fn new(encoder: Affine, decoder: Affine) -> Result<Self> {
        if decoder.in_dim() != encoder.out_dim() {
            return Err(Error::shape(
                "decoder input vs encoder output",
                encoder.out_dim(),
                decoder.in_dim(),
            ));
        }
        if decoder.out_dim() != encoder.in_dim() {
            return Err(Error::shape(
                "decoder output vs encoder input",
                encoder.in_dim(),
                decoder.out_dim(),
            ));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let encoder = Affine::init(hidden, input_dim, rng);
        let decoder = Affine::init(input_dim, hidden, rng);
        Self { encoder, decoder }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params() + self.decoder.num_params()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        self.encoder.write_flat(&mut v);
        self.decoder.write_flat(&mut v);
        v
    }

    pub fn from_flat(flat: &[f64], input_dim: usize, hidden: usize) -> Result<Self> {
        let (encoder, rest) = Affine::read_flat(flat, hidden, input_dim)?;
        let (decoder, rest) = Affine::read_flat(rest, input_dim, hidden)?;
        if !rest.is_empty() {
            return Err(Error::shape(
                "flat channel parameters",
                flat.len() - rest.len(),
                flat.len(),
            ));
        }
        Ok(Self { encoder, decoder })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparsityConfig {
    /// Target mean activation, strictly inside (0, 1).
    pub delta: f64,
    /// Weight of the KL sparsity penalty.
    pub rho: f64,
    /// Weight of the weight-decay term.
    pub lambda: f64,
}

impl SparsityConfig {
    pub fn new(delta: f64, rho: f64, lambda: f64) -> Result<Self> {
        let cfg = Self { delta, rho, lambda };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::domain("sparsity target", format!("delta = {} not in (0,1)", self.delta)));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::domain("sparsity weight", format!("rho = {}", self.rho)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::domain("weight decay", format!("lambda = {}", self.lambda)));
        }
        Ok(())
    }

    /// No penalties at all: plain reconstruction error.
    pub fn none() -> Self {
        Self {
            delta: 0.05,
            rho: 0.0,
            lambda: 0.0,
        }
    }
}

impl Default for SparsityConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            rho: 0.1,
            lambda: 1e-4,
        }
    }
}

pub fn encode(p: &ChannelParams, x: ArrayView2<'_, f64>) -> Result<FeatureMatrix> {
    p.encoder.forward(x)
}

pub fn decode(p: &ChannelParams, h: ArrayView2<'_, f64>) -> Result<FeatureMatrix> {
    p.decoder.forward(h)
}

/// `(ΣW_e² + ΣW_d²) / 2`; biases are not decayed.
pub fn weight_decay(p: &ChannelParams) -> f64 {
    0.5 * (p.encoder.sum_sq_weights() + p.decoder.sum_sq_weights())
}

/// Per-hidden-unit activation averaged over instances.
pub fn mean_activations(h: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    h.mean_axis(Axis(0))
        .filter(|_| h.ncols() > 0)
        .ok_or(Error::Empty("hidden activations"))
}

/// `Σ_u KL(Bernoulli(δ) ‖ Bernoulli(δ̂_u))`.
pub fn kl_sparsity(delta: f64, delta_hat: ArrayView1<'_, f64>) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain("kl_sparsity", format!("delta = {delta} not in (0,1)")));
    }
    let mut total = 0.0;
    for (u, &d) in delta_hat.iter().enumerate() {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::domain(
                "kl_sparsity",
                format!("mean activation {d} of unit {u} not in (0,1)"),
            ));
        }
        total += delta * (delta / d).ln() + (1.0 - delta) * ((1.0 - delta) / (1.0 - d)).ln();
    }
    Ok(total)
}

/// Objective value split into its three terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveParts {
    pub reconstruction: f64,
    pub weight_decay: f64,
    pub sparsity: f64,
}

impl ObjectiveParts {
    /// The weighted total, `reconstruction + λ·decay + ρ·sparsity`.
    pub fn total(&self, s: &SparsityConfig) -> f64 {
        self.reconstruction + s.lambda * self.weight_decay + s.rho * self.sparsity
    }
}

/// Forward pass plus (optionally) backpropagation through a chain of sigmoid
/// layers `layers[0] → … → layers[last]`, scored against `x_target`.
///
/// The KL sparsity penalty applies to the outputs of the first
/// `sparse_layers` layers; weight decay covers every layer once. Gradients
/// are returned in layer order.
pub(crate) fn path_eval(
    layers: &[&Affine],
    sparse_layers: usize,
    x_in: ArrayView2<'_, f64>,
    x_target: ArrayView2<'_, f64>,
    s: &SparsityConfig,
    want_grad: bool,
) -> Result<(ObjectiveParts, Option<Vec<Affine>>)> {
    let (first, last) = match (layers.first(), layers.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Empty("layer chain")),
    };
    if x_in.nrows() != x_target.nrows() {
        return Err(Error::shape("paired instance count", x_in.nrows(), x_target.nrows()));
    }
    if x_in.nrows() == 0 {
        return Err(Error::Empty("channel input"));
    }
    if x_in.ncols() != first.in_dim() {
        return Err(Error::shape("channel input dimension", first.in_dim(), x_in.ncols()));
    }
    if x_target.ncols() != last.out_dim() {
        return Err(Error::shape("channel target dimension", last.out_dim(), x_target.ncols()));
    }
    for w in layers.windows(2) {
        if w[1].in_dim() != w[0].out_dim() {
            return Err(Error::shape("layer chaining", w[0].out_dim(), w[1].in_dim()));
        }
    }
    let n = x_in.nrows() as f64;

    // activations[i] is the output of layers[i]; the last one lives in a
    // reused scratch buffer since it is the only large intermediate
    let depth = layers.len();
    let mut activations: Vec<Array2<f64>> = Vec::with_capacity(depth);
    for (i, layer) in layers.iter().enumerate() {
        let input = if i == 0 { x_in } else { activations[i - 1].view() };
        let a = if i + 1 == depth {
            let mut out = scratch::take(input.nrows(), layer.out_dim());
            general_mat_mul(1.0, &input, &layer.weights.t(), 0.0, &mut out);
            for mut row in out.rows_mut() {
                Zip::from(&mut row).and(&layer.bias).for_each(|z, &b| *z = sigmoid(*z + b));
            }
            out
        } else {
            layer.forward(input)?
        };
        activations.push(a);
    }

    let mut means = Vec::with_capacity(sparse_layers);
    let mut sparsity = 0.0;
    if s.rho > 0.0 {
        for a in activations.iter().take(sparse_layers.min(depth - 1)) {
            let m = mean_activations(a.view())?;
            sparsity += kl_sparsity(s.delta, m.view())?;
            means.push(m);
        }
    }
    let mut output = activations.pop().expect("nonempty chain");
    let mut reconstruction = 0.0;
    Zip::from(&output).and(&x_target).for_each(|&y, &t| reconstruction += (y - t) * (y - t));
    reconstruction /= n;
    let parts = ObjectiveParts {
        reconstruction,
        weight_decay: 0.5 * layers.iter().map(|l| l.sum_sq_weights()).sum::<f64>(),
        sparsity,
    };
    if !want_grad {
        scratch::give(output);
        return Ok((parts, None));
    }

    // delta = dJ/dz for the current layer, starting at the output:
    // (2/n)(y − t) ⊙ y(1 − y)
    Zip::from(&mut output).and(&x_target).for_each(|y, &t| *y = 2.0 / n * (*y - t) * *y * (1.0 - *y));
    let mut delta = output;

    let mut grads: Vec<Affine> = Vec::with_capacity(layers.len());
    for i in (0..layers.len()).rev() {
        let input = if i == 0 { x_in } else { activations[i - 1].view() };
        let mut gw = delta.t().dot(&input);
        gw.scaled_add(s.lambda, &layers[i].weights);
        let gb = delta.sum_axis(Axis(0));
        grads.push(Affine { weights: gw, bias: gb });
        if i == 0 {
            if depth == 1 {
                scratch::give(delta);
            }
            break;
        }
        let mut upstream = delta.dot(&layers[i].weights);
        if i + 1 == depth {
            scratch::give(std::mem::replace(&mut delta, Array2::zeros((0, 0))));
        }
        if let Some(m) = means.get(i - 1) {
            let kl_grad = m.mapv(|d| s.rho / n * (-s.delta / d + (1.0 - s.delta) / (1.0 - d)));
            upstream += &kl_grad;
        }
        Zip::from(&mut upstream)
            .and(&activations[i - 1])
            .for_each(|d, &h| *d *= h * (1.0 - h));
        delta = upstream;
    }
    grads.reverse();
    Ok((parts, Some(grads)))
}

/// One channel: encoder then decoder, sparsity on the hidden code.
pub(crate) fn channel_eval(
    encoder: &Affine,
    decoder: &Affine,
    x_in: ArrayView2<'_, f64>,
    x_target: ArrayView2<'_, f64>,
    s: &SparsityConfig,
    want_grad: bool,
) -> Result<(ObjectiveParts, Option<ChannelGradient>)> {
    let (parts, grads) = path_eval(&[encoder, decoder], 1, x_in, x_target, s, want_grad)?;
    let grad = grads.map(|mut g| {
        let decoder = g.pop().expect("two layers");
        let encoder = g.pop().expect("two layers");
        ChannelParams { encoder, decoder }
    });
    Ok((parts, grad))
}

/// `(1/n)·Σ‖decode(encode(x_i)) − t_i‖² + λ·weight_decay + ρ·KL`.
pub fn channel_objective(
    p: &ChannelParams,
    x_in: ArrayView2<'_, f64>,
    x_target: ArrayView2<'_, f64>,
    s: &SparsityConfig,
) -> Result<f64> {
    channel_eval(&p.encoder, &p.decoder, x_in, x_target, s, false).map(|(parts, _)| parts.total(s))
}

/// Analytic gradient of [`channel_objective`] for every parameter block.
pub fn channel_gradient(
    p: &ChannelParams,
    x_in: ArrayView2<'_, f64>,
    x_target: ArrayView2<'_, f64>,
    s: &SparsityConfig,
) -> Result<ChannelGradient> {
    channel_eval(&p.encoder, &p.decoder, x_in, x_target, s, true).map(|(_, g)| g.expect("gradient requested"))
}
