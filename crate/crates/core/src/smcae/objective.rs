use ndarray::ArrayView2;

use super::variant::{build_variant, ChannelSet, Variant};
use super::{LayerGradient, SmcaeLayer};
use crate::ae::{channel_eval, Affine, SparsityConfig};
use crate::error::{Error, Result};

/// Value of the joint objective and of each channel's term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerObjective {
    pub e: f64,
    pub j_left: f64,
    pub j_right: Option<f64>,
}

impl LayerObjective {
    /// `½(J_L − J_R)²`, zero for a single channel.
    pub fn balance(&self) -> f64 {
        self.j_right.map_or(0.0, |jr| 0.5 * (self.j_left - jr).powi(2))
    }
}

/// Combines channel values into `E` and returns the weights applied to each
/// channel's gradient: `1 + γD` on the left and `1 − γD` on the right.
pub(crate) fn combine(gamma: f64, j_left: f64, j_right: Option<f64>) -> (LayerObjective, f64, f64) {
    match j_right {
        None => (LayerObjective { e: j_left, j_left, j_right: None }, 1.0, 0.0),
        Some(jr) => {
            let d = j_left - jr;
            let e = j_left + jr + gamma * 0.5 * d * d;
            (LayerObjective { e, j_left, j_right }, 1.0 + gamma * d, 1.0 - gamma * d)
        }
    }
}

fn check_layer(layer: &SmcaeLayer, data: &ChannelSet<'_>) -> Result<()> {
    if data.input_dim() != layer.input_dim() {
        return Err(Error::shape("layer input dimension", layer.input_dim(), data.input_dim()));
    }
    if data.target_dim() != layer.output_dim() {
        return Err(Error::shape("layer output dimension", layer.output_dim(), data.target_dim()));
    }
    if layer.is_two_channel() != data.is_two_channel() {
        return Err(Error::InvalidArgument(format!(
            "layer has {} decoder(s) but the data binds {} channel(s)",
            1 + usize::from(layer.is_two_channel()),
            1 + usize::from(data.is_two_channel()),
        )));
    }
    Ok(())
}

pub(crate) fn layer_eval(
    layer: &SmcaeLayer,
    data: &ChannelSet<'_>,
    s: &SparsityConfig,
    gamma: f64,
    want_grad: bool,
) -> Result<(LayerObjective, Option<LayerGradient>)> {
    check_layer(layer, data)?;
    let (pl, gl) = channel_eval(
        &layer.encoder,
        &layer.left,
        data.left.input.view(),
        data.left.target.view(),
        s,
        want_grad,
    )?;
    let right = match (&layer.right, &data.right) {
        (Some(dec), Some(ch)) => Some(channel_eval(
            &layer.encoder,
            dec,
            ch.input.view(),
            ch.target.view(),
            s,
            want_grad,
        )?),
        _ => None,
    };
    let j_right = right.as_ref().map(|(p, _)| p.total(s));
    let (obj, wl, wr) = combine(gamma, pl.total(s), j_right);
    if !want_grad {
        return Ok((obj, None));
    }

    let gl = gl.expect("gradient requested");
    let mut encoder = gl.encoder;
    encoder.scale(wl);
    let mut left = gl.decoder;
    left.scale(wl);
    let mut right_dec: Option<Affine> = None;
    if let Some((_, Some(gr))) = right {
        encoder.scaled_add(wr, &gr.encoder);
        let mut d = gr.decoder;
        d.scale(wr);
        right_dec = Some(d);
    }
    Ok((obj, Some(SmcaeLayer { encoder, left, right: right_dec })))
}

/// Joint objective of one layer under arbitrary channel bindings.
pub fn layer_objective(
    layer: &SmcaeLayer,
    data: &ChannelSet<'_>,
    s: &SparsityConfig,
    gamma: f64,
) -> Result<LayerObjective> {
    layer_eval(layer, data, s, gamma, false).map(|(o, _)| o)
}

/// Objective together with its gradient.
pub fn layer_gradient(
    layer: &SmcaeLayer,
    data: &ChannelSet<'_>,
    s: &SparsityConfig,
    gamma: f64,
) -> Result<(LayerObjective, LayerGradient)> {
    layer_eval(layer, data, s, gamma, true).map(|(o, g)| (o, g.expect("gradient requested")))
}

/// `(E, J_L, J_R)` for the synthetic→real / real→real binding.
pub fn smcae_objective(
    layer: &SmcaeLayer,
    x_s: ArrayView2<'_, f64>,
    x_r: ArrayView2<'_, f64>,
    s: &SparsityConfig,
    gamma: f64,
) -> Result<(f64, f64, f64)> {
    let data = build_variant(Variant::Smcae, x_s, x_r)?;
    let o = layer_objective(layer, &data, s, gamma)?;
    Ok((o.e, o.j_left, o.j_right.expect("two channels")))
}

/// Gradient of [`smcae_objective`] with respect to every block of `layer`.
pub fn smcae_gradient(
    layer: &SmcaeLayer,
    x_s: ArrayView2<'_, f64>,
    x_r: ArrayView2<'_, f64>,
    s: &SparsityConfig,
    gamma: f64,
) -> Result<LayerGradient> {
    let data = build_variant(Variant::Smcae, x_s, x_r)?;
    layer_gradient(layer, &data, s, gamma).map(|(_, g)| g)
}
