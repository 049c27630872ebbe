use ndarray::{Array2, ArrayView2};

use super::objective::{combine, LayerObjective};
use super::variant::ChannelSet;
use super::{SmcaeLayer, SmcaeModel};
use crate::ae::{path_eval, Affine, SparsityConfig};
use crate::error::{Error, Result};

/// Parameters of a whole stack, input side first. Only the first layer may
/// carry a right decoder.
pub type StackParams = Vec<SmcaeLayer>;

pub(crate) fn stack_to_flat(layers: &[SmcaeLayer]) -> Vec<f64> {
    let mut v = Vec::with_capacity(layers.iter().map(SmcaeLayer::num_params).sum());
    for l in layers {
        v.extend(l.to_flat());
    }
    v
}

pub(crate) fn stack_from_flat_like(like: &[SmcaeLayer], flat: &[f64]) -> Result<StackParams> {
    let total: usize = like.iter().map(SmcaeLayer::num_params).sum();
    if flat.len() != total {
        return Err(Error::shape("flat stack parameters", total, flat.len()));
    }
    let mut out = Vec::with_capacity(like.len());
    let mut rest = flat;
    for l in like {
        let (head, tail) = rest.split_at(l.num_params());
        out.push(l.from_flat_like(head)?);
        rest = tail;
    }
    Ok(out)
}

/// `[e_1, …, e_K, d_K, …, d_2, d_1]` with the given output decoder.
fn unrolled<'a>(layers: &'a [SmcaeLayer], output: &'a Affine) -> Vec<&'a Affine> {
    let mut chain: Vec<&Affine> = layers.iter().map(|l| &l.encoder).collect();
    chain.extend(layers.iter().skip(1).rev().map(|l| &l.left));
    chain.push(output);
    chain
}

fn check_stack(layers: &[SmcaeLayer], data: &ChannelSet<'_>) -> Result<()> {
    let first = layers.first().ok_or(Error::Empty("layer stack"))?;
    for w in layers.windows(2) {
        if w[1].input_dim() != w[0].width() {
            return Err(Error::shape("layer chaining", w[0].width(), w[1].input_dim()));
        }
    }
    if layers.iter().skip(1).any(SmcaeLayer::is_two_channel) {
        return Err(Error::InvalidArgument("only the output decoder may be split".into()));
    }
    if first.is_two_channel() != data.is_two_channel() {
        return Err(Error::InvalidArgument("stack and data disagree on channel count".into()));
    }
    Ok(())
}

pub(crate) fn stack_eval(
    layers: &[SmcaeLayer],
    data: &ChannelSet<'_>,
    s: &SparsityConfig,
    gamma: f64,
    want_grad: bool,
) -> Result<(LayerObjective, Option<StackParams>)> {
    check_stack(layers, data)?;
    let k = layers.len();
    let first = &layers[0];
    let (pl, gl) = path_eval(
        &unrolled(layers, &first.left),
        k,
        data.left.input.view(),
        data.left.target.view(),
        s,
        want_grad,
    )?;
    let right = match (&first.right, &data.right) {
        (Some(dec), Some(ch)) => Some(path_eval(
            &unrolled(layers, dec),
            k,
            ch.input.view(),
            ch.target.view(),
            s,
            want_grad,
        )?),
        _ => None,
    };
    let (obj, wl, wr) = combine(gamma, pl.total(s), right.as_ref().map(|(p, _)| p.total(s)));
    if !want_grad {
        return Ok((obj, None));
    }

    let gl = gl.expect("gradient requested");
    let gr = right.map(|(_, g)| g.expect("gradient requested"));
    let merged = |i: usize| -> Affine {
        let mut a = gl[i].clone();
        a.scale(wl);
        if let Some(gr) = &gr {
            a.scaled_add(wr, &gr[i]);
        }
        a
    };
    // chain index of layer j's decoder is 2k − 1 − j
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let encoder = merged(j);
        let (left, right) = if j == 0 {
            let mut l = gl[2 * k - 1].clone();
            l.scale(wl);
            let r = gr.as_ref().map(|g| {
                let mut r = g[2 * k - 1].clone();
                r.scale(wr);
                r
            });
            (l, r)
        } else {
            (merged(2 * k - 1 - j), None)
        };
        out.push(SmcaeLayer { encoder, left, right });
    }
    Ok((obj, Some(out)))
}

/// Joint objective of the unrolled stack, with sparsity on every encoder code.
pub fn stack_objective(
    layers: &[SmcaeLayer],
    data: &ChannelSet<'_>,
    s: &SparsityConfig,
    gamma: f64,
) -> Result<LayerObjective> {
    stack_eval(layers, data, s, gamma, false).map(|(o, _)| o)
}

pub fn stack_gradient(
    layers: &[SmcaeLayer],
    data: &ChannelSet<'_>,
    s: &SparsityConfig,
    gamma: f64,
) -> Result<(LayerObjective, StackParams)> {
    stack_eval(layers, data, s, gamma, true).map(|(o, g)| (o, g.expect("gradient requested")))
}

/// Maps synthetic features through every encoder, the shared inner decoders
/// and the left output decoder.
pub fn transform(model: &SmcaeModel, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let first = model
        .layers
        .first()
        .ok_or_else(|| Error::InvalidArgument("model has no trained layers".into()))?;
    if x.ncols() != first.input_dim() {
        return Err(Error::shape("transform input dimension", first.input_dim(), x.ncols()));
    }
    let chain = unrolled(&model.layers, &first.left);
    let mut h = chain[0].forward(x)?;
    for layer in &chain[1..] {
        h = layer.forward(h.view())?;
    }
    Ok(h)
}
