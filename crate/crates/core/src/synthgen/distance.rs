use ndarray::Array2;

use super::binary::BinaryImage;
use crate::error::{Error, Result};

const FAR: f64 = 1e20;

/// Squared distance transform of a sampled function along one line
/// (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let mut s;
        loop {
            let pf = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + pf * pf)) / (2.0 * (qf - pf));
            if s > z[k] {
                break;
            }
            k -= 1;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest `true` site.
pub(crate) fn squared_edt(sites: &Array2<bool>) -> Array2<f64> {
    let (h, w) = sites.dim();
    let n = h.max(w);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut d = sites.mapv(|s| if s { 0.0 } else { FAR });
    for x in 0..w {
        for y in 0..h {
            f[y] = d[[y, x]];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            d[[y, x]] = out[y];
        }
    }
    for y in 0..h {
        for x in 0..w {
            f[x] = d[[y, x]];
        }
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        for x in 0..w {
            d[[y, x]] = out[x];
        }
    }
    d
}

/// Signed Euclidean distance to the nearest boundary pixel: negative inside
/// the foreground, positive outside, zero on the boundary.
pub fn distance_transform(img: &BinaryImage) -> Result<Array2<f64>> {
    let fg = img.count();
    if fg == 0 {
        return Err(Error::domain("distance_transform", "image has no foreground"));
    }
    if fg == img.width() * img.height() {
        return Err(Error::domain("distance_transform", "image has no background"));
    }
    let mut sites = Array2::from_elem((img.height(), img.width()), false);
    for (x, y) in img.boundary_pixels() {
        sites[[y, x]] = true;
    }
    let mut d = squared_edt(&sites);
    for ((y, x), v) in d.indexed_iter_mut() {
        let r = v.sqrt();
        *v = if img.get(x, y) { -r } else { r };
    }
    Ok(d)
}
