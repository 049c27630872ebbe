use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hog::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CongealConfig {
    /// Passes over the whole stack.
    pub rounds: usize,
    /// Initial search steps for translation (px), rotation (rad) and log-scale.
    pub translation_step: f64,
    pub rotation_step: f64,
    pub scale_step: f64,
    /// Times each step is halved once no move improves.
    pub refinements: usize,
    /// Bounds on |translation| (px), |rotation| (rad) and |log-scale|. They
    /// rule out the degenerate optimum where every image shrinks away.
    pub max_translation: f64,
    pub max_rotation: f64,
    pub max_log_scale: f64,
}

impl Default for CongealConfig {
    fn default() -> Self {
        Self {
            rounds: 4,
            translation_step: 2.0,
            rotation_step: 0.1,
            scale_step: 0.1,
            refinements: 3,
            max_translation: 4.0,
            max_rotation: 0.35,
            max_log_scale: 0.25,
        }
    }
}

/// `[tx, ty, rotation, log_scale]` about the image centre.
type Params = [f64; 4];

/// Inverse-mapped bilinear warp; samples outside the source read as 0.
fn warp(src: &Array2<f64>, p: &Params) -> Array2<f64> {
    let (h, w) = src.dim();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = (-p[2]).sin_cos();
    let inv_s = (-p[3]).exp();
    let sample = |x: f64, y: f64| -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (tx, ty) = (x - x0, y - y0);
        let at = |xi: f64, yi: f64| {
            if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
                0.0
            } else {
                src[[yi as usize, xi as usize]]
            }
        };
        let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1.0, y0) * tx;
        let bottom = at(x0, y0 + 1.0) * (1.0 - tx) + at(x0 + 1.0, y0 + 1.0) * tx;
        top * (1.0 - ty) + bottom * ty
    };
    Array2::from_shape_fn((h, w), |(y, x)| {
        let (dx, dy) = (x as f64 - cx - p[0], y as f64 - cy - p[1]);
        let sx = inv_s * (cos * dx - sin * dy) + cx;
        let sy = inv_s * (sin * dx + cos * dy) + cy;
        sample(sx, sy)
    })
}

fn sq_dist(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Coordinate search from `start` for the warp of `src` closest to `target`.
fn search(src: &Array2<f64>, target: &Array2<f64>, start: Params, cfg: &CongealConfig) -> (Params, Array2<f64>) {
    let mut p = start;
    let mut cur = warp(src, &p);
    let mut cost = sq_dist(&cur, target);
    let mut steps = [cfg.translation_step, cfg.translation_step, cfg.rotation_step, cfg.scale_step];
    let bounds = [cfg.max_translation, cfg.max_translation, cfg.max_rotation, cfg.max_log_scale];
    for _ in 0..=cfg.refinements {
        let mut improved = true;
        while improved {
            improved = false;
            for k in 0..4 {
                for sign in [1.0, -1.0] {
                    let mut q = p;
                    q[k] += sign * steps[k];
                    if q[k].abs() > bounds[k] {
                        continue;
                    }
                    let cand = warp(src, &q);
                    let c = sq_dist(&cand, target);
                    if c < cost {
                        cost = c;
                        p = q;
                        cur = cand;
                        improved = true;
                    }
                }
            }
        }
        steps.iter_mut().for_each(|s| *s *= 0.5);
    }
    (p, cur)
}

/// Similarity transform taking prototype coordinates into the frame of one
/// image, found by warping the image onto the prototype.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alignment {
    params: Params,
    centre: (f64, f64),
}

impl Alignment {
    pub fn estimate(image: &GrayImage, prototype: &GrayImage, cfg: &CongealConfig) -> Result<Self> {
        if (image.width(), image.height()) != (prototype.width(), prototype.height()) {
            return Err(Error::shape(
                "alignment image size",
                prototype.width() * prototype.height(),
                image.width() * image.height(),
            ));
        }
        let (params, _) = search(&image.pixels().to_owned(), &prototype.pixels().to_owned(), [0.0; 4], cfg);
        let centre = ((image.width() as f64 - 1.0) / 2.0, (image.height() as f64 - 1.0) / 2.0);
        Ok(Self { params, centre })
    }

    /// Image-frame position of prototype point `(x, y)`.
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let p = &self.params;
        let (sin, cos) = (-p[2]).sin_cos();
        let inv_s = (-p[3]).exp();
        let (dx, dy) = (x - self.centre.0 - p[0], y - self.centre.1 - p[1]);
        (inv_s * (cos * dx - sin * dy) + self.centre.0, inv_s * (sin * dx + cos * dy) + self.centre.1)
    }
}

/// Jointly aligns a stack of images.
///
/// A simplified congealing: each image in turn is moved by coordinate search
/// over translation, rotation and scale to reduce its squared distance to the
/// mean of the remaining images, which lowers the summed per-pixel variance
/// of the stack.
pub fn congeal(images: &[GrayImage], cfg: &CongealConfig) -> Result<Vec<GrayImage>> {
    if images.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a prototype needs at least 2 images, got {}",
            images.len()
        )));
    }
    let dim = (images[0].height(), images[0].width());
    for img in images {
        if (img.height(), img.width()) != dim {
            return Err(Error::shape("prototype image size", dim.0 * dim.1, img.height() * img.width()));
        }
    }
    let src: Vec<Array2<f64>> = images.iter().map(|i| i.pixels().to_owned()).collect();
    let n = src.len() as f64;
    let mut params: Vec<Params> = vec![[0.0; 4]; src.len()];
    let mut warped: Vec<Array2<f64>> = src.clone();
    let mut sum: Array2<f64> = warped.iter().fold(Array2::zeros(dim), |acc, w| acc + w);

    for _ in 0..cfg.rounds {
        for i in 0..src.len() {
            let others = (&sum - &warped[i]) / (n - 1.0);
            let (p, cur) = search(&src[i], &others, params[i], cfg);
            sum = sum - &warped[i] + &cur;
            warped[i] = cur;
            params[i] = p;
        }
    }
    warped
        .into_iter()
        .map(|w| GrayImage::new(w.mapv(|v| v.clamp(0.0, 1.0))))
        .collect()
}

/// Mean image of the congealed stack.
pub fn build_prototype(images: &[GrayImage], cfg: &CongealConfig) -> Result<GrayImage> {
    let aligned = congeal(images, cfg)?;
    let n = aligned.len() as f64;
    let dim = (aligned[0].height(), aligned[0].width());
    let mean = aligned.iter().fold(Array2::zeros(dim), |acc, a| acc + &a.pixels()) / n;
    GrayImage::new(mean.mapv(|v: f64| v.clamp(0.0, 1.0)))
}
