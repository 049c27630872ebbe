//! Histogram-of-oriented-gradients descriptors, bilinear resizing and the
//! per-dimension min-max scaling applied before autoencoder training.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::ae::FeatureMatrix;
use crate::error::{Error, Result};

/// Grayscale image, row-major, intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pixels: Array2<f64>,
}

impl GrayImage {
    /// `pixels` is `height × width`.
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::Empty("image"));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain("GrayImage", format!("pixel value {v} outside [0,1]")));
        }
        Ok(Self { pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(Array2::from_elem((height, width), value))
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn pixels(&self) -> ArrayView2<'_, f64> {
        self.pixels.view()
    }

    pub fn into_pixels(self) -> Array2<f64> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[[y, x]]
    }
}

/// Bilinear resampling with pixel centres aligned and edges clamped.
pub fn resize(img: &GrayImage, width: usize, height: usize) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!("resize target {width}x{height} has a zero side")));
    }
    let (sw, sh) = (img.width(), img.height());
    if (sw, sh) == (width, height) {
        return Ok(img.clone());
    }
    let src = &img.pixels;
    let coord = |dst: usize, scale: f64, len: usize| -> (usize, usize, f64) {
        let c = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = c.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, c - i0 as f64)
    };
    let (fx, fy) = (sw as f64 / width as f64, sh as f64 / height as f64);
    let out = Array2::from_shape_fn((height, width), |(y, x)| {
        let (y0, y1, ty) = coord(y, fy, sh);
        let (x0, x1, tx) = coord(x, fx, sw);
        let top = src[[y0, x0]] * (1.0 - tx) + src[[y0, x1]] * tx;
        let bottom = src[[y1, x0]] * (1.0 - tx) + src[[y1, x1]] * tx;
        (top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0)
    });
    GrayImage::new(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HogConfig {
    pub cell_size: usize,
    pub orientation_bins: usize,
    /// Cells per block side.
    pub block_size: usize,
    /// Block step, in cells.
    pub block_stride: usize,
    /// Orientations over 0–360° instead of 0–180°.
    pub signed: bool,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self {
            cell_size: 3,
            orientation_bins: 9,
            block_size: 2,
            block_stride: 1,
            signed: false,
        }
    }
}

const CLIP: f64 = 0.2;

impl HogConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cell_size == 0 || self.block_size == 0 || self.block_stride == 0 {
            return Err(Error::InvalidArgument(
                "cell_size, block_size and block_stride must be positive".into(),
            ));
        }
        if self.orientation_bins < 2 {
            return Err(Error::InvalidArgument("orientation_bins must be at least 2".into()));
        }
        Ok(())
    }

    /// Cell grid `(columns, rows)`; trailing pixels past the last full cell are dropped.
    pub fn cells(&self, width: usize, height: usize) -> (usize, usize) {
        (width / self.cell_size, height / self.cell_size)
    }

    /// Block grid `(columns, rows)`.
    pub fn blocks(&self, width: usize, height: usize) -> (usize, usize) {
        let (cx, cy) = self.cells(width, height);
        let along = |c: usize| {
            if c < self.block_size {
                0
            } else {
                (c - self.block_size) / self.block_stride + 1
            }
        };
        (along(cx), along(cy))
    }

    pub fn descriptor_len(&self, width: usize, height: usize) -> usize {
        let (bx, by) = self.blocks(width, height);
        bx * by * self.block_size * self.block_size * self.orientation_bins
    }
}

/// HOG descriptor: centred-difference gradients, per-cell orientation
/// histograms with linear interpolation between neighbouring bins, and
/// L2-hys normalization over each block. Blocks are emitted in row-major
/// order, cells within a block row-major, bins innermost.
///
/// Bin `b` is centred on `b · range / bins`, so bin 0 collects horizontal
/// gradients.
pub fn hog(img: &GrayImage, cfg: &HogConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let (w, h) = (img.width(), img.height());
    let (cx, cy) = cfg.cells(w, h);
    if cx == 0 || cy == 0 {
        return Err(Error::InvalidArgument(format!(
            "image {w}x{h} is smaller than one {0}x{0} cell",
            cfg.cell_size
        )));
    }
    let p = &img.pixels;
    let bins = cfg.orientation_bins;
    let range = if cfg.signed { 360.0 } else { 180.0 };
    let width_deg = range / bins as f64;

    let mut hist = vec![0.0; cx * cy * bins];
    for y in 0..cy * cfg.cell_size {
        for x in 0..cx * cfg.cell_size {
            // border pixels get no gradient along the clipped axis
            let gx = if x == 0 || x + 1 == w { 0.0 } else { p[[y, x + 1]] - p[[y, x - 1]] };
            let gy = if y == 0 || y + 1 == h { 0.0 } else { p[[y + 1, x]] - p[[y - 1, x]] };
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).to_degrees().rem_euclid(range);
            let pos = angle / width_deg;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = (lo as usize) % bins;
            let b1 = (b0 + 1) % bins;
            let cell = ((y / cfg.cell_size) * cx + x / cfg.cell_size) * bins;
            hist[cell + b0] += mag * (1.0 - frac);
            hist[cell + b1] += mag * frac;
        }
    }

    let (bx, by) = cfg.blocks(w, h);
    let bs = cfg.block_size;
    let mut out = Vec::with_capacity(cfg.descriptor_len(w, h));
    let mut block = Vec::with_capacity(bs * bs * bins);
    for byi in 0..by {
        for bxi in 0..bx {
            block.clear();
            for dy in 0..bs {
                for dx in 0..bs {
                    let c = ((byi * cfg.block_stride + dy) * cx + bxi * cfg.block_stride + dx) * bins;
                    block.extend_from_slice(&hist[c..c + bins]);
                }
            }
            l2_hys(&mut block);
            out.extend_from_slice(&block);
        }
    }
    Ok(out)
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
}

fn l2_hys(v: &mut [f64]) {
    l2_normalize(v);
    v.iter_mut().for_each(|x| *x = x.min(CLIP));
    l2_normalize(v);
}

/// One descriptor per row.
pub fn hog_matrix(images: &[GrayImage], cfg: &HogConfig) -> Result<FeatureMatrix> {
    let first = images.first().ok_or(Error::Empty("image list"))?;
    let (w, h) = (first.width(), first.height());
    let dim = cfg.descriptor_len(w, h);
    let mut m = Array2::zeros((images.len(), dim));
    for (i, img) in images.iter().enumerate() {
        if (img.width(), img.height()) != (w, h) {
            return Err(Error::shape("image size in batch", w * h, img.width() * img.height()));
        }
        let d = hog(img, cfg)?;
        m.row_mut(i).assign(&Array1::from(d));
    }
    Ok(m)
}

/// Per-column affine map of the fitted range onto `[low, high]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub low: f64,
    pub high: f64,
}

impl MinMaxScaler {
    /// Fits column ranges, mapping onto `[0.1, 0.9]`.
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        Self::fit_range(x, 0.1, 0.9)
    }

    pub fn fit_range(x: ArrayView2<'_, f64>, low: f64, high: f64) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Empty("scaler fit data"));
        }
        if !(low < high) {
            return Err(Error::InvalidArgument(format!("scaler range [{low}, {high}] is empty")));
        }
        let min = x.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b)).to_vec();
        let max = x.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b)).to_vec();
        Ok(Self { min, max, low, high })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Columns that were constant during fitting map to the range midpoint.
    /// Values outside the fitted range extrapolate linearly.
    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<FeatureMatrix> {
        if x.ncols() != self.dim() {
            return Err(Error::shape("scaler input dimension", self.dim(), x.ncols()));
        }
        let span = self.high - self.low;
        let mid = 0.5 * (self.low + self.high);
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, hi) = (self.min[j], self.max[j]);
            if hi > lo {
                col.mapv_inplace(|v| self.low + span * (v - lo) / (hi - lo));
            } else {
                col.fill(mid);
            }
        }
        Ok(out)
    }

    pub fn fit_transform(x: ArrayView2<'_, f64>) -> Result<(Self, FeatureMatrix)> {
        let s = Self::fit(x)?;
        let t = s.transform(x)?;
        Ok((s, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn resize_cases() {
        let c = GrayImage::filled(5, 3, 0.25).unwrap();
        let r = resize(&c, 7, 4).unwrap();
        assert_eq!((r.width(), r.height()), (7, 4));
        assert!(r.pixels().iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let img = GrayImage::new(array![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]).unwrap();
        assert_eq!(resize(&img, 3, 2).unwrap(), img);
        assert!(resize(&img, 0, 2).is_err());
    }

    #[test]
    fn resize_hand_table() {
        // 4x4 ramp-weighted checkerboard; each 2x2 output pixel samples at
        // source (0.5 | 2.5), i.e. averages a 2x2 source neighbourhood.
        let img = GrayImage::new(array![
            [1.0, 0.0, 0.8, 0.0],
            [0.0, 1.0, 0.0, 0.8],
            [0.6, 0.0, 0.4, 0.0],
            [0.0, 0.6, 0.0, 0.4],
        ])
        .unwrap();
        let r = resize(&img, 2, 2).unwrap();
        let want = array![[0.5, 0.4], [0.3, 0.2]];
        for (a, b) in r.pixels().iter().zip(&want) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn descriptor_lengths() {
        let cfg = HogConfig::default();
        assert_eq!(cfg.descriptor_len(50, 50), 8100);
        assert_eq!(cfg.descriptor_len(32, 32), 2916);
        let img = GrayImage::filled(50, 50, 0.3).unwrap();
        assert_eq!(hog(&img, &cfg).unwrap().len(), 8100);
    }

    #[test]
    fn constant_image_is_all_zero() {
        let img = GrayImage::filled(12, 12, 0.7).unwrap();
        assert!(hog(&img, &HogConfig::default()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_edge_votes_horizontal_bin() {
        let img = GrayImage::new(Array2::from_shape_fn((9, 9), |(_, x)| if x < 4 { 0.0 } else { 1.0 })).unwrap();
        let d = hog(&img, &HogConfig::default()).unwrap();
        let mut energy = [0.0; 9];
        for (i, v) in d.iter().enumerate() {
            energy[i % 9] += v;
        }
        let argmax = (0..9).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
        assert_eq!(argmax, 0);
    }

    #[test]
    fn too_small_image() {
        let img = GrayImage::filled(2, 8, 0.0).unwrap();
        assert!(hog(&img, &HogConfig::default()).is_err());
    }

    #[test]
    fn scaler_maps_training_range() {
        let x = array![[0.0, 5.0, 2.0], [10.0, 5.0, 4.0], [5.0, 5.0, 3.0]];
        let (s, t) = MinMaxScaler::fit_transform(x.view()).unwrap();
        let want = array![[0.1, 0.5, 0.1], [0.9, 0.5, 0.9], [0.5, 0.5, 0.5]];
        for (a, b) in t.iter().zip(&want) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        assert!(s.transform(array![[1.0, 2.0]].view()).is_err());
    }
}
