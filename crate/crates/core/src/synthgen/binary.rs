use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::hog::GrayImage;

/// Two-level image; `true` is foreground.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    pixels: Array2<bool>,
}

impl BinaryImage {
    /// `pixels` is `height × width`.
    pub fn new(pixels: Array2<bool>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::Empty("binary image"));
        }
        Ok(Self { pixels })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(Array2::from_elem((height, width), false))
    }

    /// Parses rows of `0`/`1` characters (or `.`/`#`).
    pub fn from_rows(rows: &[&str]) -> Result<Self> {
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        let mut px = Array2::from_elem((h, w), false);
        for (y, row) in rows.iter().enumerate() {
            if row.len() != w {
                return Err(Error::shape("row length", w, row.len()));
            }
            for (x, c) in row.bytes().enumerate() {
                px[[y, x]] = match c {
                    b'1' | b'#' => true,
                    b'0' | b'.' => false,
                    _ => return Err(Error::Parse { line: y + 1, message: format!("unexpected pixel {:?}", c as char) }),
                };
            }
        }
        Self::new(px)
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[[y, x]]
    }

    /// Out-of-range coordinates read as background.
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width()
            && (y as usize) < self.height()
            && self.pixels[[y as usize, x as usize]]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.pixels[[y, x]] = v;
    }

    pub fn pixels(&self) -> ArrayView2<'_, bool> {
        self.pixels.view()
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn transpose(&self) -> Self {
        Self { pixels: self.pixels.t().to_owned() }
    }

    /// Foreground pixels with a 4-neighbour that is background or outside
    /// the image, as `(x, y)` in row-major order.
    pub fn boundary_pixels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for ((y, x), &p) in self.pixels.indexed_iter() {
            if p && self.is_boundary(x, y) {
                out.push((x, y));
            }
        }
        out
    }

    pub fn is_boundary(&self, x: usize, y: usize) -> bool {
        if !self.get(x, y) {
            return false;
        }
        let (xi, yi) = (x as isize, y as isize);
        [(-1, 0), (1, 0), (0, -1), (0, 1)]
            .iter()
            .any(|(dx, dy)| !self.get_signed(xi + dx, yi + dy))
    }

    /// 1.0 for foreground, 0.0 for background.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::new(self.pixels.mapv(|p| if p { 1.0 } else { 0.0 })).expect("values in [0,1]")
    }

    /// ASCII rendering with `#` for foreground.
    pub fn to_ascii(&self) -> String {
        let mut s = String::with_capacity((self.width() + 1) * self.height());
        for row in self.pixels.rows() {
            s.extend(row.iter().map(|&p| if p { '#' } else { '.' }));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BinarizeMode {
    /// Foreground where the signed distance is `≤ 0`.
    SignedDistance,
    /// Foreground where the intensity is `≥ threshold`.
    Intensity(f64),
}

pub fn binarize(values: ArrayView2<'_, f64>, mode: BinarizeMode) -> Result<BinaryImage> {
    let px = match mode {
        BinarizeMode::SignedDistance => values.mapv(|v| v <= 0.0),
        BinarizeMode::Intensity(t) => values.mapv(|v| v >= t),
    };
    BinaryImage::new(px)
}

/// Intersection over union; two empty images score 1.
pub fn iou(a: &BinaryImage, b: &BinaryImage) -> Result<f64> {
    if a.pixels.dim() != b.pixels.dim() {
        return Err(Error::shape("image size", a.width() * a.height(), b.width() * b.height()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.pixels.iter().zip(&b.pixels) {
        inter += usize::from(p && q);
        union += usize::from(p || q);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn boundary_of_block() {
        let img = BinaryImage::from_rows(&["00000", "01110", "01110", "01110", "00000"]).unwrap();
        let b = img.boundary_pixels();
        assert_eq!(b.len(), 8);
        assert!(!b.contains(&(2, 2)));
        let full = BinaryImage::from_rows(&["11", "11"]).unwrap();
        assert_eq!(full.boundary_pixels().len(), 4);
    }

    #[test]
    fn binarize_modes() {
        let v = array![[-1.0, 0.0, 0.5], [2.0, -0.1, 0.2]];
        let b = binarize(v.view(), BinarizeMode::SignedDistance).unwrap();
        assert_eq!(b.pixels(), array![[true, true, false], [false, true, false]]);
        let b = binarize(v.view(), BinarizeMode::Intensity(0.5)).unwrap();
        assert_eq!(b.count(), 2);
        let pos = array![[1.0, 2.0], [0.5, 3.0]];
        assert_eq!(binarize(pos.view(), BinarizeMode::SignedDistance).unwrap().count(), 0);
    }

    #[test]
    fn iou_values() {
        let a = BinaryImage::from_rows(&["110", "000"]).unwrap();
        let b = BinaryImage::from_rows(&["011", "000"]).unwrap();
        assert_eq!(iou(&a, &b).unwrap(), 1.0 / 3.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let e = BinaryImage::empty(3, 2).unwrap();
        assert_eq!(iou(&e, &e).unwrap(), 1.0);
    }
}
