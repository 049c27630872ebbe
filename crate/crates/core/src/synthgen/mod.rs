//! Synthetic binary glyphs from boundary control points.
//!
//! A class prototype is the mean of a jointly aligned image stack. Control
//! points sampled on its boundary are migrated onto each real image through
//! a sequence of shapes interpolated between signed distance transforms, and
//! the filled polygon through the migrated points is the synthetic
//! counterpart of that image. A normal distribution fitted to the migrated
//! points generates any number of new shapes.

mod binary;
mod congeal;
mod distance;
mod format;
mod migrate;
mod mvn;
mod raster;
mod shape;

pub use binary::{binarize, iou, BinarizeMode, BinaryImage};
pub use congeal::{build_prototype, congeal, Alignment, CongealConfig};
pub use distance::distance_transform;
pub use format::{read_shapes, write_shapes, ShapeRecord};
pub use migrate::{match_synthetic, optimize_control_points, MatchOutcome, MigrationConfig};
pub use mvn::{fit_mvn, sample_shapes, ShapeDistribution};
pub use raster::rasterize;
pub use shape::{extract_control_points, trace_contours, Point, ShapeModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hog::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub control_points: usize,
    /// Prototype intensity at or above which a pixel is foreground. When
    /// unset the threshold keeps as many pixels as the mean foreground area
    /// of the class images.
    pub prototype_threshold: Option<f64>,
    pub migration: MigrationConfig,
    pub congeal: CongealConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            control_points: 32,
            prototype_threshold: None,
            migration: MigrationConfig::default(),
            congeal: CongealConfig::default(),
        }
    }
}

/// Intensity of the `area`-th brightest pixel. Zero-intensity pixels never
/// pass.
fn area_threshold(img: &GrayImage, area: usize) -> f64 {
    let mut v: Vec<f64> = img.pixels().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v[area.clamp(1, v.len()) - 1].max(f64::MIN_POSITIVE)
}

/// Everything derived from one class's prototype.
#[derive(Clone, Debug)]
pub struct ClassTemplate {
    pub prototype: GrayImage,
    pub mask: BinaryImage,
    pub shape: ShapeModel,
    /// `rasterize(shape)`, the starting synthetic image for every migration.
    pub raster: BinaryImage,
}

impl ClassTemplate {
    pub fn build(reals: &[BinaryImage], cfg: &SynthConfig) -> Result<Self> {
        let grays: Vec<GrayImage> = reals.iter().map(BinaryImage::to_gray).collect();
        let prototype = build_prototype(&grays, &cfg.congeal)?;
        let threshold = match cfg.prototype_threshold {
            Some(t) => t,
            None => {
                let area = reals.iter().map(BinaryImage::count).sum::<usize>() as f64 / reals.len().max(1) as f64;
                area_threshold(&prototype, area.round() as usize)
            }
        };
        let mask = binarize(prototype.pixels(), BinarizeMode::Intensity(threshold))?;
        if mask.count() == 0 {
            return Err(Error::domain("ClassTemplate", "prototype is empty at the chosen threshold"));
        }
        // thin prototypes (a `1`) may have fewer boundary pixels than requested
        let n = cfg.control_points.min(mask.boundary_pixels().len());
        let shape = extract_control_points(&mask, n)?;
        let raster = rasterize(&shape, mask.width(), mask.height())?;
        Ok(Self { prototype, mask, shape, raster })
    }

    /// The template's control points carried into the frame of `real` by
    /// a similarity alignment of the real image onto the prototype.
    pub fn aligned_start(&self, real: &BinaryImage, cfg: &SynthConfig) -> Result<(ShapeModel, BinaryImage)> {
        let a = Alignment::estimate(&real.to_gray(), &self.prototype, &cfg.congeal)?;
        let points = self
            .shape
            .points
            .iter()
            .map(|p| {
                let (x, y) = a.apply(p.x, p.y);
                Point::new(x, y)
            })
            .collect();
        let shape = self.shape.with_points(points)?;
        let raster = rasterize(&shape, real.width(), real.height())?;
        Ok((shape, raster))
    }

    /// Migrates the template's control points onto `real`, starting from
    /// whichever of the aligned and unaligned template overlaps it more.
    pub fn fit(&self, real: &BinaryImage, cfg: &SynthConfig) -> Result<MatchOutcome> {
        let (shape, raster) = self.aligned_start(real, cfg)?;
        if iou(&raster, real)? > iou(&self.raster, real)? {
            match_synthetic(real, &shape, &raster, &cfg.migration)
        } else {
            match_synthetic(real, &self.shape, &self.raster, &cfg.migration)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(cx: f64, cy: f64, rx: f64, ry: f64) -> BinaryImage {
        let mut img = BinaryImage::empty(32, 32).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                if dx * dx + dy * dy <= 1.0 {
                    img.set(x, y, true);
                }
            }
        }
        img
    }

    #[test]
    fn template_and_migration_on_ellipses() {
        let reals: Vec<BinaryImage> = (0..6)
            .map(|i| blob(15.5 + (i % 3) as f64 - 1.0, 15.5, 7.0 + i as f64 * 0.5, 10.0))
            .collect();
        let cfg = SynthConfig::default();
        let t = ClassTemplate::build(&reals, &cfg).unwrap();
        assert_eq!(t.shape.len(), 32);
        for r in &reals {
            let m = t.fit(r, &cfg).unwrap();
            assert!(m.iou >= m.initial_iou);
            assert!(m.iou > 0.85, "{}", m.iou);
        }
    }

    #[test]
    fn dense_points_recover_convex_shape() {
        let img = blob(15.5, 15.5, 11.0, 8.0);
        let s = extract_control_points(&img, 48).unwrap();
        let r = rasterize(&s, 32, 32).unwrap();
        assert!(iou(&r, &img).unwrap() >= 0.98);
    }
}
