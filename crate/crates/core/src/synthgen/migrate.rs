use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::binary::{binarize, iou, BinarizeMode, BinaryImage};
use super::distance::distance_transform;
use super::raster::rasterize;
use super::shape::{Point, ShapeModel};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MigrationConfig {
    /// Intermediate images per call of [`optimize_control_points`].
    pub steps: usize,
    /// Cap on optimize/re-rasterize rounds in [`match_synthetic`].
    pub max_iterations: usize,
    /// Rounds stop once no point moves this far (pixels).
    pub tolerance: f64,
}

impl Default for MigrationConfig {
    fn default() -> Self {
        Self {
            steps: 5,
            max_iterations: 20,
            tolerance: 0.5,
        }
    }
}

/// Nearest pixel from `candidates` (row-major order); ties go to the first.
fn snap(p: Point, candidates: &[(usize, usize)]) -> Point {
    let mut best = (f64::INFINITY, candidates[0]);
    for &(x, y) in candidates {
        let d = (x as f64 - p.x).powi(2) + (y as f64 - p.y).powi(2);
        if d < best.0 {
            best = (d, (x, y));
        }
    }
    Point::new(best.1 .0 as f64, best.1 .1 as f64)
}

/// Walks the control points from the synthetic image `v` to the real image
/// `u` through `steps` intermediate shapes. Intermediate `i` is the
/// zero-level interior of `(1 − i/steps)·DT(v) + (i/steps)·DT(u)`; every
/// point snaps to that image's nearest boundary pixel.
pub fn optimize_control_points(
    u: &BinaryImage,
    v: &BinaryImage,
    shape: &ShapeModel,
    steps: usize,
) -> Result<ShapeModel> {
    if (u.width(), u.height()) != (v.width(), v.height()) {
        return Err(Error::shape("image size", u.width() * u.height(), v.width() * v.height()));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be positive".into()));
    }
    shape.validate()?;
    let du = distance_transform(u)?;
    let dv = distance_transform(v)?;
    let mut points = shape.points.clone();
    for i in 1..=steps {
        let t = i as f64 / steps as f64;
        let field = &dv * (1.0 - t) + &du * t;
        let inter = binarize(field.view(), BinarizeMode::SignedDistance)?;
        let boundary = inter.boundary_pixels();
        if boundary.is_empty() {
            return Err(Error::domain(
                "optimize_control_points",
                format!("intermediate image {i} of {steps} has no boundary"),
            ));
        }
        for p in points.iter_mut() {
            *p = snap(*p, &boundary);
        }
    }
    let mut out = shape.with_points(points)?;
    out.converged = true;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct MatchOutcome {
    pub shape: ShapeModel,
    pub image: BinaryImage,
    /// IoU of `image` with the real target.
    pub iou: f64,
    /// IoU of the starting raster with the real target.
    pub initial_iou: f64,
    pub iterations: usize,
    /// False when the round cap was reached while points were still moving.
    pub converged: bool,
}

/// Alternates [`optimize_control_points`] and re-rasterization until no point
/// moves more than the tolerance, returning the shape whose raster overlaps
/// `u` best among all rounds, the starting shape included.
pub fn match_synthetic(
    u: &BinaryImage,
    s0: &ShapeModel,
    v0: &BinaryImage,
    cfg: &MigrationConfig,
) -> Result<MatchOutcome> {
    let (w, h) = (u.width(), u.height());
    let start = rasterize(s0, w, h)?;
    let initial_iou = iou(&start, u)?;
    let mut best = (initial_iou, s0.clone(), start);
    let mut shape = s0.clone();
    let mut v = v0.clone();
    let mut iterations = 0;
    let mut converged = false;
    let mut vanished = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let next = match optimize_control_points(u, &v, &shape, cfg.steps) {
            Ok(next) => next,
            Err(Error::Domain { .. }) => {
                debug!("migration stopped after {iterations} rounds: an intermediate shape vanished");
                vanished = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let moved = next.max_displacement(&shape);
        v = rasterize(&next, w, h)?;
        shape = next;
        let score = iou(&v, u)?;
        if score > best.0 {
            best = (score, shape.clone(), v.clone());
        }
        if moved < cfg.tolerance {
            converged = true;
            break;
        }
    }
    if !converged && !vanished {
        warn!("control points still moving after {iterations} rounds; keeping the best match");
    }
    let (score, mut best_shape, image) = best;
    best_shape.converged = converged;
    Ok(MatchOutcome {
        shape: best_shape,
        image,
        iou: score,
        initial_iou,
        iterations,
        converged,
    })
}
