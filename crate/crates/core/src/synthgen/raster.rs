use super::binary::BinaryImage;
use super::shape::{Point, ShapeModel};
use crate::error::Result;

/// Scanline fill of the boundary polygon(s) with the even-odd rule, sampled
/// at pixel centres. Centres lying exactly on an edge count as inside.
pub fn rasterize(shape: &ShapeModel, width: usize, height: usize) -> Result<BinaryImage> {
    shape.validate()?;
    let mut img = BinaryImage::empty(width, height)?;
    let segs: Vec<(Point, Point)> = shape
        .edges
        .iter()
        .map(|&(a, b)| (shape.points[a], shape.points[b]))
        .collect();
    let mut xs: Vec<f64> = Vec::new();
    for y in 0..height {
        let yc = y as f64;
        xs.clear();
        for (a, b) in &segs {
            // half-open in y so shared vertices are counted once
            if (a.y <= yc && yc < b.y) || (b.y <= yc && yc < a.y) {
                xs.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let lo = pair[0].ceil().max(0.0);
            let hi = pair[1].floor().min(width as f64 - 1.0);
            let mut x = lo;
            while x <= hi {
                img.set(x as usize, y, true);
                x += 1.0;
            }
        }
    }
    for (a, b) in &segs {
        mark_segment(&mut img, *a, *b);
    }
    Ok(img)
}

fn mark_segment(img: &mut BinaryImage, a: Point, b: Point) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x0 = a.x.min(b.x).ceil().max(0.0);
    let x1 = a.x.max(b.x).floor().min(w - 1.0);
    let y0 = a.y.min(b.y).ceil().max(0.0);
    let y1 = a.y.max(b.y).floor().min(h - 1.0);
    let len = a.dist(b);
    let mut y = y0;
    while y <= y1 {
        let mut x = x0;
        while x <= x1 {
            let cross = (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x);
            if cross.abs() <= 1e-9 * len.max(1.0) {
                img.set(x as usize, y as usize, true);
            }
            x += 1.0;
        }
        y += 1.0;
    }
}
