use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::binary::BinaryImage;
use crate::error::{Error, Result};

/// Pixel coordinates; `(0, 0)` is the centre of the top-left pixel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Control points joined by edges into one or more closed cycles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeModel {
    pub points: Vec<Point>,
    pub edges: Vec<(usize, usize)>,
    pub converged: bool,
}

impl ShapeModel {
    /// Builds closed cycles from consecutive points of each contour.
    pub fn from_contours(contours: &[Vec<Point>]) -> Result<Self> {
        let mut points = Vec::new();
        let mut edges = Vec::new();
        for c in contours {
            if c.len() < 3 {
                return Err(Error::InvalidArgument(format!("contour with {} points cannot close", c.len())));
            }
            let base = points.len();
            points.extend_from_slice(c);
            for i in 0..c.len() {
                edges.push((base + i, base + (i + 1) % c.len()));
            }
        }
        let s = Self { points, edges, converged: false };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Every point must sit on exactly two edges.
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Empty("shape"));
        }
        let mut degree = vec![0usize; self.points.len()];
        for &(a, b) in &self.edges {
            if a >= self.points.len() || b >= self.points.len() {
                return Err(Error::InvalidArgument(format!("edge ({a}, {b}) references a missing point")));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("edge ({a}, {a}) is a self loop")));
            }
            degree[a] += 1;
            degree[b] += 1;
        }
        if let Some(i) = degree.iter().position(|&d| d != 2) {
            return Err(Error::InvalidArgument(format!(
                "point {i} lies on {} edges; the boundary is not a set of closed cycles",
                degree[i]
            )));
        }
        Ok(())
    }

    /// Same topology with new coordinates.
    pub fn with_points(&self, points: Vec<Point>) -> Result<Self> {
        if points.len() != self.points.len() {
            return Err(Error::shape("control point count", self.points.len(), points.len()));
        }
        Ok(Self {
            points,
            edges: self.edges.clone(),
            converged: false,
        })
    }

    /// Largest single-point displacement between two shapes of equal size.
    pub fn max_displacement(&self, other: &ShapeModel) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| a.dist(*b))
            .fold(0.0, f64::max)
    }

    /// Stacked `[x_0, y_0, x_1, y_1, …]`.
    pub fn to_vector(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y]).collect()
    }
}

type Key = (i64, i64);

/// Closed iso-contours between foreground and background pixel centres,
/// foreground taken as 8-connected. Includes hole boundaries. Each contour
/// starts at its top-most, then left-most vertex.
pub fn trace_contours(img: &BinaryImage) -> Vec<Vec<Point>> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let at = |x: isize, y: isize| img.get_signed(x, y);
    // vertex keys are doubled coordinates (2y, 2x) so edge midpoints are integral
    let mut adj: BTreeMap<Key, Vec<Key>> = BTreeMap::new();
    let mut link = |a: Key, b: Key| {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    };
    for cy in -1..h {
        for cx in -1..w {
            let (tl, tr, bl, br) = (at(cx, cy), at(cx + 1, cy), at(cx, cy + 1), at(cx + 1, cy + 1));
            let (y2, x2) = (2 * cy as i64, 2 * cx as i64);
            let t = (y2, x2 + 1);
            let b = (y2 + 2, x2 + 1);
            let l = (y2 + 1, x2);
            let r = (y2 + 1, x2 + 2);
            let mut active = Vec::with_capacity(4);
            if tl != tr {
                active.push(t);
            }
            if tr != br {
                active.push(r);
            }
            if bl != br {
                active.push(b);
            }
            if tl != bl {
                active.push(l);
            }
            match active.len() {
                2 => link(active[0], active[1]),
                4 if tl => {
                    link(t, r);
                    link(l, b);
                }
                4 => {
                    link(t, l);
                    link(r, b);
                }
                _ => {}
            }
        }
    }

    let mut seen: BTreeMap<Key, bool> = adj.keys().map(|&k| (k, false)).collect();
    let mut contours = Vec::new();
    for (&start, _) in adj.iter() {
        if seen[&start] {
            continue;
        }
        let mut loop_keys = vec![start];
        seen.insert(start, true);
        let mut prev = start;
        let mut cur = *adj[&start].iter().min().expect("degree two");
        while cur != start {
            seen.insert(cur, true);
            loop_keys.push(cur);
            let next = adj[&cur].iter().copied().find(|&n| n != prev).expect("degree two");
            prev = cur;
            cur = next;
        }
        contours.push(
            loop_keys
                .into_iter()
                .map(|(y2, x2)| Point::new(x2 as f64 / 2.0, y2 as f64 / 2.0))
                .collect(),
        );
    }
    contours
}

fn perimeter(c: &[Point]) -> f64 {
    (0..c.len()).map(|i| c[i].dist(c[(i + 1) % c.len()])).sum()
}

/// `count` points at equal arc-length spacing, starting at the first vertex.
fn resample(c: &[Point], count: usize) -> Vec<Point> {
    let total = perimeter(c);
    let step = total / count as f64;
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..count {
        let target = k as f64 * step;
        loop {
            let len = c[seg].dist(c[(seg + 1) % c.len()]);
            if target <= seg_start + len || seg + 1 == c.len() {
                let t = if len > 0.0 { ((target - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
                let (a, b) = (c[seg], c[(seg + 1) % c.len()]);
                out.push(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
                break;
            }
            seg_start += len;
            seg += 1;
        }
    }
    out
}

/// Splits `n` over contours in proportion to length (largest remainder).
/// Contours that would receive fewer than three points are dropped.
fn allocate(lengths: &[f64], n: usize) -> Vec<usize> {
    let mut active: Vec<usize> = (0..lengths.len()).collect();
    active.sort_by(|&a, &b| lengths[b].total_cmp(&lengths[a]).then(a.cmp(&b)));
    loop {
        let total: f64 = active.iter().map(|&i| lengths[i]).sum();
        let mut counts = vec![0usize; lengths.len()];
        let mut rem: Vec<(f64, usize)> = Vec::new();
        let mut used = 0;
        for &i in &active {
            let exact = n as f64 * lengths[i] / total;
            counts[i] = exact.floor() as usize;
            used += counts[i];
            rem.push((exact - exact.floor(), i));
        }
        rem.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in rem.iter().take(n - used) {
            counts[i] += 1;
        }
        if active.len() <= 1 || active.iter().all(|&i| counts[i] >= 3) {
            return counts;
        }
        active.pop();
    }
}

/// Samples `n` control points at equal arc-length spacing along the
/// boundary contours of `img`, distributing them over contours by length.
pub fn extract_control_points(img: &BinaryImage, n: usize) -> Result<ShapeModel> {
    if img.count() == 0 {
        return Err(Error::domain("extract_control_points", "image has no foreground"));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 control points, got {n}")));
    }
    let boundary = img.boundary_pixels().len();
    if n > boundary {
        return Err(Error::InvalidArgument(format!(
            "{n} control points requested but the boundary has only {boundary} pixels"
        )));
    }
    let contours = trace_contours(img);
    let lengths: Vec<f64> = contours.iter().map(|c| perimeter(c)).collect();
    let counts = allocate(&lengths, n);
    let sampled: Vec<Vec<Point>> = contours
        .iter()
        .zip(&counts)
        .filter(|(_, &k)| k >= 3)
        .map(|(c, &k)| resample(c, k))
        .collect();
    ShapeModel::from_contours(&sampled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(size: usize, cx: f64, cy: f64, r: f64) -> BinaryImage {
        let mut img = BinaryImage::empty(size, size).unwrap();
        for y in 0..size {
            for x in 0..size {
                if (x as f64 - cx).hypot(y as f64 - cy) <= r {
                    img.set(x, y, true);
                }
            }
        }
        img
    }

    #[test]
    fn square_contour_and_four_points() {
        let mut img = BinaryImage::empty(12, 12).unwrap();
        for y in 2..10 {
            for x in 2..10 {
                img.set(x, y, true);
            }
        }
        let c = trace_contours(&img);
        assert_eq!(c.len(), 1);
        let s = extract_control_points(&img, 4).unwrap();
        assert_eq!(s.len(), 4);
        let gaps: Vec<f64> = (0..4).map(|i| s.points[i].dist(s.points[(i + 1) % 4])).collect();
        let per = perimeter(&c[0]) / 4.0;
        // chord spacing of points equally spaced along the perimeter
        for g in &gaps {
            assert!((g - gaps[0]).abs() <= 1.0, "{gaps:?}");
            assert!(*g <= per + 1e-9);
        }
    }

    #[test]
    fn disk_spacing_uniform() {
        let img = disk(40, 19.5, 19.5, 14.0);
        let s = extract_control_points(&img, 16).unwrap();
        let gaps: Vec<f64> = (0..16).map(|i| s.points[i].dist(s.points[(i + 1) % 16])).collect();
        let mean = gaps.iter().sum::<f64>() / 16.0;
        for g in gaps {
            assert!((g - mean).abs() <= 0.1 * mean, "{g} vs {mean}");
        }
    }

    #[test]
    fn ring_has_two_contours() {
        let mut img = disk(30, 14.5, 14.5, 11.0);
        let hole = disk(30, 14.5, 14.5, 5.0);
        for y in 0..30 {
            for x in 0..30 {
                if hole.get(x, y) {
                    img.set(x, y, false);
                }
            }
        }
        assert_eq!(trace_contours(&img).len(), 2);
        let s = extract_control_points(&img, 32).unwrap();
        s.validate().unwrap();
        assert_eq!(s.len(), 32);
    }

    #[test]
    fn diagonal_pixels_are_one_component() {
        let img = BinaryImage::from_rows(&["1000", "0100", "0010"]).unwrap();
        assert_eq!(trace_contours(&img).len(), 1);
    }

    #[test]
    fn degenerate_requests() {
        let img = BinaryImage::from_rows(&["000", "010", "000"]).unwrap();
        assert!(extract_control_points(&img, 4).is_err());
        assert!(extract_control_points(&BinaryImage::empty(3, 3).unwrap(), 3).is_err());
    }

    #[test]
    fn allocation_drops_tiny_contours() {
        assert_eq!(allocate(&[100.0, 1.0], 10), vec![10, 0]);
        assert_eq!(allocate(&[30.0, 10.0], 8), vec![8, 0]);
        assert_eq!(allocate(&[20.0, 20.0], 8), vec![4, 4]);
    }

    #[test]
    fn validation_catches_open_chain() {
        let s = ShapeModel {
            points: vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0)],
            edges: vec![(0, 1), (1, 2)],
            converged: false,
        };
        assert!(s.validate().is_err());
    }
}
