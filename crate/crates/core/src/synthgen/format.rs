//! Plain-text shape records:
//!
//! ```text
//! shape <points> <width> <height>
//! <x> <y>            (one line per point)
//! edges <count>
//! <i> <j>            (one line per edge)
//! ```
//!
//! A file holds any number of records back to back. Blank lines and lines
//! starting with `#` are ignored.

use std::io::{BufRead, Write};

use super::shape::{Point, ShapeModel};
use crate::error::{Error, Result};

/// A shape together with the raster size it lives in.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeRecord {
    pub shape: ShapeModel,
    pub width: usize,
    pub height: usize,
}

pub fn write_shapes<W: Write>(mut w: W, records: &[ShapeRecord]) -> Result<()> {
    for r in records {
        writeln!(w, "shape {} {} {}", r.shape.len(), r.width, r.height)?;
        for p in &r.shape.points {
            writeln!(w, "{} {}", p.x, p.y)?;
        }
        writeln!(w, "edges {}", r.shape.edges.len())?;
        for (a, b) in &r.shape.edges {
            writeln!(w, "{a} {b}")?;
        }
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn fields<'a>(line: usize, text: &'a str, want: usize) -> Result<Vec<&'a str>> {
    let f: Vec<&str> = text.split_whitespace().collect();
    if f.len() != want {
        return Err(parse_err(line, format!("expected {want} fields, found {}", f.len())));
    }
    Ok(f)
}

fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| parse_err(line, format!("invalid number {s:?}")))
}

pub fn read_shapes<R: BufRead>(r: R) -> Result<Vec<ShapeRecord>> {
    let mut lines = Vec::new();
    for (i, l) in r.lines().enumerate() {
        let l = l?;
        let t = l.trim();
        if !t.is_empty() && !t.starts_with('#') {
            lines.push((i + 1, t.to_string()));
        }
    }
    let mut it = lines.into_iter();
    let mut out = Vec::new();
    while let Some((ln, header)) = it.next() {
        let h = fields(ln, &header, 4)?;
        if h[0] != "shape" {
            return Err(parse_err(ln, format!("expected `shape` header, found {:?}", h[0])));
        }
        let (n, width, height): (usize, usize, usize) = (num(ln, h[1])?, num(ln, h[2])?, num(ln, h[3])?);
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, l) = it.next().ok_or_else(|| parse_err(ln, "file ends inside the point list"))?;
            let f = fields(ln, &l, 2)?;
            let p = Point::new(num(ln, f[0])?, num(ln, f[1])?);
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(parse_err(ln, "non-finite coordinate"));
            }
            points.push(p);
        }
        let (eln, el) = it.next().ok_or_else(|| parse_err(ln, "missing `edges` line"))?;
        let f = fields(eln, &el, 2)?;
        if f[0] != "edges" {
            return Err(parse_err(eln, format!("expected `edges`, found {:?}", f[0])));
        }
        let m: usize = num(eln, f[1])?;
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, l) = it.next().ok_or_else(|| parse_err(eln, "file ends inside the edge list"))?;
            let f = fields(ln, &l, 2)?;
            edges.push((num(ln, f[0])?, num(ln, f[1])?));
        }
        let shape = ShapeModel { points, edges, converged: false };
        shape.validate().map_err(|e| parse_err(ln, format!("shape starting here is invalid: {e}")))?;
        out.push(ShapeRecord { shape, width, height });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = "shape 3 8 6\n1 2\n6.5 2\n1.25 5\nedges 3\n0 1\n1 2\n2 0\n";

    #[test]
    fn golden_round_trip() {
        let recs = read_shapes(GOLDEN.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].shape.points[2], Point::new(1.25, 5.0));
        let mut buf = Vec::new();
        write_shapes(&mut buf, &recs).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), GOLDEN);
    }

    #[test]
    fn floats_are_exact() {
        let pts = vec![Point::new(0.1, 1.0 / 3.0), Point::new(7.7e-3, 2.0), Point::new(5.0, 4.125)];
        let rec = ShapeRecord { shape: ShapeModel::from_contours(&[pts]).unwrap(), width: 9, height: 9 };
        let mut buf = Vec::new();
        write_shapes(&mut buf, &[rec.clone(), rec.clone()]).unwrap();
        let back = read_shapes(buf.as_slice()).unwrap();
        assert_eq!(back, vec![rec.clone(), rec]);
    }

    #[test]
    fn errors_name_the_line() {
        let bad = "shape 3 8 6\n1 2\n6.5 x\n1 5\nedges 3\n0 1\n1 2\n2 0\n";
        match read_shapes(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let open = "shape 3 8 6\n1 2\n6.5 2\n1 5\nedges 2\n0 1\n1 2\n";
        assert!(read_shapes(open.as_bytes()).is_err());
        let truncated = "shape 3 8 6\n1 2\n";
        assert!(read_shapes(truncated.as_bytes()).is_err());
    }
}
