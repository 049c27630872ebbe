//! Dataset readers and writers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ndarray::{Array2, ArrayView2};

use smcae_core::synthgen::BinaryImage;
use smcae_core::GrayImage;

pub const UCI_TRAIN: usize = 3823;
pub const UCI_TEST: usize = 1917;
pub const BITMAP_SIDE: usize = 32;
pub const CUFSF_TRAIN: usize = 500;
pub const CUFSF_TEST: usize = 694;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBitmap {
    pub image: BinaryImage,
    pub label: usize,
}

fn is_bitmap_row(s: &str) -> bool {
    s.len() == BITMAP_SIDE && s.bytes().all(|b| b == b'0' || b == b'1')
}

fn parse_label(line: usize, s: &str) -> Result<usize> {
    let l: usize = s.trim().parse().map_err(|_| anyhow!("line {line}: expected a digit label, found {s:?}"))?;
    if l > 9 {
        bail!("line {line}: label {l} is outside 0..9");
    }
    Ok(l)
}

/// 32×32 bitmap blocks, each 32 lines of `0`/`1` followed by a label line.
/// Free-text lines before the first block are skipped.
pub fn read_bitmaps<R: BufRead>(r: R) -> Result<Vec<LabeledBitmap>> {
    let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
    let start = lines.iter().position(|l| is_bitmap_row(l.trim_end())).unwrap_or(lines.len());
    let mut out = Vec::new();
    let mut i = start;
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let mut px = Array2::from_elem((BITMAP_SIDE, BITMAP_SIDE), false);
        for y in 0..BITMAP_SIDE {
            let ln = i + y;
            let row = lines
                .get(ln)
                .ok_or_else(|| anyhow!("line {}: file ends inside a bitmap ({} of 32 rows)", ln + 1, y))?
                .trim_end();
            if !is_bitmap_row(row) {
                bail!("line {}: expected 32 characters of 0/1, found {row:?}", ln + 1);
            }
            for (x, b) in row.bytes().enumerate() {
                px[[y, x]] = b == b'1';
            }
        }
        let ln = i + BITMAP_SIDE;
        let label = lines.get(ln).ok_or_else(|| anyhow!("line {}: missing label after bitmap", ln + 1))?;
        out.push(LabeledBitmap { image: BinaryImage::new(px)?, label: parse_label(ln + 1, label)? });
        i = ln + 1;
    }
    Ok(out)
}

pub fn write_bitmaps<W: Write>(mut w: W, header: &[&str], items: &[LabeledBitmap]) -> Result<()> {
    for h in header {
        writeln!(w, "{h}")?;
    }
    for it in items {
        if (it.image.width(), it.image.height()) != (BITMAP_SIDE, BITMAP_SIDE) {
            bail!("bitmaps must be 32x32, got {}x{}", it.image.width(), it.image.height());
        }
        for row in it.image.pixels().outer_iter() {
            let s: String = row.iter().map(|&b| if b { '1' } else { '0' }).collect();
            writeln!(w, "{s}")?;
        }
        writeln!(w, " {}", it.label)?;
    }
    Ok(())
}

/// 64 comma-separated block counts then the label, one instance per line.
pub fn read_preprocessed<R: BufRead>(r: R) -> Result<(Array2<f64>, Vec<usize>)> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 65 {
            bail!("line {ln}: expected 65 comma-separated fields, found {}", fields.len());
        }
        for f in &fields[..64] {
            let v: u32 = f.trim().parse().map_err(|_| anyhow!("line {ln}: invalid attribute {f:?}"))?;
            if v > 16 {
                bail!("line {ln}: attribute {v} is outside 0..16");
            }
            values.push(f64::from(v));
        }
        labels.push(parse_label(ln, fields[64])?);
    }
    Ok((Array2::from_shape_vec((labels.len(), 64), values)?, labels))
}

pub fn write_preprocessed<W: Write>(mut w: W, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<()> {
    for (row, l) in x.outer_iter().zip(labels) {
        for v in row {
            write!(w, "{},", *v as u32)?;
        }
        writeln!(w, "{l}")?;
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

pub fn load_bitmaps(path: &Path) -> Result<Vec<LabeledBitmap>> {
    read_bitmaps(open(path)?).with_context(|| format!("in {}", path.display()))
}

/// Training and test partitions in both optdigits layouts.
#[derive(Clone, Debug)]
pub struct Optdigits {
    pub train_features: Array2<f64>,
    pub train_labels: Vec<usize>,
    pub test_features: Array2<f64>,
    pub test_labels: Vec<usize>,
    pub train_bitmaps: Vec<LabeledBitmap>,
    pub test_bitmaps: Vec<LabeledBitmap>,
}

/// Reads `<prefix>.tra`, `<prefix>.tes`, `<prefix>-orig.tra` and
/// `<prefix>-orig.tes` from `dir`. Counts other than the standard split only
/// produce a warning.
pub fn load_optdigits(dir: &Path, prefix: &str) -> Result<Optdigits> {
    let p = |suffix: &str| dir.join(format!("{prefix}{suffix}"));
    let load_pre = |path: PathBuf| read_preprocessed(open(&path)?).with_context(|| format!("in {}", path.display()));
    let (train_features, train_labels) = load_pre(p(".tra"))?;
    let (test_features, test_labels) = load_pre(p(".tes"))?;
    let train_bitmaps = load_bitmaps(&p("-orig.tra"))?;
    let test_bitmaps = load_bitmaps(&p("-orig.tes"))?;
    if (train_labels.len(), test_labels.len()) != (UCI_TRAIN, UCI_TEST) {
        log::warn!(
            "optdigits split is {}/{}, not the standard {UCI_TRAIN}/{UCI_TEST}",
            train_labels.len(),
            test_labels.len()
        );
    }
    Ok(Optdigits { train_features, train_labels, test_features, test_labels, train_bitmaps, test_bitmaps })
}

pub fn gray_from_dynamic(img: &image::DynamicImage) -> Result<GrayImage> {
    let luma = img.to_luma8();
    let (w, h) = luma.dimensions();
    let px = Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
        f64::from(luma.get_pixel(x as u32, y as u32)[0]) / 255.0
    });
    Ok(GrayImage::new(px)?)
}

pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).with_context(|| format!("decoding {}", path.display()))?;
    gray_from_dynamic(&img)
}

pub fn save_gray(img: &GrayImage, path: &Path) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let buf = image::GrayImage::from_fn(w, h, |x, y| image::Luma([(img.get(x as usize, y as usize) * 255.0).round() as u8]));
    buf.save(path).with_context(|| format!("writing {}", path.display()))
}

const IMAGE_EXTENSIONS: [&str; 5] = ["pgm", "png", "ppm", "pbm", "pnm"];

/// Image files in `dir` keyed by file stem.
fn index_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct ImagePairs {
    pub ids: Vec<String>,
    pub photos: Vec<GrayImage>,
    pub sketches: Vec<GrayImage>,
}

impl ImagePairs {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct FaceSplit {
    pub train: ImagePairs,
    pub test: ImagePairs,
}

/// `train <id>` / `test <id>` lines; `#` starts a comment.
pub fn read_split<R: BufRead>(r: R) -> Result<(Vec<String>, Vec<String>)> {
    let (mut train, mut test) = (BTreeSet::new(), BTreeSet::new());
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        let mut f = t.split_whitespace();
        let (part, id) = match (f.next(), f.next(), f.next()) {
            (Some(p), Some(id), None) => (p, id.to_string()),
            _ => bail!("line {}: expected `<train|test> <id>`, found {t:?}", i + 1),
        };
        let set = match part {
            "train" => &mut train,
            "test" => &mut test,
            other => bail!("line {}: unknown partition {other:?}", i + 1),
        };
        if !set.insert(id.clone()) {
            bail!("line {}: identifier {id:?} listed twice", i + 1);
        }
    }
    if let Some(id) = train.intersection(&test).next() {
        bail!("identifier {id:?} is in both partitions");
    }
    Ok((train.into_iter().collect(), test.into_iter().collect()))
}

/// Photo/sketch pairs matched by file stem, partitioned by the split file.
/// Identifiers are sorted within each partition.
pub fn load_image_pairs(photo_dir: &Path, sketch_dir: &Path, split_file: &Path) -> Result<FaceSplit> {
    let (train_ids, test_ids) = read_split(open(split_file)?).with_context(|| format!("in {}", split_file.display()))?;
    let photos = index_images(photo_dir)?;
    let sketches = index_images(sketch_dir)?;
    let load = |ids: Vec<String>| -> Result<ImagePairs> {
        let mut pairs = ImagePairs::default();
        for id in ids {
            let p = photos.get(&id).ok_or_else(|| anyhow!("no photo for identifier {id:?} in {}", photo_dir.display()))?;
            let s = sketches
                .get(&id)
                .ok_or_else(|| anyhow!("no sketch for identifier {id:?} in {}", sketch_dir.display()))?;
            pairs.photos.push(load_gray(p)?);
            pairs.sketches.push(load_gray(s)?);
            pairs.ids.push(id);
        }
        Ok(pairs)
    };
    let split = FaceSplit { train: load(train_ids)?, test: load(test_ids)? };
    if (split.train.len(), split.test.len()) != (CUFSF_TRAIN, CUFSF_TEST) {
        log::warn!(
            "face split is {}/{}, not the standard {CUFSF_TRAIN}/{CUFSF_TEST}",
            split.train.len(),
            split.test.len()
        );
    }
    Ok(split)
}

/// Headerless comma-separated matrix.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{} line {}", path.display(), i + 1))?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            bail!("{} line {}: {} fields, expected {}", path.display(), i + 1, rec.len(), cols.unwrap());
        }
        for f in rec.iter() {
            let v: f64 = f.trim().parse().map_err(|_| anyhow!("{} line {}: invalid number {f:?}", path.display(), i + 1))?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, cols.unwrap_or(0)), values)?)
}

pub fn write_matrix_csv(path: &Path, x: ArrayView2<'_, f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for row in x.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}
