//! Grid types shared by every stage: label maps, class-score maps, RGB
//! images and half-open bounding boxes.
//!
//! Coordinates are `(row, col)` with rows growing downward. A box covers the
//! half-open range `[x0, x1) × [y0, y1)`.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Label value for pixels excluded from losses, features and metrics.
pub const IGNORE: u8 = 255;

/// Largest class count representable next to [`IGNORE`].
pub const MAX_CLASSES: usize = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::Invalid(format!(
                "degenerate box ({x0},{y0},{x1},{y1})"
            )));
        }
        Ok(BoundingBox { x0, y0, x1, y1 })
    }

    /// Box covering a whole `height × width` grid.
    pub fn full(height: usize, width: usize) -> Self {
        BoundingBox {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.y0 && row < self.y1 && col >= self.x0 && col < self.x1
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> usize {
        let w = self.x1.min(other.x1).saturating_sub(self.x0.max(other.x0));
        let h = self.y1.min(other.y1).saturating_sub(self.y0.max(other.y0));
        w * h
    }

    /// Box expressed relative to `outer`'s origin, for composing crops.
    pub fn offset_by(&self, outer: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x0: self.x0 + outer.x0,
            y0: self.y0 + outer.y0,
            x1: self.x1 + outer.x0,
            y1: self.y1 + outer.y0,
        }
    }

    pub(crate) fn check_within(&self, height: usize, width: usize) -> Result<()> {
        if self.x0 >= self.x1 || self.y0 >= self.y1 || self.x1 > width || self.y1 > height {
            return Err(Error::Bounds {
                x0: self.x0,
                y0: self.y0,
                x1: self.x1,
                y1: self.y1,
                width,
                height,
            });
        }
        Ok(())
    }
}

/// Operations common to every per-pixel grid.
pub trait Grid: Sized {
    fn height(&self) -> usize;
    fn width(&self) -> usize;

    /// Copies the pixels inside `bbox` into a new grid.
    fn crop(&self, bbox: &BoundingBox) -> Result<Self>;

    /// Column `j` of the result is column `width - 1 - j` of `self`.
    fn mirror_horizontal(&self) -> Self;
}

/// Copies rows `[y0, y1)`, columns `[x0, x1)` of a row-major buffer holding
/// `depth` values per pixel.
fn crop_buffer<T: Copy>(data: &[T], width: usize, depth: usize, bbox: &BoundingBox) -> Vec<T> {
    let mut out = Vec::with_capacity(bbox.area() * depth);
    for row in bbox.y0..bbox.y1 {
        let start = (row * width + bbox.x0) * depth;
        let end = (row * width + bbox.x1) * depth;
        out.extend_from_slice(&data[start..end]);
    }
    out
}

fn mirror_buffer<T: Copy>(data: &[T], height: usize, width: usize, depth: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len());
    for row in 0..height {
        for col in (0..width).rev() {
            let at = (row * width + col) * depth;
            out.extend_from_slice(&data[at..at + depth]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "label map must be at least 1x1, got {height}x{width}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} labels for a {height}x{width} map",
                labels.len()
            )));
        }
        Ok(LabelMap {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.labels[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.labels
    }

    /// Checks that every value is a class id below `classes` or [`IGNORE`],
    /// reporting the first offending pixel in row-major order.
    pub fn validate(&self, classes: usize) -> Result<()> {
        if classes > MAX_CLASSES {
            return Err(Error::Invalid(format!(
                "{classes} classes exceeds the maximum of {MAX_CLASSES}"
            )));
        }
        match self
            .labels
            .iter()
            .position(|&v| v != IGNORE && v as usize >= classes)
        {
            None => Ok(()),
            Some(i) => Err(Error::LabelValue {
                value: self.labels[i],
                row: i / self.width,
                col: i % self.width,
                classes,
            }),
        }
    }

    pub fn count_annotated(&self) -> usize {
        self.labels.iter().filter(|&&v| v != IGNORE).count()
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| match source {
            image::ImageError::IoError(e) => Error::io(path, e),
            source => Error::Image {
                path: path.to_path_buf(),
                source,
            },
        })?;
        let gray = match img {
            image::DynamicImage::ImageLuma8(g) => g,
            other => {
                return Err(Error::Format(format!(
                    "{}: label map must be 8-bit single channel, found {:?}",
                    path.display(),
                    other.color()
                )))
            }
        };
        let (w, h) = gray.dimensions();
        Self::new(h as usize, w as usize, gray.into_raw())
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        image::save_buffer(
            path,
            &self.labels,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl Grid for LabelMap {
    fn height(&self) -> usize {
        self.height
    }

    fn width(&self) -> usize {
        self.width
    }

    fn crop(&self, bbox: &BoundingBox) -> Result<Self> {
        bbox.check_within(self.height, self.width)?;
        Self::new(
            bbox.height(),
            bbox.width(),
            crop_buffer(&self.labels, self.width, 1, bbox),
        )
    }

    fn mirror_horizontal(&self) -> Self {
        LabelMap {
            height: self.height,
            width: self.width,
            labels: mirror_buffer(&self.labels, self.height, self.width, 1),
        }
    }
}

/// Interpolation used by [`ScoreMap::resize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Nearest,
    Bilinear,
}

/// One output coordinate of a 1-D bilinear resampling: the two source
/// indices and the weight of the second.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub frac: f64,
}

/// Align-corners-false sample positions: output `i` reads the source at
/// `(i + 0.5) · in/out − 0.5`, clamped to the valid range.
pub(crate) fn bilinear_taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            Tap {
                lo,
                hi,
                frac: src - lo as f64,
            }
        })
        .collect()
}

pub(crate) fn nearest_taps(in_len: usize, out_len: usize) -> Vec<usize> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|i| (((i as f64 + 0.5) * scale).floor() as usize).min(in_len - 1))
        .collect()
}

/// Per-pixel class scores stored in `(row, col, class)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    classes: usize,
    scores: Vec<f64>,
}

const PXSM_MAGIC: &[u8; 4] = b"PXSM";
const PXSM_VERSION: u8 = 1;

impl ScoreMap {
    pub fn new(height: usize, width: usize, classes: usize, scores: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "score map must be at least 1x1, got {height}x{width}"
            )));
        }
        if classes < 2 {
            return Err(Error::Invalid(format!(
                "score map needs at least 2 classes, got {classes}"
            )));
        }
        if scores.len() != height * width * classes {
            return Err(Error::Dimension(format!(
                "{} scores for a {height}x{width}x{classes} map",
                scores.len()
            )));
        }
        if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite score at (row {}, col {}, class {})",
                i / classes / width,
                i / classes % width,
                i % classes
            )));
        }
        Ok(ScoreMap {
            height,
            width,
            classes,
            scores,
        })
    }

    pub fn zeros(height: usize, width: usize, classes: usize) -> Result<Self> {
        Self::new(height, width, classes, vec![0.0; height * width * classes])
    }

    /// Builds a map from a closure over `(row, col, class)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        classes: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut scores = Vec::with_capacity(height * width * classes);
        for row in 0..height {
            for col in 0..width {
                for c in 0..classes {
                    scores.push(f(row, col, c));
                }
            }
        }
        Self::new(height, width, classes, scores)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, row: usize, col: usize, class: usize) -> f64 {
        self.scores[(row * self.width + col) * self.classes + class]
    }

    /// The class-score vector at one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let at = (row * self.width + col) * self.classes;
        &self.scores[at..at + self.classes]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    pub(crate) fn pixels_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.scores.chunks_exact_mut(self.classes)
    }

    pub fn same_shape(&self, other: &ScoreMap) -> bool {
        self.height == other.height && self.width == other.width && self.classes == other.classes
    }

    /// Resamples every class channel independently to `new_h × new_w`.
    pub fn resize(&self, new_h: usize, new_w: usize, mode: Interpolation) -> Result<Self> {
        if new_h == 0 || new_w == 0 {
            return Err(Error::Dimension(format!(
                "cannot resize to {new_h}x{new_w}"
            )));
        }
        if new_h == self.height && new_w == self.width {
            return Ok(self.clone());
        }
        let c = self.classes;
        let mut out = Vec::with_capacity(new_h * new_w * c);
        match mode {
            Interpolation::Nearest => {
                let rows = nearest_taps(self.height, new_h);
                let cols = nearest_taps(self.width, new_w);
                for &r in &rows {
                    for &q in &cols {
                        out.extend_from_slice(self.pixel(r, q));
                    }
                }
            }
            Interpolation::Bilinear => {
                let rows = bilinear_taps(self.height, new_h);
                let cols = bilinear_taps(self.width, new_w);
                for rt in &rows {
                    for ct in &cols {
                        for k in 0..c {
                            let a = self.get(rt.lo, ct.lo, k);
                            let b = self.get(rt.lo, ct.hi, k);
                            let d = self.get(rt.hi, ct.lo, k);
                            let e = self.get(rt.hi, ct.hi, k);
                            // lerp form keeps constant inputs exactly constant
                            let top = a + ct.frac * (b - a);
                            let bottom = d + ct.frac * (e - d);
                            out.push(top + rt.frac * (bottom - top));
                        }
                    }
                }
            }
        }
        Self::new(new_h, new_w, c, out)
    }

    /// Serializes as `PXSM`: magic, version byte, little-endian u32 H, W, C,
    /// then `H·W·C` little-endian f32 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(17 + 4 * self.scores.len());
        buf.extend_from_slice(PXSM_MAGIC);
        buf.push(PXSM_VERSION);
        for dim in [self.height, self.width, self.classes] {
            buf.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &v in &self.scores {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 17 || &bytes[..4] != PXSM_MAGIC {
            return Err(Error::Format("missing PXSM header".into()));
        }
        if bytes[4] != PXSM_VERSION {
            return Err(Error::Format(format!(
                "unsupported PXSM version {}",
                bytes[4]
            )));
        }
        let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let (h, w, c) = (dim(5), dim(9), dim(13));
        let n = h
            .checked_mul(w)
            .and_then(|v| v.checked_mul(c))
            .ok_or_else(|| Error::Format("PXSM dimensions overflow".into()))?;
        let body = &bytes[17..];
        if body.len() != n * 4 {
            return Err(Error::Format(format!(
                "PXSM body holds {} bytes, expected {}",
                body.len(),
                n * 4
            )));
        }
        let scores = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Self::new(h, w, c, scores)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl Grid for ScoreMap {
    fn height(&self) -> usize {
        self.height
    }

    fn width(&self) -> usize {
        self.width
    }

    fn crop(&self, bbox: &BoundingBox) -> Result<Self> {
        bbox.check_within(self.height, self.width)?;
        Self::new(
            bbox.height(),
            bbox.width(),
            self.classes,
            crop_buffer(&self.scores, self.width, self.classes, bbox),
        )
    }

    fn mirror_horizontal(&self) -> Self {
        ScoreMap {
            height: self.height,
            width: self.width,
            classes: self.classes,
            scores: mirror_buffer(&self.scores, self.height, self.width, self.classes),
        }
    }
}

/// 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width * 3 {
            return Err(Error::Dimension(format!(
                "{} bytes for a {height}x{width} RGB image",
                data.len()
            )));
        }
        Ok(RgbImage {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::new(height, width, rgb.repeat(height * width))
    }

    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let at = (row * self.width + col) * 3;
        [self.data[at], self.data[at + 1], self.data[at + 2]]
    }

    pub fn set(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let at = (row * self.width + col) * 3;
        self.data[at..at + 3].copy_from_slice(&rgb);
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| match source {
            image::ImageError::IoError(e) => Error::io(path, e),
            source => Error::Image {
                path: path.to_path_buf(),
                source,
            },
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(h as usize, w as usize, rgb.into_raw())
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        image::save_buffer(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl Grid for RgbImage {
    fn height(&self) -> usize {
        self.height
    }

    fn width(&self) -> usize {
        self.width
    }

    fn crop(&self, bbox: &BoundingBox) -> Result<Self> {
        bbox.check_within(self.height, self.width)?;
        Self::new(
            bbox.height(),
            bbox.width(),
            crop_buffer(&self.data, self.width, 3, bbox),
        )
    }

    fn mirror_horizontal(&self) -> Self {
        RgbImage {
            height: self.height,
            width: self.width,
            data: mirror_buffer(&self.data, self.height, self.width, 3),
        }
    }
}

/// Class names with one display color each; the index in the list is the
/// class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPalette {
    names: Vec<String>,
    colors: Vec<[u8; 3]>,
}

impl ClassPalette {
    pub fn new(names: Vec<String>, colors: Vec<[u8; 3]>) -> Result<Self> {
        if names.len() != colors.len() {
            return Err(Error::Invalid(format!(
                "{} class names but {} colors",
                names.len(),
                colors.len()
            )));
        }
        if names.len() > MAX_CLASSES {
            return Err(Error::Invalid(format!(
                "{} classes exceeds the maximum of {MAX_CLASSES}",
                names.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::Invalid(format!("duplicate class name {name:?}")));
            }
        }
        Ok(ClassPalette { names, colors })
    }

    /// Palette with evenly spaced HSV hues.
    pub fn with_default_colors(names: Vec<String>) -> Result<Self> {
        let colors = hue_wheel(names.len());
        Self::new(names, colors)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, class: usize) -> &str {
        &self.names[class]
    }

    pub fn color(&self, class: usize) -> [u8; 3] {
        self.colors[class]
    }

    pub fn colors(&self) -> &[[u8; 3]] {
        &self.colors
    }

    /// One line per class: the name, a tab and the `#rrggbb` color.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, [r, g, b]) in self.names.iter().zip(&self.colors) {
            out.push_str(&format!("{name}\t#{r:02x}{g:02x}{b:02x}\n"));
        }
        out
    }

    /// Parses `palette.txt`. Lines holding only a name get the default hue
    /// for their index.
    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let defaults = hue_wheel(lines.len());
        let mut names = Vec::with_capacity(lines.len());
        let mut colors = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            let mut parts = line.split('\t');
            let name = parts.next().unwrap_or_default().trim().to_string();
            let color = match parts.next() {
                Some(hex) => parse_hex_color(hex.trim())?,
                None => defaults[i],
            };
            names.push(name);
            colors.push(color);
        }
        Self::new(names, colors)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

fn parse_hex_color(s: &str) -> Result<[u8; 3]> {
    let hex = s.strip_prefix('#').unwrap_or(s);
    if hex.len() != 6 {
        return Err(Error::Format(format!("bad color {s:?}")));
    }
    let mut rgb = [0u8; 3];
    for (i, v) in rgb.iter_mut().enumerate() {
        *v = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
            .map_err(|_| Error::Format(format!("bad color {s:?}")))?;
    }
    Ok(rgb)
}

fn hue_wheel(n: usize) -> Vec<[u8; 3]> {
    (0..n)
        .map(|i| hsv_to_rgb(i as f64 / n.max(1) as f64, 0.8, 0.9))
        .collect()
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = (h.fract() * 6.0).max(0.0);
    let sector = h6.floor() as u32 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    let q8 = |x: f64| (x * 255.0).round() as u8;
    [q8(r), q8(g), q8(b)]
}
