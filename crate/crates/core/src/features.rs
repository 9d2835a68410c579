//! Scene descriptors computed from a segmentation.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BoundingBox, Grid, LabelMap, IGNORE};

/// Default presence threshold as a fraction of all image pixels.
pub const DEFAULT_DELTA_FRACTION: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramFeature {
    pub values: Vec<f64>,
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneHotFeature {
    pub bits: Vec<u8>,
    /// Pixel-count threshold that a class must exceed to be present.
    pub delta: f64,
}

impl OneHotFeature {
    pub fn to_values(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| b as f64).collect()
    }
}

/// Pixel count per class inside `region` (whole map when `None`), skipping
/// ignored pixels.
pub fn class_histogram(
    labels: &LabelMap,
    classes: usize,
    region: Option<&BoundingBox>,
) -> Result<HistogramFeature> {
    labels.validate(classes)?;
    let full = BoundingBox::full(labels.height(), labels.width());
    let region = region.unwrap_or(&full);
    region.check_within(labels.height(), labels.width())?;
    let mut counts = vec![0u64; classes];
    for row in region.y0..region.y1 {
        let line = &labels.as_slice()[row * labels.width()..(row + 1) * labels.width()];
        for &v in &line[region.x0..region.x1] {
            if v != IGNORE {
                counts[v as usize] += 1;
            }
        }
    }
    Ok(HistogramFeature {
        values: counts.into_iter().map(|c| c as f64).collect(),
        normalized: false,
    })
}

/// Divides by the Euclidean norm; the zero vector is returned unchanged.
pub fn l2_normalize(f: &HistogramFeature) -> HistogramFeature {
    HistogramFeature {
        values: l2_normalized(&f.values),
        normalized: true,
    }
}

fn l2_normalized(values: &[f64]) -> Vec<f64> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return values.to_vec();
    }
    values.iter().map(|v| v / norm).collect()
}

/// Presence bits: class `c` is present when its pixel count is strictly
/// greater than `delta_fraction × H × W`.
pub fn one_hot(labels: &LabelMap, classes: usize, delta_fraction: f64) -> Result<OneHotFeature> {
    if !(0.0..1.0).contains(&delta_fraction) {
        return Err(Error::Invalid(format!(
            "delta fraction {delta_fraction} outside [0, 1)"
        )));
    }
    let hist = class_histogram(labels, classes, None)?;
    let delta = delta_fraction * (labels.height() * labels.width()) as f64;
    Ok(OneHotFeature {
        bits: hist.values.iter().map(|&n| u8::from(n > delta)).collect(),
        delta,
    })
}

/// The four second-level blocks in order top-left, top-right, bottom-left,
/// bottom-right. The split is at `⌊H/2⌋`, `⌊W/2⌋`.
pub fn quadrants(height: usize, width: usize) -> [BoundingBox; 4] {
    let (my, mx) = (height / 2, width / 2);
    [
        BoundingBox { x0: 0, y0: 0, x1: mx, y1: my },
        BoundingBox { x0: mx, y0: 0, x1: width, y1: my },
        BoundingBox { x0: 0, y0: my, x1: mx, y1: height },
        BoundingBox { x0: mx, y0: my, x1: width, y1: height },
    ]
}

/// Two-level pyramid: the full-image histogram followed by the four
/// quadrant histograms, each block L2-normalized on its own.
pub fn spatial_pyramid(labels: &LabelMap, classes: usize) -> Result<HistogramFeature> {
    let (h, w) = (labels.height(), labels.width());
    if h < 2 || w < 2 {
        return Err(Error::Dimension(format!(
            "spatial pyramid needs at least 2x2, got {h}x{w}"
        )));
    }
    let mut values = Vec::with_capacity(5 * classes);
    values.extend(l2_normalized(&class_histogram(labels, classes, None)?.values));
    for q in quadrants(h, w) {
        values.extend(l2_normalized(
            &class_histogram(labels, classes, Some(&q))?.values,
        ));
    }
    Ok(HistogramFeature {
        values,
        normalized: true,
    })
}

/// Which descriptor to extract from a label map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// L2-normalized class histogram.
    Histogram,
    OneHot,
    Pyramid,
}

impl FeatureMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hist" => Ok(FeatureMode::Histogram),
            "onehot" => Ok(FeatureMode::OneHot),
            "pyramid" => Ok(FeatureMode::Pyramid),
            other => Err(Error::Invalid(format!(
                "unknown feature mode {other:?} (expected hist, onehot or pyramid)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureMode::Histogram => "hist",
            FeatureMode::OneHot => "onehot",
            FeatureMode::Pyramid => "pyramid",
        }
    }
}

pub fn extract(labels: &LabelMap, classes: usize, mode: FeatureMode) -> Result<Vec<f64>> {
    Ok(match mode {
        FeatureMode::Histogram => l2_normalize(&class_histogram(labels, classes, None)?).values,
        FeatureMode::OneHot => one_hot(labels, classes, DEFAULT_DELTA_FRACTION)?.to_values(),
        FeatureMode::Pyramid => spatial_pyramid(labels, classes)?.values,
    })
}

/// `.feat` files hold one real per line.
pub fn write_feat(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::with_capacity(values.len() * 20);
    for v in values {
        // shortest representation that parses back to the same f64
        text.push_str(&format!("{v:?}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_feat(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| {
                Error::Format(format!("{}: line {}: bad number {l:?}", path.display(), i + 1))
            })
        })
        .collect()
}
