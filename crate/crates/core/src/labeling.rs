//! Score fusion and pixel labeling.

use crate::error::{Error, Result};
use crate::grid::{Grid, LabelMap, ScoreMap};

/// Numerically stable softmax of one score vector, written into `out`.
pub fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Per-pixel softmax over the class channel.
pub fn softmax_map(scores: &ScoreMap) -> ScoreMap {
    let mut out = scores.clone();
    let mut buf = vec![0.0; scores.classes()];
    for px in out.pixels_mut() {
        softmax_into(px, &mut buf);
        px.copy_from_slice(&buf);
    }
    out
}

/// Element-wise maximum over maps of identical shape.
pub fn max_fuse(maps: &[ScoreMap]) -> Result<ScoreMap> {
    let (first, rest) = maps
        .split_first()
        .ok_or_else(|| Error::Invalid("max_fuse needs at least one map".into()))?;
    if let Some(bad) = rest.iter().find(|m| !m.same_shape(first)) {
        return Err(Error::Dimension(format!(
            "cannot fuse {}x{}x{} with {}x{}x{}",
            first.height(),
            first.width(),
            first.classes(),
            bad.height(),
            bad.width(),
            bad.classes()
        )));
    }
    let mut fused = first.as_slice().to_vec();
    for m in rest {
        for (f, &v) in fused.iter_mut().zip(m.as_slice()) {
            if v > *f {
                *f = v;
            }
        }
    }
    ScoreMap::new(first.height(), first.width(), first.classes(), fused)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Labels each pixel with its highest-scoring class.
pub fn argmax_label(scores: &ScoreMap) -> LabelMap {
    let labels = scores
        .as_slice()
        .chunks_exact(scores.classes())
        .map(|px| argmax(px) as u8)
        .collect();
    LabelMap::new(scores.height(), scores.width(), labels)
        .expect("score map dimensions are valid")
}
