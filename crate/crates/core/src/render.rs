//! Color-coded overlays for label maps and detections.

use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::grid::{BoundingBox, ClassPalette, Grid, LabelMap, RgbImage, IGNORE};

pub const GT_COLOR: [u8; 3] = [0, 255, 0];
pub const PRED_COLOR: [u8; 3] = [0, 0, 255];

/// Paints each pixel with its class color and ignored pixels black. With a
/// base image the two are averaged.
pub fn render_labels(
    labels: &LabelMap,
    palette: &ClassPalette,
    base: Option<&RgbImage>,
) -> Result<RgbImage> {
    labels.validate(palette.len())?;
    if let Some(b) = base {
        if b.height() != labels.height() || b.width() != labels.width() {
            return Err(Error::Dimension(format!(
                "base image is {}x{} but labels are {}x{}",
                b.height(),
                b.width(),
                labels.height(),
                labels.width()
            )));
        }
    }
    let mut out = RgbImage::filled(labels.height(), labels.width(), [0, 0, 0])?;
    for r in 0..labels.height() {
        for c in 0..labels.width() {
            let v = labels.get(r, c);
            let color = if v == IGNORE { [0, 0, 0] } else { palette.color(v as usize) };
            let px = match base {
                None => color,
                Some(b) => {
                    let under = b.get(r, c);
                    [0, 1, 2].map(|k| (color[k] as u16 + under[k] as u16).div_ceil(2) as u8)
                }
            };
            out.set(r, c, px);
        }
    }
    Ok(out)
}

/// Recovers labels from an unblended rendering by exact color lookup.
pub fn labels_from_colors(image: &RgbImage, palette: &ClassPalette) -> Result<LabelMap> {
    let mut labels = Vec::with_capacity(image.height() * image.width());
    for r in 0..image.height() {
        for c in 0..image.width() {
            let px = image.get(r, c);
            let v = if px == [0, 0, 0] {
                IGNORE
            } else {
                palette
                    .colors()
                    .iter()
                    .position(|&k| k == px)
                    .ok_or_else(|| Error::Invalid(format!("color {px:?} at ({r},{c}) not in palette")))?
                    as u8
            };
            labels.push(v);
        }
    }
    LabelMap::new(image.height(), image.width(), labels)
}

/// Clamps a box into the image; returns whether it changed.
fn clamp_box(b: &BoundingBox, height: usize, width: usize) -> Option<(BoundingBox, bool)> {
    let clamped = BoundingBox {
        x0: b.x0.min(width - 1),
        y0: b.y0.min(height - 1),
        x1: b.x1.min(width),
        y1: b.y1.min(height),
    };
    if clamped.x0 >= clamped.x1 || clamped.y0 >= clamped.y1 {
        return None;
    }
    Some((clamped, clamped != *b))
}

fn draw_outline(img: &mut RgbImage, b: &BoundingBox, color: [u8; 3]) {
    for x in b.x0..b.x1 {
        img.set(b.y0, x, color);
        img.set(b.y1 - 1, x, color);
    }
    for y in b.y0..b.y1 {
        img.set(y, b.x0, color);
        img.set(y, b.x1 - 1, color);
    }
}

/// Draws 1-pixel outlines: ground truth in green first, then predictions in
/// blue on top. Boxes reaching outside the image are clamped.
pub fn render_detections(
    image: &RgbImage,
    detections: &[Detection],
    ground_truth: Option<&[BoundingBox]>,
) -> RgbImage {
    let mut out = image.clone();
    let (h, w) = (image.height(), image.width());
    let gt = ground_truth.unwrap_or(&[]).iter().map(|b| (b, GT_COLOR));
    let pred = detections.iter().map(|d| (&d.bbox, PRED_COLOR));
    for (b, color) in gt.chain(pred) {
        match clamp_box(b, h, w) {
            Some((clamped, changed)) => {
                if changed {
                    log::warn!("box {b:?} clamped to {w}x{h} image");
                }
                draw_outline(&mut out, &clamped, color);
            }
            None => log::warn!("box {b:?} lies outside the {w}x{h} image"),
        }
    }
    out
}
