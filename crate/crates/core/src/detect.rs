//! Object detections read off a segmentation: one box per 8-connected
//! component of each object class, scored by the mean class confidence of
//! the class pixels inside the box.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BoundingBox, Grid, LabelMap, ScoreMap};

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class: usize,
    pub bbox: BoundingBox,
    pub score: f64,
    /// Number of pixels of `class` inside `bbox`.
    pub pixel_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    /// `(row, col)` in raster order.
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BoundingBox,
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let up = parent[parent[x as usize] as usize];
        parent[x as usize] = up;
        x = up;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // smaller root wins so roots stay at the earliest raster position
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// 8-connected components of a row-major binary mask, ordered by their first
/// pixel in raster order.
pub fn connected_components(mask: &[bool], height: usize, width: usize) -> Vec<Component> {
    assert_eq!(mask.len(), height * width, "mask size mismatch");
    let mut parent: Vec<u32> = (0..mask.len() as u32).collect();
    for row in 0..height {
        for col in 0..width {
            let i = row * width + col;
            if !mask[i] {
                continue;
            }
            // already-visited neighbours: W, NW, N, NE
            if col > 0 && mask[i - 1] {
                union(&mut parent, i as u32, (i - 1) as u32);
            }
            if row > 0 {
                let up = i - width;
                if mask[up] {
                    union(&mut parent, i as u32, up as u32);
                }
                if col > 0 && mask[up - 1] {
                    union(&mut parent, i as u32, (up - 1) as u32);
                }
                if col + 1 < width && mask[up + 1] {
                    union(&mut parent, i as u32, (up + 1) as u32);
                }
            }
        }
    }

    let mut slot = vec![usize::MAX; mask.len()];
    let mut components: Vec<Component> = Vec::new();
    for i in 0..mask.len() {
        if !mask[i] {
            continue;
        }
        let root = find(&mut parent, i as u32) as usize;
        let (row, col) = (i / width, i % width);
        if slot[root] == usize::MAX {
            slot[root] = components.len();
            components.push(Component {
                pixels: Vec::new(),
                bbox: BoundingBox {
                    x0: col,
                    y0: row,
                    x1: col + 1,
                    y1: row + 1,
                },
            });
        }
        let comp = &mut components[slot[root]];
        comp.pixels.push((row, col));
        let b = &mut comp.bbox;
        b.x0 = b.x0.min(col);
        b.x1 = b.x1.max(col + 1);
        b.y1 = b.y1.max(row + 1);
    }
    components
}

/// Options for [`detect_objects`].
#[derive(Debug, Clone, Copy, Default)]
pub struct DetectOptions {
    /// Components with fewer pixels are dropped. Zero keeps everything.
    pub min_area: usize,
}

/// Detections for each class in `object_classes` (in the given order).
///
/// `confidences` is usually the softmax of the fused score map; any map of
/// per-class values works, and raw scores reproduce the literal mean of the
/// network output.
pub fn detect_objects(
    labels: &LabelMap,
    confidences: &ScoreMap,
    object_classes: &[usize],
    options: DetectOptions,
) -> Result<Vec<Detection>> {
    let (h, w) = (labels.height(), labels.width());
    if confidences.height() != h || confidences.width() != w {
        return Err(Error::Dimension(format!(
            "labels are {h}x{w} but confidences are {}x{}",
            confidences.height(),
            confidences.width()
        )));
    }
    if let Some(&c) = object_classes.iter().find(|&&c| c >= confidences.classes()) {
        return Err(Error::Invalid(format!(
            "object class {c} not in a {}-class score map",
            confidences.classes()
        )));
    }
    let mut detections = Vec::new();
    for &class in object_classes {
        let mask: Vec<bool> = labels.as_slice().iter().map(|&v| v as usize == class).collect();
        for comp in connected_components(&mask, h, w) {
            if comp.pixels.len() < options.min_area {
                continue;
            }
            let b = comp.bbox;
            let (mut sum, mut count) = (0.0, 0usize);
            for row in b.y0..b.y1 {
                for col in b.x0..b.x1 {
                    if mask[row * w + col] {
                        sum += confidences.get(row, col, class);
                        count += 1;
                    }
                }
            }
            detections.push(Detection {
                class,
                bbox: b,
                score: sum / count as f64,
                pixel_count: count,
            });
        }
    }
    Ok(detections)
}

/// `.det` text: one `class x0 y0 x1 y1 score` line per detection.
pub fn format_detections(dets: &[Detection]) -> String {
    let mut out = String::new();
    for d in dets {
        let b = d.bbox;
        writeln!(out, "{} {} {} {} {} {:?}", d.class, b.x0, b.y0, b.x1, b.y1, d.score).unwrap();
    }
    out
}

pub fn parse_detections(text: &str) -> Result<Vec<Detection>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || Error::Format(format!("detection line {}: {line:?}", i + 1));
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let n = |s: &str| s.parse::<usize>().map_err(|_| bad());
            let bbox = BoundingBox::new(n(f[1])?, n(f[2])?, n(f[3])?, n(f[4])?).map_err(|_| bad())?;
            Ok(Detection {
                class: n(f[0])?,
                bbox,
                score: f[5].parse().map_err(|_| bad())?,
                pixel_count: 0,
            })
        })
        .collect()
}

pub fn write_detections(path: impl AsRef<Path>, dets: &[Detection]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_detections(dets)).map_err(|e| Error::io(path, e))
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_from(rows: &[&str]) -> (Vec<bool>, usize, usize) {
        let h = rows.len();
        let w = rows[0].len();
        let m = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        (m, h, w)
    }

    #[test]
    fn single_block() {
        let mut mask = vec![false; 64];
        for r in 2..5 {
            for c in 2..5 {
                mask[r * 8 + c] = true;
            }
        }
        let comps = connected_components(&mask, 8, 8);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].bbox, BoundingBox::new(2, 2, 5, 5).unwrap());
        assert_eq!(comps[0].pixels.len(), 9);
    }

    #[test]
    fn diagonal_pixels_join() {
        let (m, h, w) = mask_from(&["#..", ".#.", "..."]);
        let comps = connected_components(&m, h, w);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].bbox, BoundingBox::new(0, 0, 2, 2).unwrap());
    }

    #[test]
    fn u_shape_merges_late() {
        let (m, h, w) = mask_from(&["#.#.#", "#.#.#", "#####"]);
        assert_eq!(connected_components(&m, h, w).len(), 1);
        let (m, h, w) = mask_from(&[".#.#", "#.#.", "...."]);
        assert_eq!(connected_components(&m, h, w).len(), 1);
    }

    #[test]
    fn empty_mask() {
        assert!(connected_components(&[false; 12], 3, 4).is_empty());
    }

    #[test]
    fn constant_confidence() {
        let mut labels = LabelMap::filled(6, 6, 0).unwrap();
        for r in 1..4 {
            for c in 2..5 {
                labels.set(r, c, 2);
            }
        }
        let conf = ScoreMap::from_fn(6, 6, 3, |_, _, _| 0.7).unwrap();
        let dets = detect_objects(&labels, &conf, &[2], DetectOptions::default()).unwrap();
        assert_eq!(dets.len(), 1);
        assert!((dets[0].score - 0.7).abs() < 1e-15);
        assert_eq!(dets[0].bbox, BoundingBox::new(2, 1, 5, 4).unwrap());
        assert_eq!(dets[0].pixel_count, 9);
    }

    #[test]
    fn single_pixel_component_scores_its_confidence() {
        let mut labels = LabelMap::filled(4, 4, 0).unwrap();
        labels.set(3, 1, 1);
        let conf = ScoreMap::from_fn(4, 4, 2, |r, c, k| (r * 4 + c) as f64 / 100.0 + k as f64 * 0.5)
            .unwrap();
        let dets = detect_objects(&labels, &conf, &[1], DetectOptions::default()).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].score, conf.get(3, 1, 1));
    }

    #[test]
    fn box_sum_includes_other_components_of_the_class() {
        // an L-shaped component whose box also covers a separate class-1 pixel
        let rows = ["#....", "#..#.", "#....", "####."];
        let labels = LabelMap::new(
            4,
            5,
            rows.iter().flat_map(|r| r.chars().map(|c| u8::from(c == '#'))).collect(),
        )
        .unwrap();
        let conf = ScoreMap::from_fn(4, 5, 2, |r, c, k| if k == 1 && (r, c) == (1, 3) { 0.0 } else { 1.0 })
            .unwrap();
        let dets = detect_objects(&labels, &conf, &[1], DetectOptions::default()).unwrap();
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[0].pixel_count, 8);
        assert!((dets[0].score - 7.0 / 8.0).abs() < 1e-15);
        assert_eq!(dets[1].score, 0.0);
    }

    #[test]
    fn min_area_filter() {
        let mut labels = LabelMap::filled(5, 5, 0).unwrap();
        labels.set(0, 0, 1);
        labels.set(3, 3, 1);
        labels.set(3, 4, 1);
        let conf = ScoreMap::zeros(5, 5, 2).unwrap();
        let dets = detect_objects(&labels, &conf, &[1], DetectOptions { min_area: 2 }).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, BoundingBox::new(3, 3, 5, 4).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let labels = LabelMap::filled(4, 4, 0).unwrap();
        let conf = ScoreMap::zeros(4, 5, 2).unwrap();
        assert!(matches!(
            detect_objects(&labels, &conf, &[1], DetectOptions::default()),
            Err(Error::Dimension(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn boxes_are_tight_and_components_partition(seed in proptest::prelude::any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (h, w) = (rng.random_range(1..20), rng.random_range(1..20));
            let mask: Vec<bool> = (0..h * w).map(|_| rng.random_bool(0.35)).collect();
            let comps = connected_components(&mask, h, w);
            let mut owner = vec![usize::MAX; h * w];
            for (k, comp) in comps.iter().enumerate() {
                let b = comp.bbox;
                for &(r, c) in &comp.pixels {
                    proptest::prop_assert!(mask[r * w + c]);
                    proptest::prop_assert_eq!(owner[r * w + c], usize::MAX);
                    owner[r * w + c] = k;
                }
                // shrinking any side loses a component pixel
                proptest::prop_assert!(comp.pixels.iter().any(|p| p.0 == b.y0));
                proptest::prop_assert!(comp.pixels.iter().any(|p| p.0 == b.y1 - 1));
                proptest::prop_assert!(comp.pixels.iter().any(|p| p.1 == b.x0));
                proptest::prop_assert!(comp.pixels.iter().any(|p| p.1 == b.x1 - 1));
            }
            for i in 0..h * w {
                proptest::prop_assert_eq!(mask[i], owner[i] != usize::MAX);
            }
        }
    }

    #[test]
    fn det_text_round_trip() {
        let d = vec![Detection {
            class: 3,
            bbox: BoundingBox::new(1, 2, 7, 9).unwrap(),
            score: 0.123456789,
            pixel_count: 0,
        }];
        assert_eq!(parse_detections(&format_detections(&d)).unwrap(), d);
        assert!(parse_detections("1 2 3").is_err());
    }
}
