//! Independent reference implementations used by the integration tests.
//! Each one is written the slow, obvious way and shares no code with the
//! library beyond its data types.
#![allow(dead_code)]

pub mod gradcheck;

use std::collections::{BTreeSet, HashSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scenekit::detect::Detection;
use scenekit::{BoundingBox, Grid, LabelMap, ScoreMap, IGNORE};

pub fn random_labels(rng: &mut ChaCha8Rng, h: usize, w: usize, classes: usize, ignore_p: f64) -> LabelMap {
    let data = (0..h * w)
        .map(|_| {
            if rng.random_bool(ignore_p) {
                IGNORE
            } else {
                rng.random_range(0..classes) as u8
            }
        })
        .collect();
    LabelMap::new(h, w, data).unwrap()
}

pub fn random_box(rng: &mut ChaCha8Rng, extent: usize) -> BoundingBox {
    let x0 = rng.random_range(0..extent - 1);
    let y0 = rng.random_range(0..extent - 1);
    BoundingBox {
        x0,
        y0,
        x1: rng.random_range(x0 + 1..=extent),
        y1: rng.random_range(y0 + 1..=extent),
    }
}

/// Per-class metrics from explicit pixel sets keyed by (image, row, col).
pub struct SetMetrics {
    pub correct: usize,
    pub total: usize,
    pub class_accuracy: Vec<Option<f64>>,
    pub iou: Vec<Option<f64>>,
}

pub fn seg_oracle(gt: &[LabelMap], pred: &[LabelMap], classes: usize) -> SetMetrics {
    let mut gt_sets = vec![HashSet::new(); classes];
    let mut pred_sets = vec![HashSet::new(); classes];
    let (mut correct, mut total) = (0, 0);
    for (i, (g, p)) in gt.iter().zip(pred).enumerate() {
        for r in 0..g.height() {
            for c in 0..g.width() {
                let gv = g.get(r, c);
                if gv == IGNORE {
                    continue;
                }
                let pv = p.get(r, c);
                total += 1;
                if gv == pv {
                    correct += 1;
                }
                gt_sets[gv as usize].insert((i, r, c));
                if (pv as usize) < classes {
                    pred_sets[pv as usize].insert((i, r, c));
                }
            }
        }
    }
    let class_accuracy = (0..classes)
        .map(|k| {
            let inter = gt_sets[k].intersection(&pred_sets[k]).count();
            (!gt_sets[k].is_empty()).then(|| inter as f64 / gt_sets[k].len() as f64)
        })
        .collect();
    let iou = (0..classes)
        .map(|k| {
            let inter = gt_sets[k].intersection(&pred_sets[k]).count();
            let union = gt_sets[k].union(&pred_sets[k]).count();
            (union > 0).then(|| inter as f64 / union as f64)
        })
        .collect();
    SetMetrics {
        correct,
        total,
        class_accuracy,
        iou,
    }
}

/// IoU by enumerating the covered pixels.
pub fn iou_oracle(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let cells = |bx: &BoundingBox| -> HashSet<(usize, usize)> {
        (bx.y0..bx.y1)
            .flat_map(|y| (bx.x0..bx.x1).map(move |x| (y, x)))
            .collect()
    };
    let (sa, sb) = (cells(a), cells(b));
    sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64
}

/// Eleven-point AP written out directly: rank by (−score, image, box),
/// consume the best remaining overlap per detection, then take the best
/// precision reached at or beyond each recall level.
pub fn ap_oracle(detections: &[Vec<Detection>], ground_truth: &[Vec<BoundingBox>]) -> Option<f64> {
    let positives: usize = ground_truth.iter().map(Vec::len).sum();
    if positives == 0 {
        return None;
    }
    let mut ranked: Vec<(usize, usize)> = Vec::new();
    for (i, d) in detections.iter().enumerate() {
        for j in 0..d.len() {
            ranked.push((i, j));
        }
    }
    // selection sort keeps the tie order explicit
    for a in 0..ranked.len() {
        let mut best = a;
        for b in a + 1..ranked.len() {
            let sb = detections[ranked[b].0][ranked[b].1].score;
            let sbest = detections[ranked[best].0][ranked[best].1].score;
            if sb > sbest || (sb == sbest && ranked[b] < ranked[best]) {
                best = b;
            }
        }
        ranked.swap(a, best);
    }
    let mut taken: HashSet<(usize, usize)> = HashSet::new();
    let mut points = Vec::new();
    let mut tp = 0.0;
    for (n, &(i, j)) in ranked.iter().enumerate() {
        let det = &detections[i][j];
        let mut choice: Option<(usize, f64)> = None;
        for (k, g) in ground_truth[i].iter().enumerate() {
            if taken.contains(&(i, k)) {
                continue;
            }
            let o = iou_oracle(&det.bbox, g);
            if choice.is_none_or(|(_, best)| o > best) {
                choice = Some((k, o));
            }
        }
        if let Some((k, o)) = choice {
            if o >= 0.5 {
                taken.insert((i, k));
                tp += 1.0;
            }
        }
        points.push((tp / (n + 1) as f64, tp / positives as f64));
    }
    let mut sum = 0.0;
    for level in 0..=10 {
        let r = level as f64 / 10.0;
        let mut p = 0.0f64;
        for &(prec, rec) in &points {
            if rec >= r && prec > p {
                p = prec;
            }
        }
        sum += p;
    }
    Some(sum / 11.0)
}

/// 8-connected components by breadth-first flood fill, each as a sorted set
/// of (row, col).
pub fn flood_fill(mask: &[bool], h: usize, w: usize) -> BTreeSet<Vec<(usize, usize)>> {
    let mut seen = vec![false; h * w];
    let mut out = BTreeSet::new();
    for start in 0..h * w {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / w, i % w);
            comp.push((r, c));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        comp.sort();
        out.insert(comp);
    }
    out
}

/// Box score as a literal double sum over the box of label-`class` pixels.
pub fn box_score_literal(labels: &LabelMap, conf: &ScoreMap, class: usize, b: &BoundingBox) -> (f64, usize) {
    let mut num = 0.0;
    let mut count = 0usize;
    for y in b.y0..b.y1 {
        for x in b.x0..b.x1 {
            if labels.get(y, x) as usize == class {
                num += conf.get(y, x, class);
                count += 1;
            }
        }
    }
    (num / count as f64, count)
}

/// Minimizes `½ αᵀQα − Σα` over `[0, C]ⁿ` by accelerated projected gradient
/// with step `1 / L`, `L` an upper bound on the largest eigenvalue of `Q`.
pub fn box_qp_oracle(q: &[f64], n: usize, c: f64, iters: usize) -> Vec<f64> {
    let lipschitz = (0..n)
        .map(|i| (0..n).map(|j| q[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / lipschitz;
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| q[i * n + j] * a[j]).sum::<f64>() - 1.0)
            .collect()
    };
    let mut x = vec![0.0; n];
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let g = grad(&y);
        let next: Vec<f64> = y
            .iter()
            .zip(&g)
            .map(|(v, gv)| (v - step * gv).clamp(0.0, c))
            .collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        x = next;
        t = t_next;
    }
    x
}

pub fn dual_objective(q: &[f64], n: usize, alpha: &[f64]) -> f64 {
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * q[i * n + j] * alpha[j];
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

pub fn det(x0: usize, y0: usize, x1: usize, y1: usize, score: f64) -> Detection {
    Detection {
        class: 2,
        bbox: BoundingBox { x0, y0, x1, y1 },
        score,
        pixel_count: 1,
    }
}

/// Small multi-image detection problems with coarse scores, so ties and
/// duplicate boxes are common.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<Detection>>, Vec<Vec<BoundingBox>>) {
    let images = rng.random_range(1..4);
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for _ in 0..images {
        let g: Vec<BoundingBox> = (0..rng.random_range(0..4)).map(|_| random_box(rng, 12)).collect();
        let mut d = Vec::new();
        for _ in 0..rng.random_range(0..6) {
            // jitter a ground-truth box or place a random one; coarse scores force ties
            let b = match g.get(rng.random_range(0..g.len() + 1)) {
                Some(b) if rng.random_bool(0.7) => BoundingBox {
                    x0: b.x0,
                    y0: b.y0,
                    x1: (b.x1 + rng.random_range(0..2)).min(12),
                    y1: b.y1,
                },
                _ => random_box(rng, 12),
            };
            d.push(det(b.x0, b.y0, b.x1, b.y1, rng.random_range(0..5) as f64 / 4.0));
        }
        dets.push(d);
        gts.push(g);
    }
    (dets, gts)
}
