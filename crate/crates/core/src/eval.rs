//! Segmentation, scene classification and detection metrics.

use std::cmp::Ordering;

use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::grid::{BoundingBox, Grid, LabelMap, IGNORE};

/// Minimum box overlap for a detection to count as a true positive.
pub const IOU_THRESHOLD: f64 = 0.5;

/// Recall levels at which interpolated precision is sampled.
pub const RECALL_LEVELS: usize = 11;

/// `counts[g][p]` is the number of pixels with ground truth `g` predicted
/// as `p`. Ignored ground-truth pixels are never counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn accumulate(&mut self, gt: &LabelMap, pred: &LabelMap) -> Result<()> {
        if gt.height() != pred.height() || gt.width() != pred.width() {
            return Err(Error::Dimension(format!(
                "ground truth is {}x{} but prediction is {}x{}",
                gt.height(),
                gt.width(),
                pred.height(),
                pred.width()
            )));
        }
        gt.validate(self.classes)?;
        for (&g, &p) in gt.as_slice().iter().zip(pred.as_slice()) {
            if g == IGNORE {
                continue;
            }
            if p as usize >= self.classes {
                return Err(Error::Invalid(format!(
                    "prediction label {p} on an annotated pixel is not a class below {}",
                    self.classes
                )));
            }
            self.counts[g as usize * self.classes + p as usize] += 1;
        }
        Ok(())
    }

    /// Adds another matrix of the same size; order of merging is irrelevant.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.classes, other.classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn gt_total(&self, class: usize) -> u64 {
        (0..self.classes).map(|p| self.get(class, p)).sum()
    }

    pub fn pred_total(&self, class: usize) -> u64 {
        (0..self.classes).map(|g| self.get(g, class)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegMetrics {
    pub pixel_accuracy: f64,
    pub mean_class_accuracy: f64,
    /// Per-class recall; `None` for classes absent from the ground truth.
    pub class_accuracy: Vec<Option<f64>>,
    /// `None` for classes absent from both ground truth and prediction.
    pub iou: Vec<Option<f64>>,
    pub mean_iou: f64,
    pub confusion: ConfusionMatrix,
}

impl SegMetrics {
    pub fn from_confusion(m: ConfusionMatrix) -> Result<Self> {
        let total = m.total();
        if total == 0 {
            return Err(Error::NoAnnotatedPixels);
        }
        let c = m.classes();
        let class_accuracy: Vec<Option<f64>> = (0..c)
            .map(|k| {
                let gt = m.gt_total(k);
                (gt > 0).then(|| m.get(k, k) as f64 / gt as f64)
            })
            .collect();
        let iou: Vec<Option<f64>> = (0..c)
            .map(|k| {
                let union = m.gt_total(k) + m.pred_total(k) - m.get(k, k);
                (union > 0).then(|| m.get(k, k) as f64 / union as f64)
            })
            .collect();
        Ok(SegMetrics {
            pixel_accuracy: m.trace() as f64 / total as f64,
            mean_class_accuracy: mean_defined(&class_accuracy),
            mean_iou: mean_defined(&iou),
            class_accuracy,
            iou,
            confusion: m,
        })
    }
}

fn mean_defined(values: &[Option<f64>]) -> f64 {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    defined.iter().sum::<f64>() / defined.len() as f64
}

/// Metrics accumulated over a whole set through one confusion matrix.
pub fn seg_metrics(gt: &[LabelMap], pred: &[LabelMap], classes: usize) -> Result<SegMetrics> {
    if gt.len() != pred.len() {
        return Err(Error::Dimension(format!(
            "{} ground-truth maps but {} predictions",
            gt.len(),
            pred.len()
        )));
    }
    let mut m = ConfusionMatrix::new(classes);
    for (g, p) in gt.iter().zip(pred) {
        m.accumulate(g, p)?;
    }
    SegMetrics::from_confusion(m)
}

pub fn scene_accuracy(gt: &[usize], pred: &[usize]) -> Result<f64> {
    if gt.is_empty() || gt.len() != pred.len() {
        return Err(Error::Invalid(format!(
            "scene accuracy needs equal non-empty lists, got {} and {}",
            gt.len(),
            pred.len()
        )));
    }
    let hits = gt.iter().zip(pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / gt.len() as f64)
}

pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// Ranked outcomes: score and whether the detection matched a box.
    pub ranked: Vec<(f64, bool)>,
    pub positives: usize,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// Interpolated precision at recall 0, 0.1, …, 1.
    pub interpolated: [f64; RECALL_LEVELS],
    pub ap: f64,
}

/// Eleven-point interpolated AP for one class.
///
/// `detections[i]` and `ground_truth[i]` belong to image `i`. Returns `None`
/// when the class has no ground-truth boxes, in which case AP is undefined.
pub fn average_precision(
    detections: &[Vec<Detection>],
    ground_truth: &[Vec<BoundingBox>],
) -> Result<Option<PrCurve>> {
    if detections.len() != ground_truth.len() {
        return Err(Error::Dimension(format!(
            "detections for {} images but ground truth for {}",
            detections.len(),
            ground_truth.len()
        )));
    }
    let positives: usize = ground_truth.iter().map(Vec::len).sum();
    if positives == 0 {
        return Ok(None);
    }
    let mut order: Vec<(usize, &Detection)> = Vec::new();
    for (img, dets) in detections.iter().enumerate() {
        for d in dets {
            if !d.score.is_finite() {
                return Err(Error::Invalid(format!(
                    "non-finite detection score in image {img}"
                )));
            }
            order.push((img, d));
        }
    }
    // stable: equal scores keep (image, box) order
    order.sort_by(|a, b| b.1.score.partial_cmp(&a.1.score).unwrap_or(Ordering::Equal));

    let mut used: Vec<Vec<bool>> = ground_truth.iter().map(|g| vec![false; g.len()]).collect();
    let mut ranked = Vec::with_capacity(order.len());
    let (mut precision, mut recall) = (Vec::new(), Vec::new());
    let mut tp = 0usize;
    for (rank, (img, det)) in order.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (k, gt_box) in ground_truth[*img].iter().enumerate() {
            if used[*img][k] {
                continue;
            }
            let iou = box_iou(&det.bbox, gt_box);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((k, iou));
            }
        }
        let hit = match best {
            Some((k, iou)) if iou >= IOU_THRESHOLD => {
                used[*img][k] = true;
                true
            }
            _ => false,
        };
        tp += usize::from(hit);
        ranked.push((det.score, hit));
        precision.push(tp as f64 / (rank + 1) as f64);
        recall.push(tp as f64 / positives as f64);
    }

    let mut interpolated = [0.0; RECALL_LEVELS];
    for (k, slot) in interpolated.iter_mut().enumerate() {
        let level = k as f64 / (RECALL_LEVELS - 1) as f64;
        *slot = precision
            .iter()
            .zip(&recall)
            .filter(|(_, &r)| r >= level)
            .map(|(&p, _)| p)
            .fold(0.0, f64::max);
    }
    let ap = interpolated.iter().sum::<f64>() / RECALL_LEVELS as f64;
    Ok(Some(PrCurve {
        ranked,
        positives,
        precision,
        recall,
        interpolated,
        ap,
    }))
}

/// Mean over the classes whose AP is defined.
pub fn mean_ap(per_class: &[Option<f64>]) -> Result<f64> {
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Invalid("no class has a defined AP".into()));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Renders `key=value` lines for segmentation metrics. Per-class entries are
/// named by class index; `na` marks undefined values.
pub fn seg_metrics_lines(m: &SegMetrics) -> Vec<String> {
    let fmt = |v: Option<f64>| v.map_or("na".to_string(), |x| format!("{x:.6}"));
    let mut lines = vec![
        format!("pixel_accuracy={:.6}", m.pixel_accuracy),
        format!("mean_class_accuracy={:.6}", m.mean_class_accuracy),
        format!("mean_iou={:.6}", m.mean_iou),
    ];
    for (c, v) in m.iou.iter().enumerate() {
        lines.push(format!("iou.{c}={}", fmt(*v)));
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(score: f64, x0: usize, y0: usize, x1: usize, y1: usize) -> Detection {
        Detection {
            class: 0,
            bbox: BoundingBox::new(x0, y0, x1, y1).unwrap(),
            score,
            pixel_count: 1,
        }
    }

    #[test]
    fn perfect_segmentation() {
        let gt = LabelMap::new(2, 3, vec![0, 1, 1, 2, IGNORE, 0]).unwrap();
        let m = seg_metrics(&[gt.clone()], &[gt], 4).unwrap();
        assert_eq!(m.pixel_accuracy, 1.0);
        assert_eq!(m.mean_class_accuracy, 1.0);
        assert_eq!(m.iou, vec![Some(1.0), Some(1.0), Some(1.0), None]);
        assert_eq!(m.mean_iou, 1.0);
        assert_eq!(m.confusion.total(), 5);
    }

    #[test]
    fn disjoint_classes_have_zero_iou() {
        let gt = LabelMap::filled(3, 3, 0).unwrap();
        let pred = LabelMap::filled(3, 3, 1).unwrap();
        let m = seg_metrics(&[gt], &[pred], 3).unwrap();
        assert_eq!(m.iou, vec![Some(0.0), Some(0.0), None]);
        assert_eq!(m.pixel_accuracy, 0.0);
    }

    #[test]
    fn all_ignored_is_an_error() {
        let gt = LabelMap::filled(2, 2, IGNORE).unwrap();
        let pred = LabelMap::filled(2, 2, 0).unwrap();
        assert!(matches!(
            seg_metrics(&[gt], &[pred], 2),
            Err(Error::NoAnnotatedPixels)
        ));
    }

    #[test]
    fn scene_accuracy_cases() {
        assert_eq!(scene_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(scene_accuracy(&[1, 2, 3], &[0, 0, 0]).unwrap(), 0.0);
        assert_eq!(scene_accuracy(&[1, 2, 3, 4], &[1, 0, 3, 0]).unwrap(), 0.5);
        assert!(scene_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn box_iou_cases() {
        let a = BoundingBox::new(0, 0, 10, 10).unwrap();
        let b = BoundingBox::new(5, 5, 15, 15).unwrap();
        let far = BoundingBox::new(20, 20, 30, 30).unwrap();
        assert_eq!(box_iou(&a, &a), 1.0);
        assert_eq!(box_iou(&a, &far), 0.0);
        assert!((box_iou(&a, &b) - 1.0 / 7.0).abs() < 1e-15);
        // touching edges share no area under half-open boxes
        let touch = BoundingBox::new(10, 0, 20, 10).unwrap();
        assert_eq!(box_iou(&a, &touch), 0.0);
    }

    #[test]
    fn perfect_detection_ap() {
        let gt = vec![
            vec![BoundingBox::new(0, 0, 5, 5).unwrap()],
            vec![BoundingBox::new(2, 2, 8, 8).unwrap(), BoundingBox::new(10, 10, 12, 14).unwrap()],
        ];
        let dets = vec![
            vec![det(0.9, 0, 0, 5, 5)],
            vec![det(0.2, 2, 2, 8, 8), det(0.5, 10, 10, 12, 14)],
        ];
        let curve = average_precision(&dets, &gt).unwrap().unwrap();
        assert_eq!(curve.ap, 1.0);
    }

    #[test]
    fn no_detections_and_no_ground_truth() {
        let gt = vec![vec![BoundingBox::new(0, 0, 5, 5).unwrap()]];
        assert_eq!(average_precision(&[vec![]], &gt).unwrap().unwrap().ap, 0.0);
        assert!(average_precision(&[vec![det(0.5, 0, 0, 2, 2)]], &[vec![]])
            .unwrap()
            .is_none());
    }

    #[test]
    fn duplicates_are_false_positives() {
        let gt = vec![vec![BoundingBox::new(0, 0, 10, 10).unwrap()]];
        let dets = vec![vec![det(0.9, 0, 0, 10, 10), det(0.8, 0, 0, 10, 10)]];
        let curve = average_precision(&dets, &gt).unwrap().unwrap();
        assert_eq!(curve.ranked, vec![(0.9, true), (0.8, false)]);
        assert_eq!(curve.ap, 1.0);
    }

    #[test]
    fn greedy_prefers_highest_iou_unmatched() {
        let gt = vec![vec![
            BoundingBox::new(0, 0, 10, 10).unwrap(),
            BoundingBox::new(2, 0, 12, 10).unwrap(),
        ]];
        // first detection overlaps box 1 best, second only clears 0.5 with box 0
        let dets = vec![vec![det(0.9, 2, 0, 12, 10), det(0.8, 0, 0, 9, 10)]];
        let curve = average_precision(&dets, &gt).unwrap().unwrap();
        assert_eq!(curve.ranked, vec![(0.9, true), (0.8, true)]);
    }

    #[test]
    fn mean_ap_skips_undefined() {
        assert_eq!(mean_ap(&[Some(1.0), Some(1.0)]).unwrap(), 1.0);
        assert_eq!(mean_ap(&[Some(0.5), None, Some(0.25)]).unwrap(), 0.375);
        assert!(mean_ap(&[None]).is_err());
    }

    #[test]
    fn merge_is_addition() {
        let a = LabelMap::new(1, 3, vec![0, 1, 1]).unwrap();
        let b = LabelMap::new(1, 3, vec![1, 1, 0]).unwrap();
        let mut m1 = ConfusionMatrix::new(2);
        m1.accumulate(&a, &b).unwrap();
        let mut m2 = ConfusionMatrix::new(2);
        m2.accumulate(&b, &a).unwrap();
        let mut both = ConfusionMatrix::new(2);
        both.accumulate(&a, &b).unwrap();
        both.accumulate(&b, &a).unwrap();
        m1.merge(&m2);
        assert_eq!(m1, both);
    }
}
