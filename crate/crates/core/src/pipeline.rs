//! End-to-end runs: generate or load data, train the labeler, segment,
//! extract scene features, train and apply the scene classifiers, detect
//! objects, evaluate and render.
//!
//! A run is configured by UTF-8 `key=value` lines and writes everything
//! under one output directory, including `metrics.txt` and a
//! `manifest.txt` listing the produced artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{self, DatasetManifest, SceneRule, ToyRoomsConfig};
use crate::detect::{self, DetectOptions, Detection};
use crate::error::{Error, Result};
use crate::eval;
use crate::features::{self, FeatureMode};
use crate::grid::{BoundingBox, Grid, LabelMap, RgbImage, ScoreMap};
use crate::labeling::{argmax_label, softmax_map};
use crate::net::{self, Reduction, ToyNet, TrainConfig, TrainSample};
use crate::render;
use crate::svm::{self, Kernel, SvmModel};

/// Seed for a named stage, derived from the run seed so any stage can be
/// re-run on its own.
pub fn substream(seed: u64, stage: &str) -> u64 {
    // FNV-1a over the name, then a splitmix64 finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The four scene classifier set-ups compared by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SceneVariant {
    HistLinear,
    OneHotLinear,
    HistKernel,
    PyramidKernel,
}

impl SceneVariant {
    pub const ALL: [SceneVariant; 4] = [
        SceneVariant::HistLinear,
        SceneVariant::OneHotLinear,
        SceneVariant::HistKernel,
        SceneVariant::PyramidKernel,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SceneVariant::HistLinear => "hist-linear",
            SceneVariant::OneHotLinear => "onehot-linear",
            SceneVariant::HistKernel => "hist-kernel",
            SceneVariant::PyramidKernel => "pyramid-kernel",
        }
    }

    pub fn feature_mode(&self) -> FeatureMode {
        match self {
            SceneVariant::HistLinear | SceneVariant::HistKernel => FeatureMode::Histogram,
            SceneVariant::OneHotLinear => FeatureMode::OneHot,
            SceneVariant::PyramidKernel => FeatureMode::Pyramid,
        }
    }

    pub fn kernel(&self, additive: Kernel) -> Kernel {
        match self {
            SceneVariant::HistLinear | SceneVariant::OneHotLinear => Kernel::Linear,
            SceneVariant::HistKernel | SceneVariant::PyramidKernel => additive,
        }
    }
}

impl FromStr for SceneVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SceneVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown scene variant {s:?}")))
    }
}

/// Parses `all` or a comma-separated list of variant names.
pub fn parse_variants(s: &str) -> Result<Vec<SceneVariant>> {
    if s == "all" {
        return Ok(SceneVariant::ALL.to_vec());
    }
    let mut v: Vec<SceneVariant> = s.split(',').map(|p| p.trim().parse()).collect::<Result<_>>()?;
    v.sort();
    v.dedup();
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Existing dataset directory; `None` generates one inside the run.
    pub data_dir: Option<PathBuf>,
    pub train_count: usize,
    pub test_count: usize,
    pub size: usize,
    pub classes: usize,
    pub iters: usize,
    pub lr: f64,
    pub power: f64,
    pub crop: usize,
    pub mirror: f64,
    pub momentum: f64,
    pub reduction: Reduction,
    pub svm_c: f64,
    pub kernel: Kernel,
    pub variants: Vec<SceneVariant>,
    pub labels_from_gt: bool,
    pub raw_scores: bool,
    pub min_area: usize,
    /// Number of test images to render overlays for.
    pub render_count: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let data = ToyRoomsConfig::default();
        let train = TrainConfig::default();
        PipelineConfig {
            seed: 0,
            data_dir: None,
            train_count: data.train_count,
            test_count: data.test_count,
            size: data.size,
            classes: data.total_classes(),
            iters: train.max_iter,
            lr: train.base_lr,
            power: train.power,
            crop: train.crop,
            mirror: train.mirror_prob,
            momentum: train.momentum,
            reduction: train.reduction,
            svm_c: 1.0,
            kernel: Kernel::ChiSquared,
            variants: SceneVariant::ALL.to_vec(),
            labels_from_gt: false,
            raw_scores: false,
            min_area: 0,
            render_count: 4,
        }
    }
}

impl PipelineConfig {
    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("config line {}: expected key=value", i + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Invalid(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Invalid(format!("bad value {v:?} for {key}")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::Invalid(format!("bad boolean {v:?} for {key}"))),
            }
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "train_count" => self.train_count = num(key, value)?,
            "test_count" => self.test_count = num(key, value)?,
            "size" => self.size = num(key, value)?,
            "classes" => self.classes = num(key, value)?,
            "iters" => self.iters = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "power" => self.power = num(key, value)?,
            "crop" => self.crop = num(key, value)?,
            "mirror" => self.mirror = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "loss" => self.reduction = Reduction::parse(value)?,
            "svm_c" => self.svm_c = num(key, value)?,
            "kernel" => self.kernel = value.parse()?,
            "scene_variant" => self.variants = parse_variants(value)?,
            "labels_from_gt" => self.labels_from_gt = flag(key, value)?,
            "raw_scores" => self.raw_scores = flag(key, value)?,
            "min_area" => self.min_area = num(key, value)?,
            "render_count" => self.render_count = num(key, value)?,
            other => return Err(Error::Invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn data_config(&self) -> ToyRoomsConfig {
        ToyRoomsConfig {
            size: self.size,
            seed: substream(self.seed, "data"),
            train_count: self.train_count,
            test_count: self.test_count,
            ..Default::default()
        }
        .with_classes(self.classes)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            base_lr: self.lr,
            power: self.power,
            max_iter: self.iters,
            crop: self.crop,
            mirror_prob: self.mirror,
            momentum: self.momentum,
            reduction: self.reduction,
            seed: substream(self.seed, "train-seg"),
            ..Default::default()
        }
    }
}

/// Class ids after the two structure classes are treated as objects.
pub fn object_classes(classes: usize) -> Vec<usize> {
    (2..classes).collect()
}

/// A segmentation result. Scores are rounded to f32 so that in-memory
/// results equal what a `.pxsm` round trip gives back.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub scores: ScoreMap,
    pub labels: LabelMap,
}

pub fn segment_image(net: &ToyNet<f32>, image: &RgbImage) -> Result<Segmentation> {
    let fused = net.fused_scores(image)?;
    let scores = ScoreMap::from_bytes(&fused.to_bytes())?;
    let labels = argmax_label(&scores);
    Ok(Segmentation { scores, labels })
}

/// Confidence map used for detection scores.
pub fn detection_confidences(scores: &ScoreMap, raw: bool) -> ScoreMap {
    if raw {
        scores.clone()
    } else {
        softmax_map(scores)
    }
}

pub fn load_train_samples(manifest: &DatasetManifest) -> Result<Vec<TrainSample>> {
    manifest
        .records
        .iter()
        .map(|r| {
            Ok(TrainSample {
                image: RgbImage::read_png(&r.image)?,
                labels: LabelMap::read_png(&r.labels)?,
            })
        })
        .collect()
}

/// Writes one scene id per line.
pub fn write_scene_ids(path: &Path, ids: &[usize]) -> Result<()> {
    let text: String = ids.iter().map(|i| format!("{i}\n")).collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_scene_ids(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad scene id {l:?}", path.display())))
        })
        .collect()
}

/// Per-class detection AP over a test set. Returns APs indexed like
/// `object_ids` (`None` where no ground-truth box exists) and the mean.
pub fn detection_ap(
    detections: &[Vec<Detection>],
    gt_labels: &[LabelMap],
    object_ids: &[usize],
) -> Result<(Vec<Option<f64>>, Option<f64>)> {
    let gt_boxes: Vec<Vec<Vec<BoundingBox>>> = gt_labels
        .iter()
        .map(|l| data::ground_truth_boxes(l, object_ids))
        .collect();
    let mut aps = Vec::with_capacity(object_ids.len());
    for (k, &class) in object_ids.iter().enumerate() {
        let dets: Vec<Vec<Detection>> = detections
            .iter()
            .map(|d| d.iter().filter(|x| x.class == class).cloned().collect())
            .collect();
        let gts: Vec<Vec<BoundingBox>> = gt_boxes.iter().map(|g| g[k].clone()).collect();
        aps.push(eval::average_precision(&dets, &gts)?.map(|c| c.ap));
    }
    let mean = eval::mean_ap(&aps).ok();
    Ok((aps, mean))
}

/// Trains one scene variant on `train` label maps and returns its accuracy
/// on `test`.
pub fn scene_variant_accuracy(
    variant: SceneVariant,
    additive: Kernel,
    c: f64,
    classes: usize,
    train: (&[LabelMap], &[usize]),
    test: (&[LabelMap], &[usize]),
) -> Result<f64> {
    let mode = variant.feature_mode();
    let extract = |maps: &[LabelMap]| -> Result<Vec<Vec<f64>>> {
        maps.iter().map(|m| features::extract(m, classes, mode)).collect()
    };
    let opts = svm::TrainOptions { c, ..Default::default() };
    let model = svm::train_svm(&extract(train.0)?, train.1, variant.kernel(additive), &opts)?;
    let preds: Vec<usize> = extract(test.0)?
        .iter()
        .map(|x| model.predict(x).map(|p| p.0))
        .collect::<Result<_>>()?;
    eval::scene_accuracy(test.1, &preds)
}

#[derive(Debug, Clone, Default)]
pub struct PipelineReport {
    pub run_dir: PathBuf,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub seg: Option<eval::SegMetrics>,
    pub baseline_mean_iou: f64,
    pub scene_accuracy: BTreeMap<&'static str, f64>,
    pub majority_baseline: f64,
    pub ap: Vec<Option<f64>>,
    pub mean_ap: Option<f64>,
    pub artifacts: Vec<PathBuf>,
}

struct Run {
    dir: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Run {
    fn mkdir(&self, rel: &str) -> Result<PathBuf> {
        let d = self.dir.join(rel);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    fn record(&mut self, path: &Path) {
        self.artifacts.push(path.strip_prefix(&self.dir).unwrap_or(path).to_path_buf());
    }

    fn write(&mut self, rel: &str, text: &str) -> Result<PathBuf> {
        let p = self.dir.join(rel);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        self.record(&p);
        Ok(p)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Window used to compare early and late training loss.
pub const LOSS_WINDOW: usize = 100;

/// Executes every stage in order under `out`.
pub fn run_pipeline(cfg: &PipelineConfig, out: impl AsRef<Path>) -> Result<PipelineReport> {
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut run = Run {
        dir: out.to_path_buf(),
        artifacts: Vec::new(),
    };
    let mut report = PipelineReport {
        run_dir: out.to_path_buf(),
        ..Default::default()
    };

    // data
    let (train_m, test_m) = (|| -> Result<_> {
        match &cfg.data_dir {
            Some(dir) => {
                if !dir.is_dir() {
                    return Err(Error::io(
                        dir,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory missing"),
                    ));
                }
                Ok((
                    data::load_manifest(dir.join("train.manifest"))?,
                    data::load_manifest(dir.join("test.manifest"))?,
                ))
            }
            None => {
                let dcfg = cfg.data_config();
                let rule = SceneRule::default_for(&dcfg);
                let dir = run.mkdir("data")?;
                let (tr, te) = data::generate(&dcfg, &rule, &dir)?;
                for f in ["train.manifest", "test.manifest", data::PALETTE_FILE, data::SCENES_FILE] {
                    run.record(&dir.join(f));
                }
                Ok((tr, te))
            }
        }
    })()
    .map_err(|e| e.in_stage("data"))?;
    let classes = train_m.classes();
    let objects = object_classes(classes);
    let train_gt: Vec<LabelMap> = train_m
        .records
        .iter()
        .map(|r| LabelMap::read_png(&r.labels))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("data"))?;
    let test_gt: Vec<LabelMap> = test_m
        .records
        .iter()
        .map(|r| LabelMap::read_png(&r.labels))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("data"))?;

    // train-seg
    let net = if cfg.labels_from_gt {
        None
    } else {
        let trained = (|| -> Result<ToyNet<f32>> {
            let samples = load_train_samples(&train_m)?;
            let mut net = ToyNet::<f32>::init(classes, &net::DEFAULT_SCALES, substream(cfg.seed, "init"))?;
            let tr = net::train(&mut net, &samples, &cfg.train_config())?;
            if tr.losses.len() >= LOSS_WINDOW {
                report.initial_loss = Some(mean(&tr.losses[..LOSS_WINDOW]));
                report.final_loss = Some(mean(&tr.losses[tr.losses.len() - LOSS_WINDOW..]));
            }
            let model = out.join("model.pxck");
            net.save_checkpoint(&model)?;
            run.record(&model);
            let trace: String = tr.losses.iter().map(|l| format!("{l:.6}\n")).collect();
            run.write("train_loss.txt", &trace)?;
            Ok(net)
        })()
        .map_err(|e| e.in_stage("train-seg"))?;
        Some(trained)
    };

    // segment
    let (train_pred, test_seg) = (|| -> Result<(Vec<LabelMap>, Vec<Segmentation>)> {
        match &net {
            None => {
                let unit = |l: &LabelMap| ScoreMap::from_fn(l.height(), l.width(), classes, |_, _, _| 1.0);
                let test = test_gt
                    .iter()
                    .map(|l| Ok(Segmentation { scores: unit(l)?, labels: l.clone() }))
                    .collect::<Result<_>>()?;
                Ok((train_gt.clone(), test))
            }
            Some(net) => {
                let pred_dir = run.mkdir("pred")?;
                let mut train_pred = Vec::with_capacity(train_m.records.len());
                for r in &train_m.records {
                    let seg = segment_image(net, &RgbImage::read_png(&r.image)?)?;
                    train_pred.push(seg.labels);
                }
                let mut test = Vec::with_capacity(test_m.records.len());
                for r in &test_m.records {
                    let seg = segment_image(net, &RgbImage::read_png(&r.image)?)?;
                    let stem = r.stem();
                    let lp = pred_dir.join(format!("{stem}.png"));
                    let sp = pred_dir.join(format!("{stem}.pxsm"));
                    seg.labels.write_png(&lp)?;
                    seg.scores.write_file(&sp)?;
                    run.record(&lp);
                    run.record(&sp);
                    test.push(seg);
                }
                Ok((train_pred, test))
            }
        }
    })()
    .map_err(|e| e.in_stage("segment"))?;

    // features, train-scene, classify-scene
    let train_scenes: Vec<usize> = train_m.records.iter().map(|r| r.scene).collect();
    let test_scenes: Vec<usize> = test_m.records.iter().map(|r| r.scene).collect();
    let mut variant_preds: Vec<(SceneVariant, Vec<usize>)> = Vec::new();
    for &variant in &cfg.variants {
        let mode = variant.feature_mode();
        let extract = |maps: &[LabelMap]| -> Result<Vec<Vec<f64>>> {
            maps.iter().map(|m| features::extract(m, classes, mode)).collect()
        };
        let test_labels: Vec<LabelMap> = test_seg.iter().map(|s| s.labels.clone()).collect();
        let (train_x, test_x) = (|| -> Result<_> {
            let (a, b) = (extract(&train_pred)?, extract(&test_labels)?);
            let dir = run.mkdir(&format!("features/{}", mode.name()))?;
            let records = train_m.records.iter().zip(&a).chain(test_m.records.iter().zip(&b));
            for (r, x) in records {
                let p = dir.join(format!("{}.feat", r.stem()));
                if !p.exists() {
                    features::write_feat(&p, x)?;
                    run.record(&p);
                }
            }
            Ok((a, b))
        })()
        .map_err(|e| e.in_stage("features"))?;

        let model = (|| -> Result<SvmModel> {
            let opts = svm::TrainOptions { c: cfg.svm_c, ..Default::default() };
            let m = svm::train_svm(&train_x, &train_scenes, variant.kernel(cfg.kernel), &opts)?;
            let p = out.join(format!("scene_{}.pxsvm", variant.name()));
            m.save(&p)?;
            run.record(&p);
            Ok(m)
        })()
        .map_err(|e| e.in_stage("train-scene"))?;

        let preds = (|| -> Result<Vec<usize>> {
            let preds: Vec<usize> = test_x
                .iter()
                .map(|x| model.predict(x).map(|p| p.0))
                .collect::<Result<_>>()?;
            let p = out.join(format!("scene_{}.pred", variant.name()));
            write_scene_ids(&p, &preds)?;
            run.record(&p);
            Ok(preds)
        })()
        .map_err(|e| e.in_stage("classify-scene"))?;
        variant_preds.push((variant, preds));
    }

    // detect
    let detections = (|| -> Result<Vec<Vec<Detection>>> {
        let dir = run.mkdir("det")?;
        let opts = DetectOptions { min_area: cfg.min_area };
        let mut all = Vec::with_capacity(test_seg.len());
        for (r, seg) in test_m.records.iter().zip(&test_seg) {
            let conf = detection_confidences(&seg.scores, cfg.raw_scores || net.is_none());
            let dets = detect::detect_objects(&seg.labels, &conf, &objects, opts)?;
            let p = dir.join(format!("{}.det", r.stem()));
            detect::write_detections(&p, &dets)?;
            run.record(&p);
            all.push(dets);
        }
        Ok(all)
    })()
    .map_err(|e| e.in_stage("detect"))?;

    // eval
    (|| -> Result<()> {
        let test_labels: Vec<LabelMap> = test_seg.iter().map(|s| s.labels.clone()).collect();
        let seg = eval::seg_metrics(&test_gt, &test_labels, classes)?;
        let most_frequent = {
            let mut counts = vec![0u64; classes];
            for m in &train_gt {
                for &v in m.as_slice() {
                    if (v as usize) < classes {
                        counts[v as usize] += 1;
                    }
                }
            }
            crate::labeling::argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>()) as u8
        };
        let constant: Vec<LabelMap> = test_gt
            .iter()
            .map(|g| LabelMap::filled(g.height(), g.width(), most_frequent))
            .collect::<Result<_>>()?;
        report.baseline_mean_iou = eval::seg_metrics(&test_gt, &constant, classes)?.mean_iou;

        let majority = {
            let mut counts = vec![0usize; train_m.scene_names.len()];
            for &s in &train_scenes {
                counts[s] += 1;
            }
            let best = crate::labeling::argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
            vec![best; test_scenes.len()]
        };
        report.majority_baseline = eval::scene_accuracy(&test_scenes, &majority)?;
        for (variant, preds) in &variant_preds {
            report
                .scene_accuracy
                .insert(variant.name(), eval::scene_accuracy(&test_scenes, preds)?);
        }
        let (aps, map) = detection_ap(&detections, &test_gt, &objects)?;
        report.ap = aps;
        report.mean_ap = map;
        report.seg = Some(seg);
        Ok(())
    })()
    .map_err(|e| e.in_stage("eval"))?;

    // render
    (|| -> Result<()> {
        if cfg.render_count == 0 {
            return Ok(());
        }
        let dir = run.mkdir("render")?;
        for ((r, seg), dets) in test_m
            .records
            .iter()
            .zip(&test_seg)
            .zip(&detections)
            .take(cfg.render_count)
        {
            let image = RgbImage::read_png(&r.image)?;
            let overlay = render::render_labels(&seg.labels, &train_m.palette, Some(&image))?;
            let gt: Vec<BoundingBox> = data::ground_truth_boxes(&LabelMap::read_png(&r.labels)?, &objects)
                .into_iter()
                .flatten()
                .collect();
            let boxed = render::render_detections(&overlay, dets, Some(&gt));
            let p = dir.join(format!("{}.png", r.stem()));
            boxed.write_png(&p)?;
            run.record(&p);
        }
        Ok(())
    })()
    .map_err(|e| e.in_stage("render"))?;

    let metrics = format_metrics(&report, &train_m);
    run.write("metrics.txt", &metrics)?;
    let mut listing: Vec<String> = run.artifacts.iter().map(|p| p.display().to_string()).collect();
    listing.push("manifest.txt".into());
    run.write("manifest.txt", &(listing.join("\n") + "\n"))?;
    report.artifacts = run.artifacts;
    Ok(report)
}

fn format_metrics(report: &PipelineReport, train_m: &DatasetManifest) -> String {
    let mut s = String::new();
    if let (Some(a), Some(b)) = (report.initial_loss, report.final_loss) {
        writeln!(s, "train.initial_loss={a:.6}").unwrap();
        writeln!(s, "train.final_loss={b:.6}").unwrap();
    }
    if let Some(seg) = &report.seg {
        for line in eval::seg_metrics_lines(seg) {
            writeln!(s, "{line}").unwrap();
        }
    }
    writeln!(s, "baseline.mean_iou={:.6}", report.baseline_mean_iou).unwrap();
    for (name, acc) in &report.scene_accuracy {
        writeln!(s, "scene_accuracy.{name}={acc:.6}").unwrap();
    }
    writeln!(s, "baseline.scene_majority={:.6}", report.majority_baseline).unwrap();
    let objects = object_classes(train_m.classes());
    for (class, ap) in objects.iter().zip(&report.ap) {
        let v = ap.map_or("na".to_string(), |x| format!("{x:.6}"));
        writeln!(s, "ap.{}={v}", train_m.palette.name(*class)).unwrap();
    }
    let m = report.mean_ap.map_or("na".to_string(), |x| format!("{x:.6}"));
    writeln!(s, "mean_ap={m}").unwrap();
    s
}
