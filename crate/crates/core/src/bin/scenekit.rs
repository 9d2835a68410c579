use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scenekit::data::{self, SceneRule, ToyRoomsConfig};
use scenekit::detect::{self, DetectOptions};
use scenekit::eval;
use scenekit::features::{self, FeatureMode};
use scenekit::labeling::{argmax_label, max_fuse};
use scenekit::net::{self, Reduction, ToyNet, TrainConfig};
use scenekit::pipeline::{self, substream, PipelineConfig};
use scenekit::render;
use scenekit::svm::{self, Kernel, SvmModel};
use scenekit::{ClassPalette, Error, LabelMap, Result, RgbImage, ScoreMap};

#[derive(Parser)]
#[command(name = "scenekit", version, about = "Scene understanding from semantic segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a ToyRooms dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        train: usize,
        #[arg(long, default_value_t = 200)]
        test: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 8)]
        classes: usize,
    },
    /// Train the multi-scale pixel labeler.
    TrainSeg {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        #[arg(long, default_value_t = 0.001)]
        lr: f64,
        #[arg(long, default_value_t = 0.9)]
        power: f64,
        #[arg(long, default_value_t = 48)]
        crop: usize,
        #[arg(long, default_value_t = 0.5)]
        mirror: f64,
        #[arg(long, default_value_t = 0.9)]
        momentum: f64,
        /// Training objective: `sum` or `mean` of per-position terms.
        #[arg(long, default_value = "sum")]
        loss: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a trained labeler on one image.
    Segment {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out_scores: PathBuf,
        #[arg(long)]
        out_labels: PathBuf,
    },
    /// Max-fuse score maps of equal shape.
    Fuse {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label each pixel with its highest-scoring class.
    Label {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract a scene descriptor from a label map.
    Features {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        classes: usize,
        #[arg(long, default_value = "hist")]
        mode: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a multi-class scene SVM on a directory of `.feat` files.
    TrainScene {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "chi2")]
        kernel: String,
        #[arg(long = "C", default_value_t = 1.0)]
        c: f64,
        /// Choose C by 5-fold cross-validation instead.
        #[arg(long)]
        select_c: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify one `.feat` file, or every record of a manifest.
    ClassifyScene {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// With a features directory: classify these records in order.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect objects as connected components of a label map.
    Detect {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        classes: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Score with the fused scores instead of softmax probabilities.
        #[arg(long)]
        raw_scores: bool,
        #[arg(long, default_value_t = 0)]
        min_area: usize,
    },
    /// Segmentation metrics over label maps matched by file name.
    EvalSeg {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        classes: usize,
    },
    /// Scene accuracy against a manifest.
    EvalScene {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Per-class average precision against a manifest.
    EvalDet {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Draw a label overlay and detection boxes.
    Render {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        det: Option<PathBuf>,
        #[arg(long)]
        palette: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage end to end.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        labels_from_gt: bool,
        /// `all` or a comma-separated subset of hist-linear, onehot-linear,
        /// hist-kernel, pyramid-kernel.
        #[arg(long)]
        scene_variant: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { out, seed, train, test, size, classes } => {
            let config = ToyRoomsConfig {
                seed,
                train_count: train,
                test_count: test,
                size,
                ..Default::default()
            }
            .with_classes(classes);
            let rule = SceneRule::default_for(&config);
            let (tr, te) = data::generate(&config, &rule, &out)?;
            println!("wrote {} train and {} test images to {}", tr.records.len(), te.records.len(), out.display());
        }
        Command::TrainSeg { data, out, iters, lr, power, crop, mirror, momentum, loss, seed } => {
            let manifest = data::load_manifest(&data)?;
            let samples = pipeline::load_train_samples(&manifest)?;
            let mut model = ToyNet::<f32>::init(manifest.classes(), &net::DEFAULT_SCALES, substream(seed, "init"))?;
            let cfg = TrainConfig {
                base_lr: lr,
                power,
                max_iter: iters,
                crop,
                mirror_prob: mirror,
                momentum,
                reduction: Reduction::parse(&loss)?,
                seed: substream(seed, "train-seg"),
                ..Default::default()
            };
            let report = net::train(&mut model, &samples, &cfg)?;
            model.save_checkpoint(&out)?;
            if let (Some(first), Some(last)) = (report.logged.first(), report.logged.last()) {
                println!("loss {:.4} -> {:.4}", first.1, last.1);
            }
        }
        Command::Segment { model, image, out_scores, out_labels } => {
            let model = ToyNet::<f32>::load_checkpoint(&model)?;
            let seg = pipeline::segment_image(&model, &RgbImage::read_png(&image)?)?;
            seg.scores.write_file(&out_scores)?;
            seg.labels.write_png(&out_labels)?;
        }
        Command::Fuse { inputs, out } => {
            let maps: Vec<ScoreMap> = inputs.iter().map(ScoreMap::read_file).collect::<Result<_>>()?;
            max_fuse(&maps)?.write_file(&out)?;
        }
        Command::Label { input, out } => {
            argmax_label(&ScoreMap::read_file(&input)?).write_png(&out)?;
        }
        Command::Features { labels, classes, mode, out } => {
            let labels = LabelMap::read_png(&labels)?;
            let values = features::extract(&labels, classes, FeatureMode::parse(&mode)?)?;
            features::write_feat(&out, &values)?;
        }
        Command::TrainScene { features: dir, labels, kernel, c, select_c, out } => {
            let kernel: Kernel = kernel.parse()?;
            let manifest = data::load_manifest(&labels)?;
            let x = read_feature_dir(&dir, &manifest)?;
            let y: Vec<usize> = manifest.records.iter().map(|r| r.scene).collect();
            let c = if select_c { svm::select_c(&x, &y, kernel, &svm::C_GRID, 5)? } else { c };
            let opts = svm::TrainOptions { c, ..Default::default() };
            let model = svm::train_svm(&x, &y, kernel, &opts)?;
            model.save(&out)?;
            println!("trained {} classes with kernel {} and C {c}", model.num_classes(), kernel.name());
        }
        Command::ClassifyScene { model, features: path, manifest, out } => {
            let model = SvmModel::load(&model)?;
            let xs = match &manifest {
                Some(m) => read_feature_dir(&path, &data::load_manifest(m)?)?,
                None => vec![features::read_feat(&path)?],
            };
            let ids: Vec<usize> = xs.iter().map(|x| model.predict(x).map(|p| p.0)).collect::<Result<_>>()?;
            match out {
                Some(o) => pipeline::write_scene_ids(&o, &ids)?,
                None => ids.iter().for_each(|i| println!("{i}")),
            }
        }
        Command::Detect { labels, scores, classes, out, raw_scores, min_area } => {
            let labels = LabelMap::read_png(&labels)?;
            let scores = ScoreMap::read_file(&scores)?;
            let conf = pipeline::detection_confidences(&scores, raw_scores);
            let dets = detect::detect_objects(&labels, &conf, &classes, DetectOptions { min_area })?;
            detect::write_detections(&out, &dets)?;
        }
        Command::EvalSeg { gt, pred, classes } => {
            let mut names: Vec<PathBuf> = list_files(&pred, "png")?;
            names.sort();
            let mut gts = Vec::with_capacity(names.len());
            let mut preds = Vec::with_capacity(names.len());
            for p in &names {
                let name = p.file_name().expect("listed files have names");
                gts.push(LabelMap::read_png(gt.join(name))?);
                preds.push(LabelMap::read_png(p)?);
            }
            let m = eval::seg_metrics(&gts, &preds, classes)?;
            println!("pixel accuracy {:.4}", m.pixel_accuracy);
            println!("class accuracy {:.4}", m.mean_class_accuracy);
            for (c, iou) in m.iou.iter().enumerate() {
                println!("iou class {c} {}", iou.map_or("n/a".into(), |v| format!("{v:.4}")));
            }
            println!("mean iou {:.4}", m.mean_iou);
            for line in eval::seg_metrics_lines(&m) {
                println!("{line}");
            }
        }
        Command::EvalScene { gt, pred } => {
            let manifest = data::load_manifest(&gt)?;
            let truth: Vec<usize> = manifest.records.iter().map(|r| r.scene).collect();
            let acc = eval::scene_accuracy(&truth, &pipeline::read_scene_ids(&pred)?)?;
            println!("scene accuracy {acc:.4}");
            println!("scene_accuracy={acc:.6}");
        }
        Command::EvalDet { gt, pred } => {
            let manifest = data::load_manifest(&gt)?;
            let objects = pipeline::object_classes(manifest.classes());
            let mut dets = Vec::with_capacity(manifest.records.len());
            let mut labels = Vec::with_capacity(manifest.records.len());
            for r in &manifest.records {
                dets.push(detect::read_detections(pred.join(format!("{}.det", r.stem())))?);
                labels.push(LabelMap::read_png(&r.labels)?);
            }
            let (aps, map) = pipeline::detection_ap(&dets, &labels, &objects)?;
            for (c, ap) in objects.iter().zip(&aps) {
                let name = manifest.palette.name(*c);
                let v = ap.map_or("na".to_string(), |v| format!("{v:.6}"));
                println!("ap.{name}={v}");
            }
            println!("mean_ap={}", map.map_or("na".to_string(), |v| format!("{v:.6}")));
        }
        Command::Render { labels, image, det, palette, out } => {
            let labels = LabelMap::read_png(&labels)?;
            let palette = match palette {
                Some(p) => ClassPalette::read_file(p)?,
                None => {
                    let top = labels.as_slice().iter().filter(|&&v| v != scenekit::IGNORE).max().copied().unwrap_or(0);
                    let n = (top as usize + 1).max(2);
                    ClassPalette::with_default_colors((0..n).map(|i| format!("class{i}")).collect())?
                }
            };
            let base = image.map(RgbImage::read_png).transpose()?;
            let mut overlay = render::render_labels(&labels, &palette, base.as_ref())?;
            if let Some(d) = det {
                overlay = render::render_detections(&overlay, &detect::read_detections(d)?, None);
            }
            overlay.write_png(&out)?;
        }
        Command::Pipeline { config, out, seed, data, labels_from_gt, scene_variant } => {
            let mut cfg = match config {
                Some(p) => PipelineConfig::read_file(p)?,
                None => PipelineConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if data.is_some() {
                cfg.data_dir = data;
            }
            if labels_from_gt {
                cfg.labels_from_gt = true;
            }
            if let Some(v) = scene_variant {
                cfg.variants = pipeline::parse_variants(&v)?;
            }
            let report = pipeline::run_pipeline(&cfg, &out)?;
            print!("{}", std::fs::read_to_string(report.run_dir.join("metrics.txt")).map_err(|e| Error::io(&out, e))?);
        }
    }
    Ok(())
}

fn read_feature_dir(dir: &Path, manifest: &data::DatasetManifest) -> Result<Vec<Vec<f64>>> {
    manifest
        .records
        .iter()
        .map(|r| features::read_feat(dir.join(format!("{}.feat", r.stem()))))
        .collect()
}

fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e == ext) {
            out.push(p);
        }
    }
    Ok(out)
}
