//! ToyRooms: a synthetic indoor-scene dataset with exact ground truth.
//!
//! Every image is a wall/floor background split at a random row with a few
//! axis-aligned rectangles and ellipses on top. Objects never touch each
//! other, so each placed object is exactly one 8-connected component of its
//! class and its tight box equals the placement box. The scene label is a
//! function of which object classes are present.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::detect::connected_components;
use crate::error::{Error, Result};
use crate::grid::{BoundingBox, ClassPalette, Grid, LabelMap, RgbImage, IGNORE, MAX_CLASSES};

pub const WALL: u8 = 0;
pub const FLOOR: u8 = 1;

const OBJECT_NAMES: [&str; 6] = ["table", "chair", "bed", "sofa", "lamp", "shelf"];
const SCENE_NAMES: [&str; 5] = ["dining_room", "office", "bedroom", "living_room", "other"];
const PLACEMENT_RETRIES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRoomsConfig {
    /// Images are `size × size`.
    pub size: usize,
    pub object_classes: usize,
    pub structure_classes: usize,
    /// Inclusive range of objects per image.
    pub objects_per_image: (usize, usize),
    /// Inclusive range of object box sides in pixels.
    pub object_side: (usize, usize),
    /// Per-channel Gaussian noise on the `[0, 1]` color scale.
    pub noise_std: f64,
    pub seed: u64,
    pub train_count: usize,
    pub test_count: usize,
}

impl Default for ToyRoomsConfig {
    fn default() -> Self {
        ToyRoomsConfig {
            size: 64,
            object_classes: 6,
            structure_classes: 2,
            objects_per_image: (1, 4),
            object_side: (7, 18),
            noise_std: 0.05,
            seed: 0,
            train_count: 500,
            test_count: 200,
        }
    }
}

impl ToyRoomsConfig {
    /// Config for `classes` total classes, keeping the two structure classes.
    pub fn with_classes(mut self, classes: usize) -> Self {
        self.object_classes = classes.saturating_sub(self.structure_classes);
        self
    }

    pub fn total_classes(&self) -> usize {
        self.structure_classes + self.object_classes
    }

    /// Class ids of the objects, after the structure classes.
    pub fn object_ids(&self) -> Vec<usize> {
        (self.structure_classes..self.total_classes()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.structure_classes != 2 {
            return bad(format!(
                "ToyRooms uses exactly 2 structure classes, got {}",
                self.structure_classes
            ));
        }
        if self.total_classes() > MAX_CLASSES - 1 {
            return bad(format!("{} classes exceeds 254", self.total_classes()));
        }
        if self.object_classes == 0 && self.objects_per_image.1 > 0 {
            return bad("objects requested but no object classes configured".into());
        }
        let (lo, hi) = self.objects_per_image;
        if lo > hi {
            return bad(format!("objects per image range {lo}..{hi} is empty"));
        }
        let (smin, smax) = self.object_side;
        if smin == 0 || smin > smax || smax + 2 > self.size {
            return bad(format!(
                "object sides {smin}..{smax} do not fit a {}-pixel image",
                self.size
            ));
        }
        if self.size < 8 {
            return bad(format!("image size {} below 8", self.size));
        }
        if !(self.noise_std >= 0.0) {
            return bad(format!("noise stddev {} is negative", self.noise_std));
        }
        Ok(())
    }

    /// Probability that a given object class appears in an image: the
    /// object count is uniform over the configured range and each object's
    /// class is uniform over the object classes.
    pub fn presence_probability(&self) -> f64 {
        let (lo, hi) = self.objects_per_image;
        let miss = 1.0 - 1.0 / self.object_classes as f64;
        (lo..=hi).map(|n| 1.0 - miss.powi(n as i32)).sum::<f64>() / (hi - lo + 1) as f64
    }

    pub fn palette(&self) -> ClassPalette {
        let mut names = vec!["wall".to_string(), "floor".to_string()];
        for k in 0..self.object_classes {
            names.push(match OBJECT_NAMES.get(k) {
                Some(n) => n.to_string(),
                None => format!("object{k}"),
            });
        }
        ClassPalette::with_default_colors(names).expect("generated names are unique")
    }
}

/// Ordered scene rules: the first rule whose required object classes are
/// all present decides the scene; otherwise the fallback applies.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRule {
    pub rules: Vec<(BTreeSet<usize>, usize)>,
    pub fallback: usize,
    pub names: Vec<String>,
}

impl SceneRule {
    /// Four scenes keyed on the first three object classes plus "other",
    /// first match wins: `{o0, o2}` gives scene 3, then `{o2}` gives 2,
    /// `{o1}` gives 1 and `{o0}` gives 0. Every scene is then a halfspace of
    /// the presence bits, so one-vs-rest linear classifiers can separate
    /// them, and no scene covers more than a quarter of the images. With
    /// fewer than four object classes each class gets its own scene.
    pub fn default_for(config: &ToyRoomsConfig) -> Self {
        let o = config.object_ids();
        let rules: Vec<(BTreeSet<usize>, usize)> = if o.len() >= 4 {
            vec![
                (BTreeSet::from([o[0], o[2]]), 3),
                (BTreeSet::from([o[2]]), 2),
                (BTreeSet::from([o[1]]), 1),
                (BTreeSet::from([o[0]]), 0),
            ]
        } else {
            o.iter().enumerate().map(|(i, &c)| (BTreeSet::from([c]), i)).collect()
        };
        let fallback = rules.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let names = (0..=fallback)
            .map(|i| {
                if i == fallback {
                    "other".to_string()
                } else if o.len() >= 4 {
                    SCENE_NAMES[i].to_string()
                } else {
                    format!("scene{i}")
                }
            })
            .collect();
        SceneRule {
            rules,
            fallback,
            names,
        }
    }

    pub fn num_scenes(&self) -> usize {
        self.names.len()
    }

    pub fn validate(&self, config: &ToyRoomsConfig) -> Result<()> {
        let n = self.num_scenes();
        if self.fallback >= n {
            return Err(Error::Invalid(format!("fallback scene {} has no name", self.fallback)));
        }
        for (req, scene) in &self.rules {
            if *scene >= n {
                return Err(Error::Invalid(format!("scene id {scene} has no name")));
            }
            if let Some(c) = req
                .iter()
                .find(|&&c| c < config.structure_classes || c >= config.total_classes())
            {
                return Err(Error::Invalid(format!("rule requires non-object class {c}")));
            }
        }
        Ok(())
    }

    pub fn scene_for(&self, present: &BTreeSet<usize>) -> usize {
        self.rules
            .iter()
            .find(|(req, _)| req.is_subset(present))
            .map_or(self.fallback, |(_, scene)| *scene)
    }
}

/// Object classes with at least one pixel in `labels`.
pub fn present_objects(labels: &LabelMap, object_ids: &[usize]) -> BTreeSet<usize> {
    let mut seen = [false; 256];
    for &v in labels.as_slice() {
        seen[v as usize] = true;
    }
    object_ids.iter().copied().filter(|&c| seen[c]).collect()
}

/// Tight boxes of the connected components of each object class, indexed
/// like `object_ids`.
pub fn ground_truth_boxes(labels: &LabelMap, object_ids: &[usize]) -> Vec<Vec<BoundingBox>> {
    object_ids
        .iter()
        .map(|&c| {
            let mask: Vec<bool> = labels.as_slice().iter().map(|&v| v as usize == c).collect();
            connected_components(&mask, labels.height(), labels.width())
                .into_iter()
                .map(|comp| comp.bbox)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Rectangle,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacedObject {
    pub class: usize,
    pub shape: Shape,
    /// Tight box of the rasterized shape.
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone)]
pub struct ToySample {
    pub image: RgbImage,
    pub labels: LabelMap,
    pub objects: Vec<PlacedObject>,
    pub scene: usize,
}

/// Pixels covered by a shape drawn in `frame`.
fn rasterize(shape: Shape, frame: &BoundingBox) -> Vec<(usize, usize)> {
    let mut px = Vec::new();
    let (cx, cy) = (
        (frame.x0 + frame.x1) as f64 / 2.0,
        (frame.y0 + frame.y1) as f64 / 2.0,
    );
    let (a, b) = (frame.width() as f64 / 2.0, frame.height() as f64 / 2.0);
    for row in frame.y0..frame.y1 {
        for col in frame.x0..frame.x1 {
            let inside = match shape {
                Shape::Rectangle => true,
                Shape::Ellipse => {
                    let dx = (col as f64 + 0.5 - cx) / a;
                    let dy = (row as f64 + 0.5 - cy) / b;
                    dx * dx + dy * dy <= 1.0
                }
            };
            if inside {
                px.push((row, col));
            }
        }
    }
    px
}

fn tight_box(pixels: &[(usize, usize)]) -> BoundingBox {
    let mut b = BoundingBox {
        x0: usize::MAX,
        y0: usize::MAX,
        x1: 0,
        y1: 0,
    };
    for &(r, c) in pixels {
        b.x0 = b.x0.min(c);
        b.y0 = b.y0.min(r);
        b.x1 = b.x1.max(c + 1);
        b.y1 = b.y1.max(r + 1);
    }
    b
}

/// Sample generator for one config and scene rule.
#[derive(Debug, Clone)]
pub struct ToyRooms {
    pub config: ToyRoomsConfig,
    pub rule: SceneRule,
    pub palette: ClassPalette,
}

impl ToyRooms {
    pub fn new(config: ToyRoomsConfig, rule: SceneRule) -> Result<Self> {
        config.validate()?;
        rule.validate(&config)?;
        let palette = config.palette();
        Ok(ToyRooms {
            config,
            rule,
            palette,
        })
    }

    /// Draws one sample; `index` only labels placement errors.
    pub fn sample(&self, rng: &mut ChaCha8Rng, index: usize) -> Result<ToySample> {
        let cfg = &self.config;
        let size = cfg.size;
        let split = rng.random_range(size / 3..=2 * size / 3);
        let count = rng.random_range(cfg.objects_per_image.0..=cfg.objects_per_image.1);

        let mut frames: Vec<BoundingBox> = Vec::with_capacity(count);
        let mut objects = Vec::with_capacity(count);
        let mut painted: Vec<Vec<(usize, usize)>> = Vec::with_capacity(count);
        for _ in 0..count {
            let class = cfg.structure_classes + rng.random_range(0..cfg.object_classes);
            let shape = if rng.random_bool(0.5) { Shape::Ellipse } else { Shape::Rectangle };
            let w = rng.random_range(cfg.object_side.0..=cfg.object_side.1);
            let h = rng.random_range(cfg.object_side.0..=cfg.object_side.1);
            let mut placed = None;
            for _ in 0..PLACEMENT_RETRIES {
                // keep the 1-pixel ignore ring free
                let x0 = rng.random_range(1..=size - 1 - w);
                let y0 = rng.random_range(1..=size - 1 - h);
                let frame = BoundingBox { x0, y0, x1: x0 + w, y1: y0 + h };
                let clear = frames.iter().all(|f| {
                    let grown = BoundingBox {
                        x0: f.x0.saturating_sub(1),
                        y0: f.y0.saturating_sub(1),
                        x1: f.x1 + 1,
                        y1: f.y1 + 1,
                    };
                    grown.intersection_area(&frame) == 0
                });
                if clear {
                    placed = Some(frame);
                    break;
                }
            }
            let frame = placed.ok_or(Error::Placement(index))?;
            let pixels = rasterize(shape, &frame);
            objects.push(PlacedObject {
                class,
                shape,
                bbox: tight_box(&pixels),
            });
            frames.push(frame);
            painted.push(pixels);
        }

        let mut labels = LabelMap::new(
            size,
            size,
            (0..size * size)
                .map(|i| if i / size < split { WALL } else { FLOOR })
                .collect(),
        )?;
        for (obj, pixels) in objects.iter().zip(&painted) {
            for &(r, c) in pixels {
                labels.set(r, c, obj.class as u8);
            }
        }

        let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut image = RgbImage::filled(size, size, [0, 0, 0])?;
        for r in 0..size {
            for c in 0..size {
                let base = self.palette.color(labels.get(r, c) as usize);
                let mut px = [0u8; 3];
                for (k, v) in px.iter_mut().enumerate() {
                    let x = base[k] as f64 / 255.0 + noise.sample(rng);
                    *v = (x.clamp(0.0, 1.0) * 255.0).round() as u8;
                }
                image.set(r, c, px);
            }
        }
        for i in 0..size {
            for (r, c) in [(0, i), (size - 1, i), (i, 0), (i, size - 1)] {
                labels.set(r, c, IGNORE);
            }
        }

        let present: BTreeSet<usize> = objects.iter().map(|o| o.class).collect();
        let scene = self.rule.scene_for(&present);
        Ok(ToySample {
            image,
            labels,
            objects,
            scene,
        })
    }

    /// Train then test samples from one seeded stream.
    pub fn samples(&self) -> Result<(Vec<ToySample>, Vec<ToySample>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let train = (0..self.config.train_count)
            .map(|i| self.sample(&mut rng, i))
            .collect::<Result<Vec<_>>>()?;
        let test = (0..self.config.test_count)
            .map(|i| self.sample(&mut rng, self.config.train_count + i))
            .collect::<Result<Vec<_>>>()?;
        Ok((train, test))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub image: PathBuf,
    pub labels: PathBuf,
    pub scene: usize,
}

impl ManifestRecord {
    /// File stem of the label map, used to name per-image outputs.
    pub fn stem(&self) -> String {
        self.labels
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

/// A dataset split: records plus the class palette and scene names found
/// next to the manifest file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub split: String,
    pub records: Vec<ManifestRecord>,
    pub palette: ClassPalette,
    pub scene_names: Vec<String>,
}

pub const PALETTE_FILE: &str = "palette.txt";
pub const SCENES_FILE: &str = "scenes.txt";

impl DatasetManifest {
    pub fn classes(&self) -> usize {
        self.palette.len()
    }

    /// Writes `<dir>/<split>.manifest` with paths relative to `dir`, plus
    /// `palette.txt` and `scenes.txt`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let mut text = String::new();
        for r in &self.records {
            let rel = |p: &Path| p.strip_prefix(dir).unwrap_or(p).display().to_string();
            writeln!(text, "{}\t{}\t{}", rel(&r.image), rel(&r.labels), r.scene).unwrap();
        }
        let path = dir.join(format!("{}.manifest", self.split));
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.palette.write_file(dir.join(PALETTE_FILE))?;
        let scenes = dir.join(SCENES_FILE);
        fs::write(&scenes, self.scene_names.join("\n") + "\n").map_err(|e| Error::io(&scenes, e))?;
        Ok(path)
    }
}

/// Reads a manifest, checking that every referenced file exists, scene ids
/// are in range and every label map only holds palette classes or
/// [`IGNORE`].
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let palette = ClassPalette::read_file(dir.join(PALETTE_FILE))?;
    let scenes_path = dir.join(SCENES_FILE);
    let scene_names: Vec<String> = fs::read_to_string(&scenes_path)
        .map_err(|e| Error::io(&scenes_path, e))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().to_string())
        .collect();
    let split = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Format(format!("{}:{}: {m}", path.display(), i + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad("expected image<TAB>labels<TAB>scene"));
        }
        let scene: usize = f[2].trim().parse().map_err(|_| bad("bad scene id"))?;
        if scene >= scene_names.len() {
            return Err(bad(&format!(
                "scene id {scene} but only {} scenes",
                scene_names.len()
            )));
        }
        let image = dir.join(f[0]);
        let labels = dir.join(f[1]);
        for p in [&image, &labels] {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file missing"),
                ));
            }
        }
        let map = LabelMap::read_png(&labels)?;
        if let Err(Error::LabelValue { value, row, col, classes }) = map.validate(palette.len()) {
            return Err(Error::LabelFile {
                path: labels,
                value,
                row,
                col,
                classes,
            });
        }
        records.push(ManifestRecord { image, labels, scene });
    }
    Ok(DatasetManifest {
        split,
        records,
        palette,
        scene_names,
    })
}

/// Generates the dataset under `out`: `images/`, `labels/`, `train.manifest`,
/// `test.manifest`, `palette.txt` and `scenes.txt`.
pub fn generate(
    config: &ToyRoomsConfig,
    rule: &SceneRule,
    out: impl AsRef<Path>,
) -> Result<(DatasetManifest, DatasetManifest)> {
    let out = out.as_ref();
    let gen = ToyRooms::new(config.clone(), rule.clone())?;
    let (train, test) = gen.samples()?;
    for sub in ["images", "labels"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let write_split = |split: &str, samples: &[ToySample]| -> Result<DatasetManifest> {
        let mut records = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            let name = format!("{split}_{i:04}.png");
            let image = out.join("images").join(&name);
            let labels = out.join("labels").join(&name);
            s.image.write_png(&image)?;
            s.labels.write_png(&labels)?;
            records.push(ManifestRecord {
                image,
                labels,
                scene: s.scene,
            });
        }
        let m = DatasetManifest {
            split: split.to_string(),
            records,
            palette: gen.palette.clone(),
            scene_names: rule.names.clone(),
        };
        m.save(out)?;
        Ok(m)
    };
    let train_m = write_split("train", &train)?;
    let test_m = write_split("test", &test)?;
    Ok((train_m, test_m))
}

/// Corruption applied to a label map to imitate an imperfect segmenter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelNoise {
    /// Each object component is relabeled to another object class with this
    /// probability.
    pub swap_prob: f64,
    /// Up to this many spurious object rectangles are painted per map.
    pub max_blobs: usize,
    /// Inclusive side range of spurious rectangles.
    pub blob_side: (usize, usize),
}

impl Default for LabelNoise {
    fn default() -> Self {
        LabelNoise {
            swap_prob: 0.1,
            max_blobs: 2,
            blob_side: (3, 8),
        }
    }
}

/// Returns a corrupted copy of `labels`. IGNORE pixels stay IGNORE.
pub fn corrupt_labels(
    labels: &LabelMap,
    object_ids: &[usize],
    noise: &LabelNoise,
    rng: &mut ChaCha8Rng,
) -> Result<LabelMap> {
    if !(0.0..=1.0).contains(&noise.swap_prob) {
        return Err(Error::Invalid(format!("swap probability {} outside [0, 1]", noise.swap_prob)));
    }
    if noise.blob_side.0 == 0 || noise.blob_side.0 > noise.blob_side.1 {
        return Err(Error::Invalid(format!("bad blob side range {:?}", noise.blob_side)));
    }
    let (h, w) = (labels.height(), labels.width());
    let mut out = labels.clone();
    if object_ids.len() >= 2 {
        for &class in object_ids {
            let mask: Vec<bool> = labels.as_slice().iter().map(|&v| v as usize == class).collect();
            for comp in connected_components(&mask, h, w) {
                if !rng.random_bool(noise.swap_prob) {
                    continue;
                }
                let others: Vec<usize> = object_ids.iter().copied().filter(|&c| c != class).collect();
                let to = others[rng.random_range(0..others.len())] as u8;
                for &(r, c) in &comp.pixels {
                    out.set(r, c, to);
                }
            }
        }
    }
    if object_ids.is_empty() || noise.blob_side.0 > h.min(w) {
        return Ok(out);
    }
    let side_hi = noise.blob_side.1.min(h).min(w);
    for _ in 0..rng.random_range(0..=noise.max_blobs) {
        let bh = rng.random_range(noise.blob_side.0..=side_hi);
        let bw = rng.random_range(noise.blob_side.0..=side_hi);
        let r0 = rng.random_range(0..=h - bh);
        let c0 = rng.random_range(0..=w - bw);
        let class = object_ids[rng.random_range(0..object_ids.len())] as u8;
        for r in r0..r0 + bh {
            for c in c0..c0 + bw {
                if out.get(r, c) != IGNORE {
                    out.set(r, c, class);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(seed: u64) -> ToyRoomsConfig {
        ToyRoomsConfig {
            seed,
            train_count: 6,
            test_count: 3,
            ..Default::default()
        }
    }

    #[test]
    fn default_rule_is_a_decision_list() {
        let cfg = ToyRoomsConfig::default();
        let rule = SceneRule::default_for(&cfg);
        assert_eq!(rule.num_scenes(), 5);
        let s = |v: &[usize]| rule.scene_for(&v.iter().copied().collect());
        // first matching rule wins
        assert_eq!(s(&[2, 4]), 3);
        assert_eq!(s(&[2, 3, 4, 5]), 3);
        assert_eq!(s(&[3, 4]), 2);
        assert_eq!(s(&[2, 3]), 1);
        assert_eq!(s(&[2, 6, 7]), 0);
        assert_eq!(s(&[5, 6]), 4);
        assert_eq!(s(&[]), 4);
    }

    #[test]
    fn zero_objects_gives_fallback_scene() {
        let cfg = ToyRoomsConfig {
            objects_per_image: (0, 0),
            ..small_config(3)
        };
        let rule = SceneRule::default_for(&cfg);
        let (train, test) = ToyRooms::new(cfg, rule.clone()).unwrap().samples().unwrap();
        assert!(train.iter().chain(&test).all(|s| s.scene == rule.fallback));
    }

    #[test]
    fn samples_satisfy_layout_invariants() {
        let cfg = small_config(7);
        let gen = ToyRooms::new(cfg.clone(), SceneRule::default_for(&cfg)).unwrap();
        let (train, _) = gen.samples().unwrap();
        for s in &train {
            s.labels.validate(cfg.total_classes()).unwrap();
            for i in 0..cfg.size {
                assert_eq!(s.labels.get(0, i), IGNORE);
                assert_eq!(s.labels.get(i, cfg.size - 1), IGNORE);
            }
            for o in &s.objects {
                assert!(o.bbox.x0 >= 1 && o.bbox.x1 < cfg.size);
                assert!(o.bbox.area() > 20, "object too small for the presence threshold");
            }
        }
    }

    #[test]
    fn impossible_placement_names_the_image() {
        let cfg = ToyRoomsConfig {
            size: 16,
            objects_per_image: (6, 6),
            object_side: (7, 7),
            ..small_config(1)
        };
        let gen = ToyRooms::new(cfg.clone(), SceneRule::default_for(&cfg)).unwrap();
        assert!(matches!(gen.samples(), Err(Error::Placement(0))));
    }

    #[test]
    fn invalid_configs() {
        let too_many = ToyRoomsConfig::default().with_classes(256);
        assert!(too_many.validate().is_err());
        let big_objects = ToyRoomsConfig { object_side: (10, 70), ..Default::default() };
        assert!(big_objects.validate().is_err());
    }

    #[test]
    fn presence_probability_formula() {
        let cfg = ToyRoomsConfig::default();
        let expect = (1..=4).map(|n| 1.0 - (5.0f64 / 6.0).powi(n)).sum::<f64>() / 4.0;
        assert!((cfg.presence_probability() - expect).abs() < 1e-15);
    }

    #[test]
    fn manifest_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(5);
        let rule = SceneRule::default_for(&cfg);
        let (train, test) = generate(&cfg, &rule, dir.path()).unwrap();
        assert_eq!(load_manifest(dir.path().join("train.manifest")).unwrap(), train);
        assert_eq!(load_manifest(dir.path().join("test.manifest")).unwrap(), test);

        // label value equal to C is rejected at its first location
        let mut bad = LabelMap::read_png(&train.records[0].labels).unwrap();
        bad.set(3, 5, cfg.total_classes() as u8);
        bad.set(9, 1, cfg.total_classes() as u8);
        bad.write_png(&train.records[0].labels).unwrap();
        match load_manifest(dir.path().join("train.manifest")).unwrap_err() {
            Error::LabelFile { row, col, value, .. } => {
                assert_eq!((row, col, value as usize), (3, 5, cfg.total_classes()))
            }
            e => panic!("unexpected {e}"),
        }

        fs::remove_file(&test.records[1].image).unwrap();
        assert!(matches!(
            load_manifest(dir.path().join("test.manifest")),
            Err(Error::Io { .. })
        ));
        assert!(load_manifest(dir.path().join("missing.manifest")).is_err());
    }
}
