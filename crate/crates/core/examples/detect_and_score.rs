//! Detects objects as connected components of ground-truth and corrupted
//! label maps and reports per-class average precision.
//!
//! cargo run --release --example detect_and_score -- [swap_prob]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenekit::data::{corrupt_labels, LabelNoise, SceneRule, ToyRooms, ToyRoomsConfig};
use scenekit::detect::{detect_objects, DetectOptions};
use scenekit::pipeline::detection_ap;
use scenekit::{Grid, LabelMap, ScoreMap};

fn main() -> scenekit::Result<()> {
    let swap_prob: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.3);
    let config = ToyRoomsConfig { train_count: 0, test_count: 100, ..Default::default() };
    let objects = config.object_ids();
    let classes = config.total_classes();
    let (_, test) = ToyRooms::new(config.clone(), SceneRule::default_for(&config))?.samples()?;
    let gt: Vec<LabelMap> = test.iter().map(|s| s.labels.clone()).collect();

    let noise = LabelNoise { swap_prob, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noisy: Vec<LabelMap> = gt
        .iter()
        .map(|l| corrupt_labels(l, &objects, &noise, &mut rng))
        .collect::<scenekit::Result<_>>()?;

    for (name, maps) in [("ground truth", &gt), ("corrupted", &noisy)] {
        let dets = maps
            .iter()
            .map(|l| {
                let unit = ScoreMap::from_fn(l.height(), l.width(), classes, |_, _, _| 1.0)?;
                detect_objects(l, &unit, &objects, DetectOptions::default())
            })
            .collect::<scenekit::Result<Vec<_>>>()?;
        let (aps, map) = detection_ap(&dets, &gt, &objects)?;
        let shown: Vec<String> = aps.iter().map(|a| a.map_or("n/a".into(), |v| format!("{v:.3}"))).collect();
        println!("{name:<13} AP {}  mAP {}", shown.join(" "), map.map_or("n/a".into(), |v| format!("{v:.3}")));
    }
    Ok(())
}
