//! Trains the labeler briefly, then compares each scale's labeling with the
//! max-fused one on held-out images.
//!
//! cargo run --release --example segment_and_fuse -- [iterations]

use scenekit::data::{SceneRule, ToyRooms, ToyRoomsConfig};
use scenekit::eval::seg_metrics;
use scenekit::labeling::{argmax_label, max_fuse, softmax_map};
use scenekit::net::{self, ToyNet, TrainConfig, TrainSample, DEFAULT_SCALES};
use scenekit::{Grid, LabelMap};

fn main() -> scenekit::Result<()> {
    let iters: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(500);
    let config = ToyRoomsConfig { train_count: 200, test_count: 40, ..Default::default() };
    let classes = config.total_classes();
    let (train, test) = ToyRooms::new(config.clone(), SceneRule::default_for(&config))?.samples()?;
    let samples: Vec<TrainSample> = train
        .into_iter()
        .map(|s| TrainSample { image: s.image, labels: s.labels })
        .collect();

    let mut model = ToyNet::<f32>::init(classes, &DEFAULT_SCALES, 1)?;
    net::train(&mut model, &samples, &TrainConfig { max_iter: iters, ..Default::default() })?;

    let gt: Vec<LabelMap> = test.iter().map(|s| s.labels.clone()).collect();
    let mut per_scale: Vec<Vec<LabelMap>> = vec![Vec::new(); DEFAULT_SCALES.len()];
    let mut fused = Vec::new();
    for s in &test {
        let maps = model.forward(&s.image)?;
        for (k, m) in maps.iter().enumerate() {
            per_scale[k].push(argmax_label(m));
        }
        let f = max_fuse(&maps)?;
        // softmax leaves the argmax unchanged
        debug_assert_eq!(argmax_label(&softmax_map(&f)), argmax_label(&f));
        fused.push(argmax_label(&f));
    }
    for (scale, preds) in DEFAULT_SCALES.iter().zip(&per_scale) {
        let m = seg_metrics(&gt, preds, classes)?;
        println!("scale {scale:<4}  pixel acc {:.3}  mIoU {:.3}", m.pixel_accuracy, m.mean_iou);
    }
    let m = seg_metrics(&gt, &fused, classes)?;
    println!("max-fused   pixel acc {:.3}  mIoU {:.3}", m.pixel_accuracy, m.mean_iou);
    println!("label map size {}x{}", fused[0].height(), fused[0].width());
    Ok(())
}
