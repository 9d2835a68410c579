//! Renders a ground-truth overlay with object boxes to a PNG.
//!
//! cargo run --example render_overlay -- <out.png> [image_index]

use scenekit::data::{ground_truth_boxes, SceneRule, ToyRooms, ToyRoomsConfig};
use scenekit::render::{render_detections, render_labels};

fn main() -> scenekit::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "overlay.png".to_string());
    let index: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let config = ToyRoomsConfig { train_count: index + 1, test_count: 0, ..Default::default() };
    let (train, _) = ToyRooms::new(config.clone(), SceneRule::default_for(&config))?.samples()?;
    let s = &train[index];

    let overlay = render_labels(&s.labels, &config.palette(), Some(&s.image))?;
    let boxes: Vec<_> = ground_truth_boxes(&s.labels, &config.object_ids()).into_iter().flatten().collect();
    render_detections(&overlay, &[], Some(&boxes)).write_png(&out)?;
    println!("wrote {out} with {} boxes", boxes.len());
    Ok(())
}
