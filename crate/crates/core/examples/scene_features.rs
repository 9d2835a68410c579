//! Prints the three scene descriptors of one generated image.
//!
//! cargo run --example scene_features -- [image_index]

use scenekit::data::{SceneRule, ToyRooms, ToyRoomsConfig};
use scenekit::features::{extract, FeatureMode};

fn main() -> scenekit::Result<()> {
    let index: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let config = ToyRoomsConfig { train_count: index + 1, test_count: 0, ..Default::default() };
    let rule = SceneRule::default_for(&config);
    let (train, _) = ToyRooms::new(config.clone(), rule.clone())?.samples()?;
    let sample = &train[index];
    let classes = config.total_classes();

    println!("scene {}", rule.names[sample.scene]);
    for o in &sample.objects {
        println!("  object class {} at {:?}", o.class, o.bbox);
    }
    for mode in [FeatureMode::Histogram, FeatureMode::OneHot, FeatureMode::Pyramid] {
        let v = extract(&sample.labels, classes, mode)?;
        let shown: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
        println!("{:<8} ({} values) {}", mode.name(), v.len(), shown.join(" "));
    }
    Ok(())
}
