//! Writes a ToyRooms dataset to disk and summarizes its scene distribution.
//!
//! cargo run --release --example generate_dataset -- <out_dir> [seed]

use scenekit::data::{self, SceneRule, ToyRoomsConfig};

fn main() -> scenekit::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "toyrooms".to_string());
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let config = ToyRoomsConfig { seed, ..Default::default() };
    let rule = SceneRule::default_for(&config);
    let (train, test) = data::generate(&config, &rule, &out)?;

    let mut counts = vec![0usize; rule.num_scenes()];
    for r in &train.records {
        counts[r.scene] += 1;
    }
    println!("{} train / {} test images in {out}", train.records.len(), test.records.len());
    for (name, n) in train.scene_names.iter().zip(&counts) {
        println!("  {name:<12} {n}");
    }
    println!("classes: {}", train.palette.names().join(", "));
    Ok(())
}
