//! Compares the four scene classifier variants on corrupted ground-truth
//! segmentations over several dataset seeds.
//!
//! cargo run --release --example scene_variants -- [seeds] [swap_prob] [max_blobs]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenekit::data::{corrupt_labels, LabelNoise, SceneRule, ToyRooms, ToyRoomsConfig};
use scenekit::pipeline::{scene_variant_accuracy, SceneVariant};
use scenekit::svm::Kernel;
use scenekit::LabelMap;

fn main() -> scenekit::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);
    let mut noise = LabelNoise::default();
    if let Some(p) = args.next().and_then(|a| a.parse().ok()) {
        noise.swap_prob = p;
    }
    if let Some(b) = args.next().and_then(|a| a.parse().ok()) {
        noise.max_blobs = b;
    }

    let mut totals = [0.0; 4];
    for seed in 0..seeds {
        let config = ToyRoomsConfig { seed, ..Default::default() };
        let objects = config.object_ids();
        let classes = config.total_classes();
        let (train, test) = ToyRooms::new(config.clone(), SceneRule::default_for(&config))?.samples()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut noisy = |set: &[scenekit::data::ToySample]| -> scenekit::Result<Vec<LabelMap>> {
            set.iter().map(|s| corrupt_labels(&s.labels, &objects, &noise, &mut rng)).collect()
        };
        let (train_maps, test_maps) = (noisy(&train)?, noisy(&test)?);
        let train_y: Vec<usize> = train.iter().map(|s| s.scene).collect();
        let test_y: Vec<usize> = test.iter().map(|s| s.scene).collect();
        print!("seed {seed}");
        for (k, v) in SceneVariant::ALL.into_iter().enumerate() {
            let acc = scene_variant_accuracy(
                v,
                Kernel::ChiSquared,
                1.0,
                classes,
                (&train_maps, &train_y),
                (&test_maps, &test_y),
            )?;
            totals[k] += acc;
            print!("  {} {acc:.3}", v.name());
        }
        println!();
    }
    print!("mean  ");
    for (k, v) in SceneVariant::ALL.into_iter().enumerate() {
        print!("  {} {:.3}", v.name(), totals[k] / seeds as f64);
    }
    println!();
    Ok(())
}
