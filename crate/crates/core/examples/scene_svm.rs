//! Trains one-vs-rest scene classifiers on ground-truth histograms with each
//! kernel, choosing C by cross-validation.
//!
//! cargo run --release --example scene_svm -- [seed]

use scenekit::data::{SceneRule, ToyRooms, ToyRoomsConfig};
use scenekit::eval::scene_accuracy;
use scenekit::features::{extract, FeatureMode};
use scenekit::svm::{select_c, train_svm, Kernel, TrainOptions, C_GRID};

fn main() -> scenekit::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let config = ToyRoomsConfig { seed, train_count: 200, test_count: 100, ..Default::default() };
    let classes = config.total_classes();
    let (train, test) = ToyRooms::new(config.clone(), SceneRule::default_for(&config))?.samples()?;
    let features = |set: &[scenekit::data::ToySample]| -> scenekit::Result<Vec<Vec<f64>>> {
        set.iter().map(|s| extract(&s.labels, classes, FeatureMode::Histogram)).collect()
    };
    let (x, xt) = (features(&train)?, features(&test)?);
    let y: Vec<usize> = train.iter().map(|s| s.scene).collect();
    let yt: Vec<usize> = test.iter().map(|s| s.scene).collect();

    for kernel in Kernel::ALL {
        let c = select_c(&x, &y, kernel, &C_GRID, 5)?;
        let model = train_svm(&x, &y, kernel, &TrainOptions { c, ..Default::default() })?;
        let pred: Vec<usize> = xt.iter().map(|v| model.predict(v).map(|p| p.0)).collect::<scenekit::Result<_>>()?;
        println!("{:<16} C {c:<6} test accuracy {:.3}", kernel.name(), scene_accuracy(&yt, &pred)?);
    }
    Ok(())
}
