//! Trains the multi-scale labeler on generated ToyRooms images and reports
//! how the loss moved.
//!
//! cargo run --release --example train_labeler -- [iterations] [seed] [momentum] [sum|mean]

use scenekit::data::{SceneRule, ToyRooms, ToyRoomsConfig};
use scenekit::net::{self, Reduction, ToyNet, TrainConfig, TrainSample};

fn main() -> scenekit::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let iters: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(2000);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let momentum: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.9);
    let reduction = match args.next() {
        Some(r) => Reduction::parse(&r)?,
        None => Reduction::Sum,
    };

    let config = ToyRoomsConfig { seed, ..Default::default() };
    let rule = SceneRule::default_for(&config);
    let classes = config.total_classes();
    let (train, test) = ToyRooms::new(config, rule)?.samples()?;
    let samples: Vec<TrainSample> = train
        .into_iter()
        .map(|s| TrainSample { image: s.image, labels: s.labels })
        .collect();

    let mut model = ToyNet::<f32>::init(classes, &net::DEFAULT_SCALES, seed)?;
    let cfg = TrainConfig { max_iter: iters, seed, momentum, reduction, ..Default::default() };
    let report = net::train(&mut model, &samples, &cfg)?;

    let window = 100.min(report.losses.len());
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let first = mean(&report.losses[..window]);
    let last = mean(&report.losses[report.losses.len() - window..]);
    println!("iterations {}  first-{window} mean {first:.4}  last-{window} mean {last:.4}  ratio {:.2}", report.losses.len(), first / last);

    let held_out: f64 = test
        .iter()
        .take(50)
        .map(|s| model.loss(&s.image, &s.labels))
        .sum::<scenekit::Result<f64>>()?
        / 50.0;
    println!("held-out loss on 50 test images {held_out:.4}");
    Ok(())
}
