//! Runs every stage on a reduced configuration and prints the summary.
//!
//! cargo run --release --example full_pipeline -- <out_dir> [iterations]

use scenekit::pipeline::{run_pipeline, PipelineConfig};

fn main() -> scenekit::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "run".to_string());
    let iters: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(400);
    let cfg = PipelineConfig { train_count: 120, test_count: 40, iters, ..Default::default() };
    let report = run_pipeline(&cfg, &out)?;
    print!("{}", std::fs::read_to_string(report.run_dir.join("metrics.txt")).unwrap_or_default());
    println!("{} artifacts under {out}", report.artifacts.len());
    Ok(())
}
