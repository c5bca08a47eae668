//! Stability protocol: repeated single-inference metrics per image.
//!
//! ```bash
//! cargo run --example error_bars
//! ```

use depthlab::coarse::{CoarseModel, DegradeParams};
use depthlab::diffusion::{
    make_schedule, train_refiner, RefinerTrainConfig, ScheduleKind, Variant,
};
use depthlab::eval::error_bars;
use depthlab::maskgen::MaskConfig;
use depthlab::scenegen::{generate_sample, SceneSpec};

fn main() -> depthlab::Result<()> {
    let spec = SceneSpec::new(37, 32, 32, 6);
    let train: Vec<_> = (0..24).map(|i| generate_sample(&spec, i)).collect();
    let test: Vec<_> = (300..306).map(|i| generate_sample(&spec, i)).collect();

    let oracle = CoarseModel::DegradeOracle(DegradeParams {
        blur_sigma: 1.5,
        downscale_factor: 2,
        quantize_levels: 16,
        jitter: true,
        jitter_seed: 37,
        ..DegradeParams::neutral()
    });
    let cfg = RefinerTrainConfig {
        iterations: 300,
        batch_size: 8,
        lr: 1e-3,
        seed: 37,
        variant: Variant::Full,
        base_channels: 8,
        levels: 2,
        groups: 4,
        temb_dim: 32,
        schedule: make_schedule(ScheduleKind::ScaledLinear, 1000, 0.00085, 0.012)?,
        mask: MaskConfig::new(8, 0.1, 1)?,
        codec_factor: 1,
        lo_pct: 2.0,
        hi_pct: 98.0,
    };
    let (model, _) = train_refiner(&train, &oracle, &cfg)?;

    // Ten independent refinements per image, no ensembling: the spread of
    // the per-repeat dataset metrics quantifies sampling stability.
    let result = error_bars(&model, &oracle, &test, 10, 20, 123)?;
    for p in &result.points {
        println!(
            "{}: absrel {:.4}, delta1 {:.4}",
            p.label, p.mean_absrel, p.mean_delta1
        );
    }
    let (ma, sa, md, sd) = result.summary();
    println!("mean absrel {ma:.4} +- {sa:.4}, mean delta1 {md:.4} +- {sd:.4}");
    Ok(())
}
