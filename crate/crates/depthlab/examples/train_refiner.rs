//! Train a small diffusion refiner and checkpoint it.
//!
//! ```bash
//! cargo run --example train_refiner
//! ```

use depthlab::coarse::{CoarseModel, DegradeParams};
use depthlab::diffusion::{
    make_schedule, train_refiner, RefinerModel, RefinerTrainConfig, ScheduleKind, Variant,
};
use depthlab::maskgen::MaskConfig;
use depthlab::scenegen::{generate_sample, SceneSpec};

fn main() -> depthlab::Result<()> {
    let spec = SceneSpec::new(11, 32, 32, 6);
    let train: Vec<_> = (0..32).map(|i| generate_sample(&spec, i)).collect();

    let oracle = CoarseModel::DegradeOracle(DegradeParams {
        blur_sigma: 1.5,
        downscale_factor: 2,
        quantize_levels: 16,
        jitter: true,
        jitter_seed: 11,
        ..DegradeParams::neutral()
    });

    let cfg = RefinerTrainConfig {
        iterations: 300,
        batch_size: 8,
        lr: 1e-3,
        seed: 11,
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
    let (model, log) = train_refiner(&train, &oracle, &cfg)?;
    let first = log.rows.first().map(|r| r.1).unwrap_or(f64::NAN);
    let last = log.rows.last().map(|r| r.1).unwrap_or(f64::NAN);
    println!(
        "variant {} trained {} iterations ({} samples skipped): loss {first:.4} -> {last:.4}",
        model.variant.name(),
        model.meta.iterations,
        model.meta.skipped
    );

    let path = std::env::temp_dir().join("depthlab_example_refiner.ckpt");
    model.checkpoint("example=train_refiner\n").save(&path)?;
    println!("checkpoint: {}", path.display());

    // Round trip: the reloaded model is the same model.
    let reloaded = RefinerModel::from_checkpoint(&depthlab::checkpoint::Checkpoint::load(&path)?)?;
    println!(
        "reloaded checkpoint: variant {}, {} parameters",
        reloaded.variant.name(),
        reloaded.net.param_count()
    );
    Ok(())
}
