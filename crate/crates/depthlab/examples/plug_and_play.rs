//! Swap the coarse model at inference without retraining the refiner.
//!
//! The refiner below trains against the degradation oracle only, then runs
//! with the tiny regressor — a model family it never saw — as conditioning.
//!
//! ```bash
//! cargo run --example plug_and_play
//! ```

use depthlab::coarse::{
    train_tiny_regressor, CoarseModel, DegradeParams, RegressorConfig,
};
use depthlab::diffusion::{
    make_schedule, refine_depth, train_refiner, RefinerTrainConfig, ScheduleKind, Variant,
};
use depthlab::eval::{compute_metrics, evaluate_coarse, mean_metrics};
use depthlab::scenegen::{generate_sample, SceneSpec};

fn main() -> depthlab::Result<()> {
    let spec = SceneSpec::new(41, 32, 32, 6);
    let train: Vec<_> = (0..32).map(|i| generate_sample(&spec, i)).collect();
    let test: Vec<_> = (600..606).map(|i| generate_sample(&spec, i)).collect();

    let oracle = CoarseModel::DegradeOracle(DegradeParams {
        blur_sigma: 1.5,
        downscale_factor: 2,
        quantize_levels: 16,
        jitter: true,
        jitter_seed: 41,
        ..DegradeParams::neutral()
    });
    let cfg = RefinerTrainConfig {
        iterations: 400,
        batch_size: 8,
        lr: 1e-3,
        seed: 41,
        variant: Variant::Full,
        base_channels: 8,
        levels: 2,
        groups: 4,
        temb_dim: 32,
        schedule: make_schedule(ScheduleKind::ScaledLinear, 1000, 0.00085, 0.012)?,
        mask: depthlab::maskgen::MaskConfig::new(8, 0.1, 1)?,
        codec_factor: 1,
        lo_pct: 2.0,
        hi_pct: 98.0,
    };
    let (refiner, _) = train_refiner(&train, &oracle, &cfg)?;

    // An unseen conditioning model.
    let (regressor, _) = train_tiny_regressor(
        &train,
        &RegressorConfig {
            base_channels: 6,
            levels: 2,
            groups: 2,
            iterations: 500,
            seed: 42,
            ..RegressorConfig::default()
        },
    )?;
    println!("refiner trained with: {}", oracle.id());
    println!("plugged in at inference: {}", regressor.id());

    let (absrel, delta1) = mean_metrics(&evaluate_coarse(&regressor, &test)?);
    println!("regressor alone:   absrel {absrel:.4}, delta1 {delta1:.4}");

    let mut reports = Vec::new();
    for (i, s) in test.iter().enumerate() {
        let refined = refine_depth(&refiner, &regressor, &s.image, None, 20, 900 + i as u64)?;
        reports.push(compute_metrics(&refined, &s.depth)?);
    }
    let (absrel, delta1) = mean_metrics(&reports);
    println!("regressor refined: absrel {absrel:.4}, delta1 {delta1:.4}");
    Ok(())
}
