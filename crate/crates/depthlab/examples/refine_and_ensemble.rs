//! End-to-end refinement with DDIM sampling and test-time ensembling.
//!
//! ```bash
//! cargo run --example refine_and_ensemble
//! ```

use depthlab::coarse::{predict_coarse, CoarseModel, DegradeParams};
use depthlab::diffusion::{
    make_schedule, refine_depth, train_refiner, RefinerTrainConfig, ScheduleKind, Variant,
};
use depthlab::eval::{compute_metrics, ensemble_refine};
use depthlab::maskgen::MaskConfig;
use depthlab::scenegen::{generate_sample, SceneSpec};

fn main() -> depthlab::Result<()> {
    let spec = SceneSpec::new(17, 32, 32, 6);
    let train: Vec<_> = (0..32).map(|i| generate_sample(&spec, i)).collect();
    let test = generate_sample(&spec, 500);

    let oracle = CoarseModel::DegradeOracle(DegradeParams {
        blur_sigma: 1.5,
        downscale_factor: 2,
        quantize_levels: 16,
        jitter: true,
        jitter_seed: 17,
        ..DegradeParams::neutral()
    });
    let cfg = RefinerTrainConfig {
        iterations: 400,
        batch_size: 8,
        lr: 1e-3,
        seed: 17,
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

    let coarse_pred = predict_coarse(&oracle, &test.image, Some(&test.depth))?;
    let coarse_report = compute_metrics(&coarse_pred, &test.depth)?;
    println!(
        "coarse conditioning: absrel {:.4}, delta1 {:.4}",
        coarse_report.absrel, coarse_report.delta1
    );

    // Single refinement at two step counts.
    for steps in [2usize, 50] {
        let refined = refine_depth(&model, &oracle, &test.image, Some(&test.depth), steps, 99)?;
        let report = compute_metrics(&refined, &test.depth)?;
        println!(
            "single refinement, {steps:>2} steps: absrel {:.4}, delta1 {:.4}",
            report.absrel, report.delta1
        );
    }

    // Ensembling: align members to the first, take the pixelwise median.
    let refined = ensemble_refine(&model, &oracle, &test.image, Some(&test.depth), 10, 50, 99)?;
    let report = compute_metrics(&refined, &test.depth)?;
    println!(
        "ensemble of 10, 50 steps: absrel {:.4}, delta1 {:.4}",
        report.absrel, report.delta1
    );
    Ok(())
}
