//! Train the image-to-depth regressor on a handful of scenes.
//!
//! ```bash
//! cargo run --example train_tiny_regressor
//! ```

use depthlab::coarse::{predict_coarse, train_tiny_regressor, RegressorConfig};
use depthlab::eval::compute_metrics;
use depthlab::scenegen::{generate_sample, SceneSpec};

fn main() -> depthlab::Result<()> {
    let spec = SceneSpec::new(3, 32, 32, 6);
    let train: Vec<_> = (0..24).map(|i| generate_sample(&spec, i)).collect();
    let held_out = generate_sample(&spec, 1000);

    let cfg = RegressorConfig {
        base_channels: 6,
        levels: 2,
        groups: 2,
        lr: 2e-3,
        batch_size: 6,
        iterations: 400,
        seed: 3,
        lo_pct: 2.0,
        hi_pct: 98.0,
    };
    let (model, log) = train_tiny_regressor(&train, &cfg)?;
    println!(
        "trained {} for {} iterations: ssi loss {:.4} -> {:.4}",
        model.id(),
        log.len(),
        log.first().map(|r| r.1).unwrap_or(f64::NAN),
        log.last().map(|r| r.1).unwrap_or(f64::NAN),
    );

    let pred = predict_coarse(&model, &held_out.image, None)?;
    let report = compute_metrics(&pred, &held_out.depth)?;
    println!(
        "held-out scene: absrel {:.4}, delta1 {:.4} after alignment",
        report.absrel, report.delta1
    );
    Ok(())
}
