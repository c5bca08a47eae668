//! Exercise the degradation oracle and the scale/shift-invariant loss.
//!
//! ```bash
//! cargo run --example coarse_conditioning
//! ```

use depthlab::coarse::{predict_coarse, ssi_loss, CoarseModel, DegradeParams};
use depthlab::eval::compute_metrics;
use depthlab::raster::normalize_depth;
use depthlab::scenegen::{generate_sample, SceneSpec};

fn main() -> depthlab::Result<()> {
    let spec = SceneSpec::new(13, 64, 64, 8);
    let sample = generate_sample(&spec, 0);
    let (label, _) = normalize_depth(&sample.depth, 2.0, 98.0)?;

    // Identity degradation reproduces the label exactly.
    let neutral = CoarseModel::DegradeOracle(DegradeParams::neutral());
    let pred = predict_coarse(&neutral, &sample.image, Some(&label))?;
    println!("neutral oracle ssi loss: {:.2e}", ssi_loss(&pred, &label)?);

    // A realistic oracle: downscale, blur, quantize, random affine.
    let rough = CoarseModel::DegradeOracle(DegradeParams {
        blur_sigma: 1.5,
        downscale_factor: 2,
        quantize_levels: 16,
        jitter: true,
        jitter_seed: 7,
        ..DegradeParams::neutral()
    });
    let pred = predict_coarse(&rough, &sample.image, Some(&label))?;
    println!("rough oracle   ssi loss: {:.4}", ssi_loss(&pred, &label)?);

    // The affine jitter is absorbed by alignment: metrics stay meaningful.
    let report = compute_metrics(&pred, &sample.depth)?;
    println!(
        "rough oracle vs metric gt: absrel {:.4}, delta1 {:.4} (fitted scale {:.3})",
        report.absrel, report.delta1, report.fit.scale
    );

    // SSI loss ignores any affine remap of the prediction.
    let remapped: Vec<f32> = pred.values().iter().map(|&v| 3.0 * v - 1.0).collect();
    let remapped = pred.with_values(remapped, depthlab::DepthUnits::Inverse)?;
    let a = ssi_loss(&pred, &label)?;
    let b = ssi_loss(&remapped, &label)?;
    println!("ssi loss under affine remap: {a:.6} vs {b:.6}");
    Ok(())
}
