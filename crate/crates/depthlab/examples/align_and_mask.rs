//! Global pre-alignment and patch masking, step by step.
//!
//! ```bash
//! cargo run --example align_and_mask
//! ```

use depthlab::align::{fit_affine, prealign_conditioning};
use depthlab::coarse::{predict_coarse, CoarseModel, DegradeParams};
use depthlab::maskgen::{build_latent_mask, build_pixel_mask, MaskConfig};
use depthlab::raster::normalize_depth;
use depthlab::scenegen::{generate_sample, SceneSpec};

fn main() -> depthlab::Result<()> {
    let spec = SceneSpec::new(21, 64, 64, 8);
    let sample = generate_sample(&spec, 3);
    let (label, _) = normalize_depth(&sample.depth, 2.0, 98.0)?;

    // Conditioning with an unknown scale/shift and local detail loss.
    let oracle = CoarseModel::DegradeOracle(DegradeParams {
        blur_sigma: 2.0,
        downscale_factor: 2,
        jitter: true,
        jitter_seed: 5,
        ..DegradeParams::neutral()
    });
    let coarse = predict_coarse(&oracle, &sample.image, Some(&label))?;

    let fit = fit_affine(&coarse, &label)?;
    println!(
        "pre-alignment fit: scale {:.4}, shift {:.4}, residual rms {:.4} over {} px",
        fit.scale, fit.shift, fit.residual_rms, fit.n_valid
    );
    let aligned = prealign_conditioning(&coarse, &label)?;
    let refit = fit_affine(&aligned, &label)?;
    println!("after alignment: scale {:.6}, shift {:.6}", refit.scale, refit.shift);

    // Mask coverage as the tolerance loosens.
    for eta in [0.05, 0.1, 0.15, 0.2, 0.3] {
        let cfg = MaskConfig::new(8, eta, 1)?;
        let pixel = build_pixel_mask(&aligned, &label, &cfg)?;
        let latent = build_latent_mask(&aligned, &label, &cfg)?;
        println!(
            "eta {eta:<5}: pixel mask keeps {:5.1}%, latent mask keeps {:5.1}%",
            100.0 * pixel.mean(),
            100.0 * latent.mean()
        );
    }
    Ok(())
}
