//! Sweep the masking threshold and watch the conditioning/detail trade-off.
//!
//! ```bash
//! cargo run --example sweep_threshold
//! ```

use depthlab::coarse::{CoarseModel, DegradeParams};
use depthlab::diffusion::{make_schedule, RefinerTrainConfig, ScheduleKind, Variant};
use depthlab::eval::{run_sweep, EvalProtocol, SweepAxis, SweepContext};
use depthlab::maskgen::MaskConfig;
use depthlab::scenegen::{generate_sample, SceneSpec};

fn main() -> depthlab::Result<()> {
    let spec = SceneSpec::new(29, 32, 32, 6);
    let train: Vec<_> = (0..24).map(|i| generate_sample(&spec, i)).collect();
    let test: Vec<_> = (400..408).map(|i| generate_sample(&spec, i)).collect();

    let oracle = CoarseModel::DegradeOracle(DegradeParams {
        blur_sigma: 1.5,
        downscale_factor: 2,
        quantize_levels: 16,
        jitter: true,
        jitter_seed: 29,
        ..DegradeParams::neutral()
    });
    let base_train = RefinerTrainConfig {
        iterations: 150,
        batch_size: 8,
        lr: 1e-3,
        seed: 29,
        variant: Variant::Full,
        base_channels: 6,
        levels: 2,
        groups: 2,
        temb_dim: 32,
        schedule: make_schedule(ScheduleKind::ScaledLinear, 500, 0.00085, 0.012)?,
        mask: MaskConfig::new(8, 0.1, 1)?,
        codec_factor: 1,
        lo_pct: 2.0,
        hi_pct: 98.0,
    };
    let ctx = SweepContext {
        train_samples: &train,
        test_samples: &test,
        coarse: &oracle,
        base_train: Some(base_train),
        model: None,
        protocol: EvalProtocol { steps: 20, ensemble: 1, seed: 71 },
        dump_dir: None,
    };

    // The grid walked in the threshold study.
    let result = run_sweep(SweepAxis::Threshold, &[0.05, 0.1, 0.15, 0.2, 0.3], &ctx)?;
    println!("{:>9} {:>10} {:>10}", "eta", "absrel", "delta1");
    for p in &result.points {
        println!("{:>9} {:>10.4} {:>10.4}", p.label, p.mean_absrel, p.mean_delta1);
    }
    Ok(())
}
