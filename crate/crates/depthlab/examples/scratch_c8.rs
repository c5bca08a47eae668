use depthlab::checkpoint::Checkpoint;
use depthlab::coarse::{CoarseModel, DegradeParams};
use depthlab::diffusion::RefinerModel;
use depthlab::eval::*;
use depthlab::scenegen::read_manifest;
use std::path::Path;

fn main() -> depthlab::Result<()> {
    let test = read_manifest(Path::new("/tmp/dev/test/manifest.txt"))?.load_all()?;
    let oracle = CoarseModel::DegradeOracle(DegradeParams {
        blur_sigma: 1.5, downscale_factor: 2, quantize_levels: 16,
        jitter: true, jitter_seed: 7, ..DegradeParams::neutral()
    });
    let coarse_reports = evaluate_coarse(&oracle, &test)?;
    let (ca, cd) = mean_metrics(&coarse_reports);
    println!("coarse: absrel {ca:.4} delta1 {cd:.4}");

    let model = RefinerModel::from_checkpoint(&Checkpoint::load(Path::new(
        "/tmp/dev/run-full/checkpoints/refiner-full.ckpt"))?)?;
    for ens in [1usize, 5] {
        let protocol = EvalProtocol { steps: 50, ensemble: ens, seed: 7 };
        let reports = evaluate_split(&model, &oracle, &test, &protocol)?;
        let (ra, rd) = mean_metrics(&reports);
        let ok = reports.iter().zip(&coarse_reports)
            .filter(|(r, c)| r.absrel <= 1.1 * c.absrel).count();
        println!("refined ens={ens}: absrel {ra:.4} delta1 {rd:.4}; ratio<=1.1 on {ok}/{} samples", reports.len());
    }
    Ok(())
}
