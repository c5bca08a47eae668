use depthlab::checkpoint::Checkpoint;
use depthlab::coarse::regressor_from_checkpoint;
use depthlab::diffusion::RefinerModel;
use depthlab::eval::*;
use depthlab::scenegen::read_manifest;
use std::path::Path;

fn main() -> depthlab::Result<()> {
    let test = read_manifest(Path::new("/tmp/dev/test/manifest.txt"))?.load_all()?;
    let reg = regressor_from_checkpoint(&Checkpoint::load(Path::new(
        "/tmp/dev/run-reg/checkpoints/coarse.ckpt"))?)?;
    let (ra, rd) = mean_metrics(&evaluate_coarse(&reg, &test)?);
    println!("regressor alone: absrel {ra:.4} delta1 {rd:.4}");

    let model = RefinerModel::from_checkpoint(&Checkpoint::load(Path::new(
        "/tmp/dev/run-full/checkpoints/refiner-full.ckpt"))?)?;
    for ens in [1usize, 5] {
        let protocol = EvalProtocol { steps: 50, ensemble: ens, seed: 7 };
        let reports = evaluate_split(&model, &reg, &test, &protocol)?;
        let (fa, fd) = mean_metrics(&reports);
        println!("refined with regressor (ens={ens}): absrel {fa:.4} delta1 {fd:.4}");
    }
    Ok(())
}
