//! The `depthlab` command-line interface.
//!
//! One executable, eight subcommands: `generate`, `train-coarse`,
//! `train-refiner`, `infer`, `eval`, `sweep`, `error-bars`, `report`.
//! Configuration comes from defaults, then an optional `--config` key=value
//! file, then the `DEPTHLAB_SEED` environment variable (seed only), then
//! explicit flags — later layers win. Every artifact-producing command
//! echoes its effective configuration into `config.txt` in the run
//! directory, and all artifacts land in a fixed layout:
//!
//! ```text
//! <out>/
//!   config.txt      effective RunConfig echo
//!   checkpoints/    model containers
//!   logs/           training CSVs (timing columns; not byte-reproducible)
//!   preds/          PFM rasters from inference
//!   reports/        metric CSVs and PGM strips
//! ```
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::coarse::{
    regressor_checkpoint, regressor_from_checkpoint, train_tiny_regressor, CoarseModel,
    DegradeParams, RegressorConfig,
};
use crate::config::RunConfig;
use crate::diffusion::{
    make_schedule, refine_depth, train_refiner, RefinerModel, RefinerTrainConfig, ScheduleKind,
    Variant,
};
use crate::error::{Error, Result};
use crate::eval::{
    compute_metrics, ensemble_refine, error_bars, evaluate_split, mean_metrics, run_ablation,
    run_sweep, EvalProtocol, SweepAxis, SweepContext, SweepResult,
};
use crate::maskgen::{MaskConfig, PoolMode};
use crate::pfm;
use crate::raster::DepthUnits;
use crate::scenegen::{generate_split, read_manifest, Camera, PrimitiveKind, SceneSpec};

const AFTER_HELP: &str = "Desk-scale defaults are tuned for CPU runs (64x64 scenes, batch 8, \
2000 iterations, lr 1e-3). Reference-protocol values for comparison: batch size 32, 5000 \
iterations, learning rate 3e-5, 50-step DDIM sampling, 10 test-time ensemble members, patch \
size 8, masking threshold 0.1.";

#[derive(Parser)]
#[command(
    name = "depthlab",
    about = "Depth-conditioned diffusion refinement on procedural scenes",
    after_help = AFTER_HELP,
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Key=value config file applied over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file and DEPTHLAB_SEED).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a split of procedural (image, depth) PFM pairs plus a manifest.
    Generate {
        #[command(flatten)]
        common: CommonOpts,
        /// Number of samples to render.
        #[arg(long)]
        count: usize,
        /// Square raster size in pixels.
        #[arg(long)]
        size: Option<usize>,
        /// Primitives per scene.
        #[arg(long)]
        prims: Option<usize>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train the tiny coarse regressor on a split.
    TrainCoarse {
        #[command(flatten)]
        common: CommonOpts,
        /// Training manifest path.
        #[arg(long)]
        data: PathBuf,
        /// Run directory for checkpoint, log, and config echo.
        #[arg(long)]
        out: PathBuf,
        /// Training iterations.
        #[arg(long)]
        iters: Option<usize>,
        /// Adam learning rate.
        #[arg(long)]
        lr: Option<f64>,
        /// Batch size.
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Train the diffusion refiner on a split.
    TrainRefiner {
        #[command(flatten)]
        common: CommonOpts,
        /// Training manifest path.
        #[arg(long)]
        data: PathBuf,
        /// Run directory for checkpoint, log, and config echo.
        #[arg(long)]
        out: PathBuf,
        /// Ablation variant: full, no-cond, no-align, no-mask.
        #[arg(long)]
        variant: Option<String>,
        /// Training iterations.
        #[arg(long)]
        iters: Option<usize>,
        /// Adam learning rate.
        #[arg(long)]
        lr: Option<f64>,
        /// Batch size.
        #[arg(long)]
        batch: Option<usize>,
        /// Mask patch size.
        #[arg(long)]
        patch_size: Option<usize>,
        /// Mask threshold.
        #[arg(long)]
        threshold: Option<f64>,
        /// Coarse model: "oracle" or "regressor:PATH".
        #[arg(long, default_value = "oracle")]
        coarse: String,
    },
    /// Refine one image with a trained checkpoint.
    Infer {
        #[command(flatten)]
        common: CommonOpts,
        /// Refiner checkpoint path.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input image PFM.
        #[arg(long)]
        image: PathBuf,
        /// Ground-truth depth PFM (required by the oracle coarse model).
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Coarse model: "oracle" or "regressor:PATH".
        #[arg(long, default_value = "oracle")]
        coarse: String,
        /// DDIM steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Ensemble members.
        #[arg(long)]
        ensemble: Option<usize>,
        /// Run directory for predictions.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions: a PFM pair, a checkpoint over a split, or an
    /// ablation table over several checkpoints.
    Eval {
        #[command(flatten)]
        common: CommonOpts,
        /// Prediction PFM (pair mode).
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Ground-truth PFM (pair mode).
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Test manifest (split / ablation mode).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Refiner checkpoint (split mode).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Ablation table: comma-separated label=checkpoint pairs.
        #[arg(long)]
        variants: Option<String>,
        /// Coarse model: "oracle" or "regressor:PATH".
        #[arg(long, default_value = "oracle")]
        coarse: String,
        /// DDIM steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Ensemble members.
        #[arg(long)]
        ensemble: Option<usize>,
        /// Run directory for reports (split / ablation mode).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep a hyperparameter axis and write a CSV of metrics.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Axis: patch-size, threshold, ensemble, ddim-steps.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        /// Training manifest (patch-size / threshold axes).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Test manifest.
        #[arg(long)]
        test: PathBuf,
        /// Refiner checkpoint (ensemble / ddim-steps axes).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Coarse model: "oracle" or "regressor:PATH".
        #[arg(long, default_value = "oracle")]
        coarse: String,
        /// Training iterations per swept value.
        #[arg(long)]
        iters: Option<usize>,
        /// DDIM steps for evaluation.
        #[arg(long)]
        steps: Option<usize>,
        /// Run directory for reports.
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated single-inference stability protocol.
    ErrorBars {
        #[command(flatten)]
        common: CommonOpts,
        /// Refiner checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Test manifest.
        #[arg(long)]
        data: PathBuf,
        /// Independent repeats per image.
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        /// DDIM steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Coarse model: "oracle" or "regressor:PATH".
        #[arg(long, default_value = "oracle")]
        coarse: String,
        /// Run directory for reports.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a run directory's CSVs as text tables and its predictions as
    /// PGM strips.
    Report {
        /// Run directory to render.
        #[arg(long)]
        run: PathBuf,
    },
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Range(_) => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Generate { common, count, size, prims, out, force } => {
            cmd_generate(&common, count, size, prims, &out, force)
        }
        Command::TrainCoarse { common, data, out, iters, lr, batch } => {
            cmd_train_coarse(&common, &data, &out, iters, lr, batch)
        }
        Command::TrainRefiner {
            common, data, out, variant, iters, lr, batch, patch_size, threshold, coarse,
        } => cmd_train_refiner(
            &common, &data, &out, variant, iters, lr, batch, patch_size, threshold, &coarse,
        ),
        Command::Infer { common, checkpoint, image, gt, coarse, steps, ensemble, out } => {
            cmd_infer(&common, &checkpoint, &image, gt.as_deref(), &coarse, steps, ensemble, &out)
        }
        Command::Eval { common, pred, gt, data, checkpoint, variants, coarse, steps, ensemble, out } => {
            cmd_eval(
                &common, pred.as_deref(), gt.as_deref(), data.as_deref(), checkpoint.as_deref(),
                variants.as_deref(), &coarse, steps, ensemble, out.as_deref(),
            )
        }
        Command::Sweep { common, axis, values, data, test, checkpoint, coarse, iters, steps, out } => {
            cmd_sweep(
                &common, &axis, &values, data.as_deref(), &test, checkpoint.as_deref(), &coarse,
                iters, steps, &out,
            )
        }
        Command::ErrorBars { common, checkpoint, data, repeats, steps, coarse, out } => {
            cmd_error_bars(&common, &checkpoint, &data, repeats, steps, &coarse, &out)
        }
        Command::Report { run } => cmd_report(&run),
    }
}

// ---------------------------------------------------------------------------
// Config assembly and run-dir plumbing
// ---------------------------------------------------------------------------

/// defaults < config file < DEPTHLAB_SEED < --seed.
fn load_config(common: &CommonOpts) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Ok(env_seed) = std::env::var("DEPTHLAB_SEED") {
        cfg.seed = env_seed
            .parse()
            .map_err(|e| Error::Config(format!("DEPTHLAB_SEED: {e}")))?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn scene_spec(cfg: &RunConfig) -> Result<SceneSpec> {
    let mut kinds = Vec::new();
    for part in cfg.kinds.split(',') {
        let part = part.trim();
        if !part.is_empty() {
            kinds.push(PrimitiveKind::parse(part)?);
        }
    }
    kinds.sort();
    kinds.dedup();
    if kinds.is_empty() {
        return Err(Error::Config("kinds must name at least one primitive".into()));
    }
    Ok(SceneSpec {
        seed: cfg.seed,
        height: cfg.height,
        width: cfg.width,
        n_primitives: cfg.n_primitives,
        kinds,
        camera: Camera {
            focal_px: cfg.effective_focal(),
            cx: cfg.width as f64 / 2.0,
            cy: cfg.height as f64 / 2.0,
        },
    })
}

fn run_dir(out: &Path) -> Result<()> {
    for sub in ["checkpoints", "logs", "preds", "reports"] {
        let p = out.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(p.display().to_string(), e))?;
    }
    Ok(())
}

fn write_config_echo(out: &Path, cfg: &RunConfig) -> Result<()> {
    let path = out.join("config.txt");
    std::fs::write(&path, cfg.to_text()).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn degrade_from_config(cfg: &RunConfig) -> DegradeParams {
    DegradeParams {
        blur_sigma: cfg.degrade_blur_sigma,
        downscale_factor: cfg.degrade_downscale,
        affine_scale: cfg.degrade_scale,
        affine_shift: cfg.degrade_shift,
        quantize_levels: cfg.degrade_quantize,
        jitter: cfg.degrade_jitter,
        jitter_seed: cfg.seed,
    }
}

/// `"oracle"` or `"regressor:PATH"`.
fn load_coarse(spec: &str, cfg: &RunConfig) -> Result<CoarseModel> {
    if spec == "oracle" {
        return Ok(CoarseModel::DegradeOracle(degrade_from_config(cfg)));
    }
    if let Some(path) = spec.strip_prefix("regressor:") {
        let ckpt = Checkpoint::load(Path::new(path))?;
        return regressor_from_checkpoint(&ckpt);
    }
    Err(Error::Config(format!(
        "coarse model {spec:?} (expected \"oracle\" or \"regressor:PATH\")"
    )))
}

fn refiner_train_config(cfg: &RunConfig, variant: Variant) -> Result<RefinerTrainConfig> {
    let schedule = make_schedule(
        ScheduleKind::parse(&cfg.schedule)?,
        cfg.timesteps,
        cfg.beta_start,
        cfg.beta_end,
    )?;
    let mut mask = MaskConfig::new(cfg.patch_size, cfg.threshold, cfg.codec_factor)?;
    mask.pool = PoolMode::parse(&cfg.latent_pool)?;
    Ok(RefinerTrainConfig {
        iterations: cfg.iterations,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        seed: cfg.seed,
        variant,
        base_channels: cfg.base_channels,
        levels: cfg.levels,
        groups: cfg.groups,
        temb_dim: cfg.temb_dim,
        schedule,
        mask,
        codec_factor: cfg.codec_factor,
        lo_pct: cfg.lo_pct,
        hi_pct: cfg.hi_pct,
    })
}

fn train_log_csv(rows: &[(usize, f64, f64)]) -> String {
    let mut out = String::from("iteration,loss,wall_time_s\n");
    for (iter, loss, wall) in rows {
        writeln!(out, "{iter},{loss:.9},{wall:.3}").expect("string write");
    }
    out
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_generate(
    common: &CommonOpts,
    count: usize,
    size: Option<usize>,
    prims: Option<usize>,
    out: &Path,
    force: bool,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(s) = size {
        cfg.height = s;
        cfg.width = s;
    }
    if let Some(p) = prims {
        cfg.n_primitives = p;
    }
    if count == 0 {
        return Err(Error::Config("--count must be >= 1".into()));
    }
    let spec = scene_spec(&cfg)?;
    let manifest = generate_split(&spec, count, out, force)?;
    write_config_echo(out, &cfg)?;
    println!(
        "generated {} samples ({}x{}) into {}",
        manifest.len(),
        cfg.height,
        cfg.width,
        out.display()
    );
    Ok(())
}

fn cmd_train_coarse(
    common: &CommonOpts,
    data: &Path,
    out: &Path,
    iters: Option<usize>,
    lr: Option<f64>,
    batch: Option<usize>,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(v) = iters {
        cfg.reg_iterations = v;
    }
    if let Some(v) = lr {
        cfg.reg_lr = v;
    }
    if let Some(v) = batch {
        cfg.reg_batch_size = v;
    }
    let manifest = read_manifest(data)?;
    let samples = manifest.load_all()?;
    let reg_cfg = RegressorConfig {
        base_channels: cfg.reg_base_channels,
        levels: cfg.reg_levels,
        groups: cfg.reg_groups,
        lr: cfg.reg_lr,
        batch_size: cfg.reg_batch_size,
        iterations: cfg.reg_iterations,
        seed: cfg.seed,
        lo_pct: cfg.lo_pct,
        hi_pct: cfg.hi_pct,
    };
    let (model, log) = train_tiny_regressor(&samples, &reg_cfg)?;
    run_dir(out)?;
    write_config_echo(out, &cfg)?;
    regressor_checkpoint(&model, &cfg.to_text())?.save(&out.join("checkpoints/coarse.ckpt"))?;
    let rows: Vec<(usize, f64, f64)> = log.iter().map(|&(i, l)| (i, l, 0.0)).collect();
    write_text(&out.join("logs/train_coarse.csv"), &train_log_csv(&rows))?;
    if let Some((_, loss)) = log.last() {
        println!("trained coarse regressor: final ssi loss {loss:.6}");
    } else {
        println!("trained coarse regressor: 0 iterations (initialization saved)");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train_refiner(
    common: &CommonOpts,
    data: &Path,
    out: &Path,
    variant: Option<String>,
    iters: Option<usize>,
    lr: Option<f64>,
    batch: Option<usize>,
    patch_size: Option<usize>,
    threshold: Option<f64>,
    coarse_spec: &str,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(v) = variant {
        cfg.variant = v;
    }
    if let Some(v) = iters {
        cfg.iterations = v;
    }
    if let Some(v) = lr {
        cfg.lr = v;
    }
    if let Some(v) = batch {
        cfg.batch_size = v;
    }
    if let Some(v) = patch_size {
        cfg.patch_size = v;
    }
    if let Some(v) = threshold {
        cfg.threshold = v;
    }
    let variant = Variant::parse(&cfg.variant)?;
    let manifest = read_manifest(data)?;
    let samples = manifest.load_all()?;
    let coarse = load_coarse(coarse_spec, &cfg)?;
    let train_cfg = refiner_train_config(&cfg, variant)?;
    let (model, log) = train_refiner(&samples, &coarse, &train_cfg)?;

    run_dir(out)?;
    write_config_echo(out, &cfg)?;
    let ckpt_path = out.join(format!("checkpoints/refiner-{}.ckpt", variant.name()));
    model.checkpoint(&cfg.to_text()).save(&ckpt_path)?;
    write_text(
        &out.join(format!("logs/train_refiner_{}.csv", variant.name())),
        &train_log_csv(&log.rows),
    )?;
    let final_loss = log.rows.last().map(|r| r.1).unwrap_or(f64::NAN);
    println!(
        "trained refiner variant {} ({} iterations, {} skipped samples, final loss {final_loss:.6}) -> {}",
        variant.name(),
        model.meta.iterations,
        log.skipped_samples,
        ckpt_path.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_infer(
    common: &CommonOpts,
    checkpoint: &Path,
    image: &Path,
    gt: Option<&Path>,
    coarse_spec: &str,
    steps: Option<usize>,
    ensemble: Option<usize>,
    out: &Path,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(v) = steps {
        cfg.ddim_steps = v;
    }
    if let Some(v) = ensemble {
        cfg.ensemble = v;
    }
    let model = RefinerModel::from_checkpoint(&Checkpoint::load(checkpoint)?)?;
    let coarse = load_coarse(coarse_spec, &cfg)?;
    let x = pfm::read_image_pfm(image)?;
    let gt_map = match gt {
        Some(p) => Some(pfm::read_depth_pfm(p, DepthUnits::Metric)?),
        None => None,
    };

    let refined = if cfg.ensemble > 1 {
        ensemble_refine(&model, &coarse, &x, gt_map.as_ref(), cfg.ensemble, cfg.ddim_steps, cfg.seed)?
    } else {
        refine_depth(&model, &coarse, &x, gt_map.as_ref(), cfg.ddim_steps, cfg.seed)?
    };
    let coarse_pred = crate::coarse::predict_coarse(&coarse, &x, gt_map.as_ref())?;

    run_dir(out)?;
    write_config_echo(out, &cfg)?;
    let stem = image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sample".to_string());
    let preds = out.join("preds");
    pfm::write_image_pfm(&preds.join(format!("{stem}.input.pfm")), &x)?;
    pfm::write_depth_pfm(&preds.join(format!("{stem}.coarse.pfm")), &coarse_pred)?;
    pfm::write_depth_pfm(&preds.join(format!("{stem}.refined.pfm")), &refined)?;
    if let Some(g) = &gt_map {
        pfm::write_depth_pfm(&preds.join(format!("{stem}.gt.pfm")), g)?;
    }
    println!(
        "refined {} with {} steps, ensemble {} -> {}",
        image.display(),
        cfg.ddim_steps,
        cfg.ensemble,
        preds.join(format!("{stem}.refined.pfm")).display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    common: &CommonOpts,
    pred: Option<&Path>,
    gt: Option<&Path>,
    data: Option<&Path>,
    checkpoint: Option<&Path>,
    variants: Option<&str>,
    coarse_spec: &str,
    steps: Option<usize>,
    ensemble: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(v) = steps {
        cfg.ddim_steps = v;
    }
    if let Some(v) = ensemble {
        cfg.ensemble = v;
    }

    // Pair mode.
    if let (Some(pred), Some(gt)) = (pred, gt) {
        let p = pfm::read_depth_pfm(pred, DepthUnits::Inverse)?;
        let g = pfm::read_depth_pfm(gt, DepthUnits::Metric)?;
        let r = compute_metrics(&p, &g)?;
        println!(
            "absrel {:.6} delta1 {:.6} (n={}, scale {:.6}, shift {:.6})",
            r.absrel, r.delta1, r.n_pixels, r.fit.scale, r.fit.shift
        );
        return Ok(());
    }

    let data = data.ok_or_else(|| {
        Error::Config("eval needs either --pred/--gt or --data with a checkpoint".into())
    })?;
    let samples = read_manifest(data)?.load_all()?;
    let coarse = load_coarse(coarse_spec, &cfg)?;
    let protocol = EvalProtocol {
        steps: cfg.ddim_steps,
        ensemble: cfg.ensemble,
        seed: cfg.seed,
    };

    // Ablation mode.
    if let Some(spec) = variants {
        let mut table = Vec::new();
        for part in spec.split(',') {
            let (label, path) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("variant entry {part:?} is not label=path")))?;
            table.push((label.trim().to_string(), PathBuf::from(path.trim())));
        }
        let result = run_ablation(&table, &coarse, &samples, &protocol)?;
        print_sweep_table(&result);
        if let Some(out) = out {
            run_dir(out)?;
            write_config_echo(out, &cfg)?;
            write_text(&out.join("reports/ablation.csv"), &result.to_csv(&cfg.to_text()))?;
        }
        return Ok(());
    }

    // Split mode.
    let checkpoint =
        checkpoint.ok_or_else(|| Error::Config("split eval needs --checkpoint".into()))?;
    if !checkpoint.exists() {
        return Err(Error::MissingCheckpoint(checkpoint.display().to_string()));
    }
    let model = RefinerModel::from_checkpoint(&Checkpoint::load(checkpoint)?)?;
    let started = std::time::Instant::now();
    let reports = evaluate_split(&model, &coarse, &samples, &protocol)?;
    let elapsed = started.elapsed().as_secs_f64();
    let (absrel, delta1) = mean_metrics(&reports);
    println!(
        "split {}: mean absrel {:.6}, mean delta1 {:.6} over {} samples",
        data.display(),
        absrel,
        delta1,
        reports.len()
    );
    if let Some(out) = out {
        run_dir(out)?;
        write_config_echo(out, &cfg)?;
        let result = SweepResult {
            axis: "eval".to_string(),
            points: vec![crate::eval::SweepPoint::from_reports(
                0.0,
                "eval".to_string(),
                reports,
                elapsed,
            )],
        };
        write_text(&out.join("reports/eval.csv"), &result.to_csv(&cfg.to_text()))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    common: &CommonOpts,
    axis: &str,
    values: &str,
    data: Option<&Path>,
    test: &Path,
    checkpoint: Option<&Path>,
    coarse_spec: &str,
    iters: Option<usize>,
    steps: Option<usize>,
    out: &Path,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(v) = iters {
        cfg.iterations = v;
    }
    if let Some(v) = steps {
        cfg.ddim_steps = v;
    }
    let axis = SweepAxis::parse(axis)?;
    let values: Vec<f64> = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("sweep value {v:?}: {e}")))
        })
        .collect::<Result<_>>()?;

    let test_samples = read_manifest(test)?.load_all()?;
    let train_samples = match data {
        Some(p) => read_manifest(p)?.load_all()?,
        None => Vec::new(),
    };
    let coarse = load_coarse(coarse_spec, &cfg)?;
    let model = match checkpoint {
        Some(p) => {
            if !p.exists() {
                return Err(Error::MissingCheckpoint(p.display().to_string()));
            }
            Some(RefinerModel::from_checkpoint(&Checkpoint::load(p)?)?)
        }
        None => None,
    };
    if axis.retrains() && data.is_none() {
        return Err(Error::Config(format!("axis {} needs --data to train", axis.name())));
    }
    if !axis.retrains() && model.is_none() {
        return Err(Error::Config(format!("axis {} needs --checkpoint", axis.name())));
    }

    run_dir(out)?;
    write_config_echo(out, &cfg)?;
    let ctx = SweepContext {
        train_samples: &train_samples,
        test_samples: &test_samples,
        coarse: &coarse,
        base_train: if axis.retrains() {
            Some(refiner_train_config(&cfg, Variant::parse(&cfg.variant)?)?)
        } else {
            None
        },
        model: model.as_ref(),
        protocol: EvalProtocol {
            steps: cfg.ddim_steps,
            ensemble: 1,
            seed: cfg.seed,
        },
        dump_dir: Some(out.join("reports")),
    };
    let result = run_sweep(axis, &values, &ctx)?;
    print_sweep_table(&result);
    write_text(
        &out.join(format!("reports/sweep_{}.csv", axis.name())),
        &result.to_csv(&cfg.to_text()),
    )?;
    Ok(())
}

fn cmd_error_bars(
    common: &CommonOpts,
    checkpoint: &Path,
    data: &Path,
    repeats: usize,
    steps: Option<usize>,
    coarse_spec: &str,
    out: &Path,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(v) = steps {
        cfg.ddim_steps = v;
    }
    if !checkpoint.exists() {
        return Err(Error::MissingCheckpoint(checkpoint.display().to_string()));
    }
    let model = RefinerModel::from_checkpoint(&Checkpoint::load(checkpoint)?)?;
    let samples = read_manifest(data)?.load_all()?;
    let coarse = load_coarse(coarse_spec, &cfg)?;
    let result = error_bars(&model, &coarse, &samples, repeats, cfg.ddim_steps, cfg.seed)?;
    let (ma, sa, md, sd) = result.summary();
    println!(
        "{repeats} repeats over {} samples: absrel {ma:.6} +- {sa:.6}, delta1 {md:.6} +- {sd:.6}",
        samples.len()
    );
    run_dir(out)?;
    write_config_echo(out, &cfg)?;
    write_text(&out.join("reports/error_bars.csv"), &result.to_csv(&cfg.to_text()))?;
    Ok(())
}

fn print_sweep_table(result: &SweepResult) {
    println!("{:<12} {:<10} {:>12} {:>12}", result.axis, "label", "absrel", "delta1");
    for p in &result.points {
        println!(
            "{:<12} {:<10} {:>12.6} {:>12.6}",
            p.value, p.label, p.mean_absrel, p.mean_delta1
        );
    }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn render_csv_table(name: &str, text: &str) -> String {
    let mut out = String::new();
    writeln!(out, "== {name} ==").expect("string write");
    let rows: Vec<Vec<String>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split(',').map(|c| c.trim().to_string()).collect())
        .collect();
    if rows.is_empty() {
        writeln!(out, "(empty)").expect("string write");
        return out;
    }
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; cols];
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    for row in &rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            let _ = write!(line, "{:<width$}  ", cell, width = widths[i]);
        }
        writeln!(out, "{}", line.trim_end()).expect("string write");
    }
    out
}

fn cmd_report(run: &Path) -> Result<()> {
    let reports_dir = run.join("reports");
    let preds_dir = run.join("preds");
    let mut rendered = String::new();
    let mut any = false;

    if reports_dir.is_dir() {
        let mut csvs: Vec<PathBuf> = std::fs::read_dir(&reports_dir)
            .map_err(|e| Error::io(reports_dir.display().to_string(), e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        csvs.sort();
        for csv in csvs {
            let text = std::fs::read_to_string(&csv)
                .map_err(|e| Error::io(csv.display().to_string(), e))?;
            let name = csv.file_name().unwrap_or_default().to_string_lossy().into_owned();
            rendered.push_str(&render_csv_table(&name, &text));
            rendered.push('\n');
            any = true;
        }
    }

    // PGM strips: group preds by stem, panels in pipeline order.
    if preds_dir.is_dir() {
        let mut stems: Vec<String> = std::fs::read_dir(&preds_dir)
            .map_err(|e| Error::io(preds_dir.display().to_string(), e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter_map(|n| n.strip_suffix(".refined.pfm").map(str::to_string))
            .collect();
        stems.sort();
        for stem in stems {
            let mut panels: Vec<Vec<f32>> = Vec::new();
            let mut dims = None;
            for role in ["input", "coarse", "refined", "gt"] {
                let path = preds_dir.join(format!("{stem}.{role}.pfm"));
                if !path.exists() {
                    continue;
                }
                let values = if role == "input" {
                    let img = pfm::read_image_pfm(&path)?;
                    let gray = img.to_gray();
                    dims.get_or_insert((gray.height(), gray.width()));
                    gray.values().to_vec()
                } else {
                    let d = pfm::read_depth_pfm(&path, DepthUnits::Inverse)?;
                    dims.get_or_insert((d.height(), d.width()));
                    d.values().to_vec()
                };
                panels.push(values);
            }
            if let Some((h, w)) = dims {
                if panels.iter().all(|p| p.len() == h * w) && !panels.is_empty() {
                    let strip_w = w * panels.len();
                    let mut strip = vec![0u8; h * strip_w];
                    for (pi, panel) in panels.iter().enumerate() {
                        let q = pfm::quantize_for_pgm(panel);
                        for y in 0..h {
                            for x in 0..w {
                                strip[y * strip_w + pi * w + x] = q[y * w + x];
                            }
                        }
                    }
                    std::fs::create_dir_all(&reports_dir)
                        .map_err(|e| Error::io(reports_dir.display().to_string(), e))?;
                    pfm::write_pgm(&reports_dir.join(format!("{stem}.strip.pgm")), strip_w, h, &strip)?;
                    rendered.push_str(&format!("strip: reports/{stem}.strip.pgm\n"));
                    any = true;
                }
            }
        }
    }

    if !any {
        return Err(Error::io(
            run.display().to_string(),
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "run directory has no reports or predictions to render",
            ),
        ));
    }
    print!("{rendered}");
    write_text(&run.join("reports/summary.txt"), &rendered)?;
    Ok(())
}
