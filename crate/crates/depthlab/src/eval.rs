//! Affine-invariant evaluation, ensembling, and sweep harnesses.
//!
//! Predictions are compared to ground truth only up to an unknown global
//! scale and shift: [`compute_metrics`] least-squares-aligns the prediction
//! onto the reference, floors the aligned values at a small positive value,
//! and then reports AbsRel (mean absolute relative error) and delta1 (the
//! fraction of pixels with `max(a/d, d/a) < 1.25`, strict inequality).
//!
//! On top of that sit the protocol harnesses: test-time ensembling
//! (align-to-first + pixelwise median), ablation tables over trained
//! variants, hyperparameter sweeps, and the repeated-inference error-bar
//! protocol.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::align::{apply_affine, fit_affine, AffineFit};
use crate::checkpoint::Checkpoint;
use crate::coarse::CoarseModel;
use crate::diffusion::{refine_depth, train_refiner, RefinerModel, RefinerTrainConfig};
use crate::error::{Error, Result};
use crate::maskgen::MaskConfig;
use crate::pfm;
use crate::raster::{DepthMap, DepthUnits};
use crate::scenegen::SceneSample;

/// Smallest aligned value fed into ratio metrics.
pub const RATIO_FLOOR: f64 = 1e-6;

/// AbsRel / delta1 plus the alignment that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub absrel: f64,
    pub delta1: f64,
    pub n_pixels: usize,
    pub fit: AffineFit,
}

/// Ratio metrics of a map that is already in the reference frame.
///
/// `fit` is carried through for provenance only. Aligned values are floored
/// at [`RATIO_FLOOR`]; delta1 uses strict `< 1.25`.
pub fn metrics_of_aligned(aligned: &DepthMap, gt: &DepthMap, fit: AffineFit) -> Result<MetricReport> {
    if aligned.height() != gt.height() || aligned.width() != gt.width() {
        return Err(Error::Shape(format!(
            "metric shapes differ: {}x{} vs {}x{}",
            aligned.height(),
            aligned.width(),
            gt.height(),
            gt.width()
        )));
    }
    let mut n = 0usize;
    let mut absrel_sum = 0.0f64;
    let mut hits = 0usize;
    for i in 0..gt.height() * gt.width() {
        if aligned.validity()[i] == 0 || gt.validity()[i] == 0 {
            continue;
        }
        let d = gt.values()[i] as f64;
        if !(d > 0.0) {
            return Err(Error::Range(format!(
                "ground truth must be strictly positive on valid pixels, got {d}"
            )));
        }
        let a = (aligned.values()[i] as f64).max(RATIO_FLOOR);
        absrel_sum += (a - d).abs() / d;
        if (a / d).max(d / a) < 1.25 {
            hits += 1;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDepth);
    }
    Ok(MetricReport {
        absrel: absrel_sum / n as f64,
        delta1: hits as f64 / n as f64,
        n_pixels: n,
        fit,
    })
}

/// Aligns `pred` onto `gt` and computes AbsRel / delta1 over jointly valid
/// pixels.
pub fn compute_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<MetricReport> {
    let fit = fit_affine(pred, gt)?;
    let aligned = apply_affine(pred, &fit);
    metrics_of_aligned(&aligned, gt, fit)
}

/// Sample-weighted mean of (absrel, delta1) over reports.
pub fn mean_metrics(reports: &[MetricReport]) -> (f64, f64) {
    let n = reports.len().max(1) as f64;
    (
        reports.iter().map(|r| r.absrel).sum::<f64>() / n,
        reports.iter().map(|r| r.delta1).sum::<f64>() / n,
    )
}

fn std_dev(values: impl Iterator<Item = f64> + Clone, mean: f64) -> f64 {
    let n = values.clone().count();
    if n < 2 {
        return 0.0;
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    var.sqrt()
}

// ---------------------------------------------------------------------------
// Ensembling
// ---------------------------------------------------------------------------

/// Runs `n_members` independent refinements (seeds derived from `seed`),
/// aligns members 2..n onto member 1, and takes the pixelwise median.
pub fn ensemble_refine(
    model: &RefinerModel,
    coarse: &CoarseModel,
    x: &crate::raster::ImageMap,
    gt: Option<&DepthMap>,
    n_members: usize,
    steps: usize,
    seed: u64,
) -> Result<DepthMap> {
    if n_members == 0 {
        return Err(Error::Config("ensemble needs at least one member".into()));
    }
    let members: Vec<Result<DepthMap>> = (0..n_members as u64)
        .into_par_iter()
        .map(|m| refine_depth(model, coarse, x, gt, steps, seed.wrapping_add(m)))
        .collect();
    let mut maps = Vec::with_capacity(n_members);
    for m in members {
        maps.push(m?);
    }
    if n_members == 1 {
        return Ok(maps.pop().expect("one member"));
    }

    let anchor = maps[0].clone();
    let mut aligned: Vec<Vec<f32>> = Vec::with_capacity(n_members);
    aligned.push(anchor.values().to_vec());
    for member in maps.iter().skip(1) {
        let fit = fit_affine(member, &anchor)?;
        aligned.push(apply_affine(member, &fit).values().to_vec());
    }

    let n_px = anchor.height() * anchor.width();
    let mut out = Vec::with_capacity(n_px);
    let mut scratch = vec![0f32; n_members];
    for i in 0..n_px {
        for (m, vals) in aligned.iter().enumerate() {
            scratch[m] = vals[i];
        }
        scratch.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let median = if n_members % 2 == 1 {
            scratch[n_members / 2]
        } else {
            (scratch[n_members / 2 - 1] + scratch[n_members / 2]) / 2.0
        };
        out.push(median.clamp(-1.0, 1.0));
    }
    DepthMap::new(
        anchor.height(),
        anchor.width(),
        out,
        anchor.validity().to_vec(),
        DepthUnits::Normalized,
    )
}

// ---------------------------------------------------------------------------
// Split evaluation
// ---------------------------------------------------------------------------

/// Inference settings for evaluation harnesses.
#[derive(Debug, Clone, Copy)]
pub struct EvalProtocol {
    pub steps: usize,
    pub ensemble: usize,
    pub seed: u64,
}

/// Refines and scores every sample of a split; the ground truth is passed to
/// the coarse model (required by the degradation oracle).
pub fn evaluate_split(
    model: &RefinerModel,
    coarse: &CoarseModel,
    samples: &[SceneSample],
    protocol: &EvalProtocol,
) -> Result<Vec<MetricReport>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let seed = protocol.seed.wrapping_add((i as u64) << 20);
            let refined = if protocol.ensemble > 1 {
                ensemble_refine(
                    model,
                    coarse,
                    &s.image,
                    Some(&s.depth),
                    protocol.ensemble,
                    protocol.steps,
                    seed,
                )?
            } else {
                refine_depth(model, coarse, &s.image, Some(&s.depth), protocol.steps, seed)?
            };
            compute_metrics(&refined, &s.depth)
        })
        .collect()
}

/// Scores the coarse model alone (no refinement) on a split.
pub fn evaluate_coarse(coarse: &CoarseModel, samples: &[SceneSample]) -> Result<Vec<MetricReport>> {
    samples
        .par_iter()
        .map(|s| {
            let pred = crate::coarse::predict_coarse(coarse, &s.image, Some(&s.depth))?;
            compute_metrics(&pred, &s.depth)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Sweeps, ablations, error bars
// ---------------------------------------------------------------------------

/// One evaluated configuration within a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub label: String,
    pub per_sample: Vec<MetricReport>,
    pub mean_absrel: f64,
    pub mean_delta1: f64,
    pub std_absrel: f64,
    pub std_delta1: f64,
    pub runtime_s: f64,
}

impl SweepPoint {
    pub fn from_reports(value: f64, label: String, per_sample: Vec<MetricReport>, runtime_s: f64) -> Self {
        let (mean_absrel, mean_delta1) = mean_metrics(&per_sample);
        let std_absrel = std_dev(per_sample.iter().map(|r| r.absrel), mean_absrel);
        let std_delta1 = std_dev(per_sample.iter().map(|r| r.delta1), mean_delta1);
        SweepPoint {
            value,
            label,
            per_sample,
            mean_absrel,
            mean_delta1,
            std_absrel,
            std_delta1,
            runtime_s,
        }
    }
}

/// An axis of evaluated configurations plus per-point reports.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis: String,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// Mean and standard deviation of the per-point means, for error bars.
    pub fn summary(&self) -> (f64, f64, f64, f64) {
        let n = self.points.len().max(1) as f64;
        let ma = self.points.iter().map(|p| p.mean_absrel).sum::<f64>() / n;
        let md = self.points.iter().map(|p| p.mean_delta1).sum::<f64>() / n;
        let sa = std_dev(self.points.iter().map(|p| p.mean_absrel), ma);
        let sd = std_dev(self.points.iter().map(|p| p.mean_delta1), md);
        (ma, sa, md, sd)
    }

    /// CSV with `# `-prefixed config echo, a header row, and one row per
    /// (axis value, sample). The runtime column reports the wall time of the
    /// whole sweep point and is exempt from byte-reproducibility.
    pub fn to_csv(&self, config_echo: &str) -> String {
        let mut out = String::new();
        for line in config_echo.lines() {
            writeln!(out, "# {line}").expect("string write");
        }
        writeln!(out, "axis,value,label,sample,absrel,delta1,runtime_s").expect("string write");
        for p in &self.points {
            for (i, r) in p.per_sample.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{:.9},{:.9},{:.3}",
                    self.axis, p.value, p.label, i, r.absrel, r.delta1, p.runtime_s
                )
                .expect("string write");
            }
        }
        out
    }
}

/// Evaluates named variant checkpoints over a test split (ablation table).
pub fn run_ablation(
    variants: &[(String, PathBuf)],
    coarse: &CoarseModel,
    samples: &[SceneSample],
    protocol: &EvalProtocol,
) -> Result<SweepResult> {
    let mut points = Vec::with_capacity(variants.len());
    for (i, (label, path)) in variants.iter().enumerate() {
        if !path.exists() {
            return Err(Error::MissingCheckpoint(path.display().to_string()));
        }
        let model = RefinerModel::from_checkpoint(&Checkpoint::load(path)?)?;
        let started = Instant::now();
        let reports = evaluate_split(&model, coarse, samples, protocol)?;
        points.push(SweepPoint::from_reports(
            i as f64,
            label.clone(),
            reports,
            started.elapsed().as_secs_f64(),
        ));
    }
    Ok(SweepResult {
        axis: "variant".to_string(),
        points,
    })
}

/// Which hyperparameter a sweep walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    PatchSize,
    Threshold,
    Ensemble,
    DdimSteps,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::PatchSize => "patch_size",
            SweepAxis::Threshold => "threshold",
            SweepAxis::Ensemble => "ensemble",
            SweepAxis::DdimSteps => "ddim_steps",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "patch_size" | "patch-size" => Ok(SweepAxis::PatchSize),
            "threshold" => Ok(SweepAxis::Threshold),
            "ensemble" => Ok(SweepAxis::Ensemble),
            "ddim_steps" | "ddim-steps" | "steps" => Ok(SweepAxis::DdimSteps),
            other => Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        }
    }

    /// Training axes retrain per value; evaluation axes reuse a checkpoint.
    pub fn retrains(self) -> bool {
        matches!(self, SweepAxis::PatchSize | SweepAxis::Threshold)
    }
}

/// Inputs a sweep needs; training axes use `train_samples` + `base_train`,
/// evaluation axes use `model`.
pub struct SweepContext<'a> {
    pub train_samples: &'a [SceneSample],
    pub test_samples: &'a [SceneSample],
    pub coarse: &'a CoarseModel,
    pub base_train: Option<RefinerTrainConfig>,
    pub model: Option<&'a RefinerModel>,
    pub protocol: EvalProtocol,
    /// When set, a PGM dump of the first refined test sample per point.
    pub dump_dir: Option<PathBuf>,
}

fn dump_example(
    dir: &Path,
    axis: SweepAxis,
    label: &str,
    model: &RefinerModel,
    coarse: &CoarseModel,
    sample: &SceneSample,
    protocol: &EvalProtocol,
) -> Result<()> {
    let refined = refine_depth(
        model,
        coarse,
        &sample.image,
        Some(&sample.depth),
        protocol.steps,
        protocol.seed,
    )?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let path = dir.join(format!("{}_{}.pgm", axis.name(), label));
    pfm::write_pgm(
        &path,
        refined.width(),
        refined.height(),
        &pfm::quantize_for_pgm(refined.values()),
    )
}

/// Walks `values` along `axis`: trains per value for patch size / threshold,
/// evaluates the supplied model for ensemble size / DDIM steps.
pub fn run_sweep(axis: SweepAxis, values: &[f64], ctx: &SweepContext) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    for pair in values.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Config("sweep values must be strictly increasing".into()));
        }
    }
    if ctx.test_samples.is_empty() {
        return Err(Error::Config("sweep needs a non-empty test split".into()));
    }

    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let started = Instant::now();
        let label = if axis.retrains() || axis == SweepAxis::Ensemble || axis == SweepAxis::DdimSteps
        {
            format!("{value}")
        } else {
            format!("{value:.3}")
        };
        let reports = match axis {
            SweepAxis::PatchSize | SweepAxis::Threshold => {
                let mut cfg = ctx
                    .base_train
                    .clone()
                    .ok_or_else(|| Error::Config("training sweep needs a base train config".into()))?;
                if ctx.train_samples.is_empty() {
                    return Err(Error::Config("training sweep needs a train split".into()));
                }
                let sample0 = &ctx.test_samples[0];
                match axis {
                    SweepAxis::PatchSize => {
                        let w = value as usize;
                        if w == 0
                            || value.fract() != 0.0
                            || sample0.depth.height() % w != 0
                            || sample0.depth.width() % w != 0
                        {
                            return Err(Error::Config(format!(
                                "patch size {value} does not divide {}x{}",
                                sample0.depth.height(),
                                sample0.depth.width()
                            )));
                        }
                        cfg.mask = MaskConfig {
                            patch_size: w,
                            ..cfg.mask
                        };
                    }
                    SweepAxis::Threshold => {
                        if !(value > 0.0) {
                            return Err(Error::Config(format!("threshold {value} must be > 0")));
                        }
                        cfg.mask = MaskConfig {
                            threshold: value,
                            ..cfg.mask
                        };
                    }
                    _ => unreachable!(),
                }
                let (model, _) = train_refiner(ctx.train_samples, ctx.coarse, &cfg)?;
                if let Some(dir) = &ctx.dump_dir {
                    dump_example(dir, axis, &label, &model, ctx.coarse, &ctx.test_samples[0], &ctx.protocol)?;
                }
                evaluate_split(&model, ctx.coarse, ctx.test_samples, &ctx.protocol)?
            }
            SweepAxis::Ensemble | SweepAxis::DdimSteps => {
                let model = ctx
                    .model
                    .ok_or_else(|| Error::Config("evaluation sweep needs a trained model".into()))?;
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::Config(format!(
                        "{} values must be positive integers, got {value}",
                        axis.name()
                    )));
                }
                let mut protocol = ctx.protocol;
                match axis {
                    SweepAxis::Ensemble => protocol.ensemble = value as usize,
                    SweepAxis::DdimSteps => protocol.steps = value as usize,
                    _ => unreachable!(),
                }
                if let Some(dir) = &ctx.dump_dir {
                    dump_example(dir, axis, &label, model, ctx.coarse, &ctx.test_samples[0], &protocol)?;
                }
                evaluate_split(model, ctx.coarse, ctx.test_samples, &protocol)?
            }
        };
        points.push(SweepPoint::from_reports(
            value,
            label,
            reports,
            started.elapsed().as_secs_f64(),
        ));
    }
    Ok(SweepResult {
        axis: axis.name().to_string(),
        points,
    })
}

/// Repeated single-inference protocol: `n_repeats` independent refinements
/// of every test image, one sweep point per repeat holding that repeat's
/// dataset-level metrics.
pub fn error_bars(
    model: &RefinerModel,
    coarse: &CoarseModel,
    samples: &[SceneSample],
    n_repeats: usize,
    steps: usize,
    seed: u64,
) -> Result<SweepResult> {
    if n_repeats < 2 {
        return Err(Error::Config("error bars need at least 2 repeats".into()));
    }
    let mut points = Vec::with_capacity(n_repeats);
    for r in 0..n_repeats {
        let protocol = EvalProtocol {
            steps,
            ensemble: 1,
            seed: seed.wrapping_add((r as u64) << 40),
        };
        let started = Instant::now();
        let reports = evaluate_split(model, coarse, samples, &protocol)?;
        points.push(SweepPoint::from_reports(
            r as f64,
            format!("repeat{r}"),
            reports,
            started.elapsed().as_secs_f64(),
        ));
    }
    Ok(SweepResult {
        axis: "repeat".to_string(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::DepthMap;
    use crate::rng::SplitMix64;

    fn map(values: Vec<f32>, h: usize, w: usize) -> DepthMap {
        DepthMap::dense(h, w, values, DepthUnits::Metric).unwrap()
    }

    fn random_gt(seed: u64, h: usize, w: usize) -> DepthMap {
        let mut rng = SplitMix64::new(seed);
        // Quantized values: exactly representable, and affine copies with
        // dyadic coefficients stay exact in f32.
        let values: Vec<f32> = (0..h * w)
            .map(|_| (rng.range_usize(64) as f32) / 16.0 + 1.0)
            .collect();
        map(values, h, w)
    }

    #[test]
    fn identical_maps_score_perfectly() {
        let gt = random_gt(1, 8, 8);
        let r = compute_metrics(&gt, &gt).unwrap();
        assert_eq!(r.absrel, 0.0);
        assert_eq!(r.delta1, 1.0);
        assert_eq!(r.n_pixels, 64);
    }

    #[test]
    fn affine_copies_score_perfectly() {
        let gt = random_gt(2, 8, 8);
        // Dyadic affine: exact in f32.
        let pred_values: Vec<f32> = gt.values().iter().map(|&v| 2.0 * v + 0.5).collect();
        let pred = gt.with_values(pred_values, DepthUnits::Inverse).unwrap();
        let r = compute_metrics(&pred, &gt).unwrap();
        assert!(r.absrel < 1e-8, "absrel {}", r.absrel);
        assert_eq!(r.delta1, 1.0);
    }

    #[test]
    fn metric_affine_invariance() {
        let gt = random_gt(3, 8, 8);
        let mut rng = SplitMix64::new(4);
        let pred_values: Vec<f32> = gt
            .values()
            .iter()
            .map(|&v| v + (rng.range_usize(8) as f32) / 16.0)
            .collect();
        let pred = gt.with_values(pred_values, DepthUnits::Inverse).unwrap();
        let base = compute_metrics(&pred, &gt).unwrap();
        // Dyadic (a, b) keep the transformed prediction exact in f32.
        for (a, b) in [(2.0f32, 0.5f32), (0.25, -0.125), (4.0, 2.0)] {
            let tv: Vec<f32> = pred.values().iter().map(|&v| a * v + b).collect();
            let t = pred.with_values(tv, DepthUnits::Inverse).unwrap();
            let r = compute_metrics(&t, &gt).unwrap();
            assert!((r.absrel - base.absrel).abs() < 1e-8);
            assert!((r.delta1 - base.delta1).abs() < 1e-8);
        }
    }

    #[test]
    fn boundary_ratio_is_excluded_by_strict_inequality() {
        // An aligned map exactly 1.25x the reference: every ratio equals
        // 1.25, which strict `<` rejects, so delta1 is exactly 0. (A
        // least-squares fit can never produce this map, which is why the
        // aligned-frame entry point exists.)
        let gt = random_gt(5, 8, 8);
        let aligned_values: Vec<f32> = gt.values().iter().map(|&v| 1.25 * v).collect();
        let aligned = gt.with_values(aligned_values, DepthUnits::Inverse).unwrap();
        let r = metrics_of_aligned(&aligned, &gt, AffineFit::identity()).unwrap();
        assert_eq!(r.delta1, 0.0);
        assert!((r.absrel - 0.25).abs() < 1e-9);

        // One ulp under the boundary counts.
        let under: Vec<f32> = gt
            .values()
            .iter()
            .map(|&v| f32::from_bits((1.25 * v).to_bits() - 1))
            .collect();
        let aligned = gt.with_values(under, DepthUnits::Inverse).unwrap();
        let r = metrics_of_aligned(&aligned, &gt, AffineFit::identity()).unwrap();
        assert_eq!(r.delta1, 1.0);
    }

    #[test]
    fn delta1_monotone_as_errors_shrink() {
        let gt = random_gt(6, 8, 8);
        let mut rng = SplitMix64::new(7);
        let noise: Vec<f64> = (0..64).map(|_| rng.range_f64(-0.8, 0.8)).collect();
        let mut last = -1.0f64;
        for lambda in [1.0f64, 0.75, 0.5, 0.25, 0.0] {
            let values: Vec<f32> = gt
                .values()
                .iter()
                .zip(&noise)
                .map(|(&g, &n)| (g as f64 + lambda * n) as f32)
                .collect();
            let aligned = gt.with_values(values, DepthUnits::Inverse).unwrap();
            let r = metrics_of_aligned(&aligned, &gt, AffineFit::identity()).unwrap();
            assert!(r.delta1 >= last - 1e-12, "delta1 not monotone");
            last = r.delta1;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn nonpositive_gt_is_rejected() {
        let gt = map(vec![1.0, 2.0, 0.0, 3.0], 2, 2);
        let pred = map(vec![1.0, 2.0, 1.0, 3.0], 2, 2);
        assert!(matches!(compute_metrics(&pred, &gt), Err(Error::Range(_))));
    }

    #[test]
    fn constant_prediction_is_degenerate_source() {
        let gt = random_gt(8, 4, 4);
        let pred = DepthMap::constant(4, 4, 1.0, DepthUnits::Inverse).unwrap();
        assert!(matches!(compute_metrics(&pred, &gt), Err(Error::DegenerateSource)));
    }

    #[test]
    fn mean_metrics_and_summary() {
        let fit = AffineFit::identity();
        let reports = vec![
            MetricReport { absrel: 0.1, delta1: 0.9, n_pixels: 10, fit },
            MetricReport { absrel: 0.3, delta1: 0.7, n_pixels: 10, fit },
        ];
        let (a, d) = mean_metrics(&reports);
        assert!((a - 0.2).abs() < 1e-12);
        assert!((d - 0.8).abs() < 1e-12);
    }

    #[test]
    fn sweep_values_must_increase() {
        let samples: Vec<SceneSample> = Vec::new();
        let coarse = CoarseModel::DegradeOracle(crate::coarse::DegradeParams::neutral());
        let ctx = SweepContext {
            train_samples: &samples,
            test_samples: &samples,
            coarse: &coarse,
            base_train: None,
            model: None,
            protocol: EvalProtocol { steps: 1, ensemble: 1, seed: 0 },
            dump_dir: None,
        };
        assert!(matches!(
            run_sweep(SweepAxis::Threshold, &[0.2, 0.1], &ctx),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_has_header_and_config_echo() {
        let result = SweepResult {
            axis: "threshold".into(),
            points: vec![SweepPoint::from_reports(
                0.1,
                "0.1".into(),
                vec![MetricReport { absrel: 0.05, delta1: 0.98, n_pixels: 4, fit: AffineFit::identity() }],
                1.5,
            )],
        };
        let csv = result.to_csv("seed=7\nthreshold=0.1");
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "# seed=7");
        assert_eq!(lines.next().unwrap(), "# threshold=0.1");
        assert_eq!(lines.next().unwrap(), "axis,value,label,sample,absrel,delta1,runtime_s");
        assert!(lines.next().unwrap().starts_with("threshold,0.1,0.1,0,"));
    }
}
