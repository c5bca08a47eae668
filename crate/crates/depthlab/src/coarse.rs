//! Coarse depth models that supply conditioning for the refiner.
//!
//! Two stand-ins for a pre-trained feed-forward predictor:
//!
//! - [`CoarseModel::DegradeOracle`] degrades the ground-truth label
//!   (box-downscale, Gaussian blur, bilinear upscale, affine remap, optional
//!   quantization) — precise, tunable "coarse but globally right"
//!   conditioning. A per-sample random affine, derived deterministically from
//!   the input raster, emulates the unknown scale/shift of affine-invariant
//!   predictors.
//! - [`CoarseModel::TinyRegressor`] is a small trained encoder-decoder that
//!   predicts depth from the image alone; it exists so inference can be
//!   exercised with a genuinely different model family than training saw.
//!
//! Both produce affine-ambiguous output (`DepthUnits::Inverse`). The
//! regressor trains against [`ssi_loss`], the mean squared error after
//! closed-form scale/shift alignment of the prediction onto the label.

use rayon::prelude::*;

use crate::align::fit_affine;
use crate::checkpoint::{blobs_from_net, load_net_from_blobs, Checkpoint};
use crate::config::KvMap;
use crate::error::{Error, Result};
use crate::nn::{Adam, Feat, UNet, UNetConfig};
use crate::raster::{normalize_depth, DepthMap, DepthUnits, ImageMap};
use crate::rng::{hash_bytes, SplitMix64};
use crate::scenegen::SceneSample;

/// Documented jitter ranges for the per-sample affine (normalized units).
pub const JITTER_SCALE_RANGE: (f64, f64) = (0.5, 2.0);
pub const JITTER_SHIFT_RANGE: (f64, f64) = (-0.25, 0.25);

/// Degradation pipeline parameters, applied in order: box-downscale by
/// `downscale_factor`, Gaussian blur of `blur_sigma` (low-res pixels),
/// bilinear upscale, `scale*d + shift`, then uniform quantization to
/// `quantize_levels` (values <= 1 disable it).
#[derive(Debug, Clone, PartialEq)]
pub struct DegradeParams {
    pub blur_sigma: f64,
    pub downscale_factor: usize,
    pub affine_scale: f64,
    pub affine_shift: f64,
    pub quantize_levels: usize,
    /// Draw an extra per-sample affine from the documented ranges, keyed by
    /// `(jitter_seed, input raster bits)` so predictions stay deterministic.
    pub jitter: bool,
    pub jitter_seed: u64,
}

impl DegradeParams {
    /// Identity degradation (output equals the label bit for bit).
    pub fn neutral() -> Self {
        DegradeParams {
            blur_sigma: 0.0,
            downscale_factor: 1,
            affine_scale: 1.0,
            affine_shift: 0.0,
            quantize_levels: 0,
            jitter: false,
            jitter_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma >= 0.0) {
            return Err(Error::Config(format!("blur_sigma must be >= 0, got {}", self.blur_sigma)));
        }
        if self.downscale_factor == 0 {
            return Err(Error::Config("downscale_factor must be >= 1".into()));
        }
        if !(self.affine_scale > 0.0) {
            return Err(Error::Config(format!(
                "affine_scale must be > 0, got {}",
                self.affine_scale
            )));
        }
        Ok(())
    }
}

/// Regressor architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorConfig {
    pub base_channels: usize,
    pub levels: usize,
    pub groups: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Normalization percentiles for training labels.
    pub lo_pct: f64,
    pub hi_pct: f64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig {
            base_channels: 8,
            levels: 3,
            groups: 4,
            lr: 2e-3,
            batch_size: 8,
            iterations: 1500,
            seed: 7,
            lo_pct: 2.0,
            hi_pct: 98.0,
        }
    }
}

impl RegressorConfig {
    fn arch(&self) -> UNetConfig {
        UNetConfig {
            in_channels: 3,
            out_channels: 1,
            base_channels: self.base_channels,
            levels: self.levels,
            groups: self.groups,
            temb_dim: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        self.arch().validate()
    }

    /// The regressor's initial network. The default zero head would make
    /// the first prediction constant, which the SSI alignment cannot fit,
    /// so the head gets a small random init.
    pub fn init_net(&self) -> Result<UNet> {
        let mut net = UNet::init(self.arch(), self.seed)?;
        let mut rng = SplitMix64::derive(self.seed, 0x4EAD);
        net.visit_params_mut(&mut |name, s| {
            if name.starts_with("head.w") {
                for v in s.iter_mut() {
                    *v = rng.range_f64(-0.05, 0.05);
                }
            }
        });
        Ok(net)
    }
}

/// A conditioning model instance.
#[derive(Debug, Clone)]
pub enum CoarseModel {
    DegradeOracle(DegradeParams),
    TinyRegressor {
        net: Box<UNet>,
        config: RegressorConfig,
        trained_iterations: usize,
    },
}

impl CoarseModel {
    /// Stable string naming this model instance.
    pub fn id(&self) -> String {
        match self {
            CoarseModel::DegradeOracle(p) => format!(
                "degrade_oracle(blur={},factor={},scale={},shift={},quantize={},jitter={})",
                p.blur_sigma, p.downscale_factor, p.affine_scale, p.affine_shift,
                p.quantize_levels, p.jitter
            ),
            CoarseModel::TinyRegressor {
                config,
                trained_iterations,
                ..
            } => format!(
                "tiny_regressor(c0={},levels={},seed={},iters={trained_iterations})",
                config.base_channels, config.levels, config.seed
            ),
        }
    }

    /// True when prediction requires the ground-truth label.
    pub fn needs_ground_truth(&self) -> bool {
        matches!(self, CoarseModel::DegradeOracle(_))
    }
}

// ---------------------------------------------------------------------------
// Degradation pipeline
// ---------------------------------------------------------------------------

/// A raster plus per-pixel weights (validity carried through resampling).
struct Weighted {
    h: usize,
    w: usize,
    values: Vec<f64>,
    weights: Vec<f64>,
}

fn box_downscale(src: &Weighted, k: usize) -> Weighted {
    if k == 1 {
        return Weighted {
            h: src.h,
            w: src.w,
            values: src.values.clone(),
            weights: src.weights.clone(),
        };
    }
    let (lh, lw) = (src.h.div_ceil(k), src.w.div_ceil(k));
    let mut values = vec![0f64; lh * lw];
    let mut weights = vec![0f64; lh * lw];
    for ly in 0..lh {
        for lx in 0..lw {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for dy in 0..k {
                let y = ly * k + dy;
                if y >= src.h {
                    continue;
                }
                for dx in 0..k {
                    let x = lx * k + dx;
                    if x >= src.w {
                        continue;
                    }
                    let wgt = src.weights[y * src.w + x];
                    acc += src.values[y * src.w + x] * wgt;
                    wsum += wgt;
                }
            }
            if wsum > 0.0 {
                values[ly * lw + lx] = acc / wsum;
                weights[ly * lw + lx] = 1.0;
            }
        }
    }
    Weighted { h: lh, w: lw, values, weights }
}

fn gaussian_blur(src: &Weighted, sigma: f64) -> Weighted {
    if sigma <= 0.0 {
        return Weighted {
            h: src.h,
            w: src.w,
            values: src.values.clone(),
            weights: src.weights.clone(),
        };
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64 * i as f64) / (2.0 * sigma * sigma)).exp())
        .collect();

    // Separable blur with validity-weighted renormalization at edges.
    let pass = |h: usize, w: usize, values: &[f64], weights: &[f64], horizontal: bool| {
        let mut out_v = vec![0f64; h * w];
        let mut out_w = vec![0f64; h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (ki, &kw) in kernel.iter().enumerate() {
                    let off = ki as isize - radius;
                    let (sy, sx) = if horizontal {
                        (y as isize, x as isize + off)
                    } else {
                        (y as isize + off, x as isize)
                    };
                    if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let idx = sy as usize * w + sx as usize;
                    let wgt = kw * weights[idx];
                    acc += values[idx] * wgt;
                    wsum += wgt;
                }
                if wsum > 0.0 {
                    out_v[y * w + x] = acc / wsum;
                    out_w[y * w + x] = 1.0;
                }
            }
        }
        (out_v, out_w)
    };
    let (v1, w1) = pass(src.h, src.w, &src.values, &src.weights, true);
    let (v2, w2) = pass(src.h, src.w, &v1, &w1, false);
    Weighted { h: src.h, w: src.w, values: v2, weights: w2 }
}

fn bilinear_upscale(src: &Weighted, out_h: usize, out_w: usize) -> Vec<f64> {
    let mut out = vec![0f64; out_h * out_w];
    let sy = src.h as f64 / out_h as f64;
    let sx = src.w as f64 / out_w as f64;
    for y in 0..out_h {
        // Pixel-center mapping.
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (src.h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(src.h - 1);
        let ty = fy - y0 as f64;
        for x in 0..out_w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (src.w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(src.w - 1);
            let tx = fx - x0 as f64;
            let v00 = src.values[y0 * src.w + x0];
            let v01 = src.values[y0 * src.w + x1];
            let v10 = src.values[y1 * src.w + x0];
            let v11 = src.values[y1 * src.w + x1];
            out[y * out_w + x] = v00 * (1.0 - ty) * (1.0 - tx)
                + v01 * (1.0 - ty) * tx
                + v10 * ty * (1.0 - tx)
                + v11 * ty * tx;
        }
    }
    out
}

fn degrade(params: &DegradeParams, gt: &DepthMap) -> Result<DepthMap> {
    params.validate()?;
    let n = gt.height() * gt.width();
    let src = Weighted {
        h: gt.height(),
        w: gt.width(),
        values: gt.values().iter().map(|&v| v as f64).collect(),
        weights: gt.validity().iter().map(|&v| v as f64).collect(),
    };

    let low = box_downscale(&src, params.downscale_factor);
    let blurred = gaussian_blur(&low, params.blur_sigma);
    let mut values = if params.downscale_factor == 1 {
        blurred.values
    } else {
        bilinear_upscale(&blurred, gt.height(), gt.width())
    };

    // Fixed affine plus the optional per-sample jitter.
    let (mut a, mut b) = (params.affine_scale, params.affine_shift);
    if params.jitter {
        let mut raw: Vec<u8> = Vec::with_capacity(n * 4);
        for v in gt.values() {
            raw.extend_from_slice(&v.to_le_bytes());
        }
        let mut rng = SplitMix64::derive(params.jitter_seed, hash_bytes(&raw));
        a *= rng.range_f64(JITTER_SCALE_RANGE.0, JITTER_SCALE_RANGE.1);
        b += rng.range_f64(JITTER_SHIFT_RANGE.0, JITTER_SHIFT_RANGE.1);
    }
    for v in values.iter_mut() {
        *v = a * *v + b;
    }

    if params.quantize_levels > 1 {
        let levels = (params.quantize_levels - 1) as f64;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (i, &v) in values.iter().enumerate() {
            if gt.validity()[i] != 0 {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if hi > lo {
            for v in values.iter_mut() {
                *v = ((*v - lo) / (hi - lo) * levels).round() / levels * (hi - lo) + lo;
            }
        }
    }

    let out: Vec<f32> = values
        .iter()
        .zip(gt.validity())
        .map(|(&v, &m)| if m != 0 { v as f32 } else { 0.0 })
        .collect();
    DepthMap::new(gt.height(), gt.width(), out, gt.validity().to_vec(), DepthUnits::Inverse)
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

/// Planar `[3, h, w]` image features in `[-1, 1]` (grayscale broadcasts).
fn image_to_feat(x: &ImageMap) -> Feat {
    Feat::from_shape_fn((3, x.height(), x.width()), |(c, y, xx)| {
        let ch = if x.channels() == 3 { c } else { 0 };
        2.0 * x.get(y, xx, ch) as f64 - 1.0
    })
}

/// Runs the conditioning model. The degradation oracle requires `gt`.
pub fn predict_coarse(
    model: &CoarseModel,
    x: &ImageMap,
    gt: Option<&DepthMap>,
) -> Result<DepthMap> {
    match model {
        CoarseModel::DegradeOracle(params) => {
            let gt = gt.ok_or(Error::MissingGroundTruth)?;
            if gt.height() != x.height() || gt.width() != x.width() {
                return Err(Error::Shape(format!(
                    "image {}x{} vs label {}x{}",
                    x.height(),
                    x.width(),
                    gt.height(),
                    gt.width()
                )));
            }
            degrade(params, gt)
        }
        CoarseModel::TinyRegressor { net, .. } => {
            let out = net.forward(&image_to_feat(x), None)?;
            let values: Vec<f32> = out.iter().map(|&v| v as f32).collect();
            DepthMap::dense(x.height(), x.width(), values, DepthUnits::Inverse)
        }
    }
}

// ---------------------------------------------------------------------------
// Scale/shift-invariant loss
// ---------------------------------------------------------------------------

/// Mean squared error after least-squares alignment of `pred` onto `label`.
pub fn ssi_loss(pred: &DepthMap, label: &DepthMap) -> Result<f64> {
    let mut distinct = None;
    let mut has_two = false;
    for v in label.valid_values() {
        match distinct {
            None => distinct = Some(v),
            Some(d) if d != v => {
                has_two = true;
                break;
            }
            _ => {}
        }
    }
    if !has_two {
        return Err(Error::DegenerateDepth);
    }
    let fit = fit_affine(pred, label)?;
    Ok(fit.residual_rms * fit.residual_rms)
}

/// Loss and gradient with respect to the (dense f64) prediction plane.
///
/// With `(s, b)` the minimizer, the envelope theorem collapses the gradient
/// to `d loss / d pred_i = 2 s (s pred_i + b - label_i) / n` on valid pixels.
fn ssi_loss_grad(pred: &Feat, label: &DepthMap) -> Result<(f64, Feat)> {
    let (_, h, w) = pred.dim();
    let values: Vec<f32> = pred.iter().map(|&v| v as f32).collect();
    let pred_map = DepthMap::new(h, w, values, label.validity().to_vec(), DepthUnits::Inverse)?;
    let fit = fit_affine(&pred_map, label)?;
    let n = fit.n_valid as f64;
    let mut grad = Feat::zeros((1, h, w));
    let mut loss = 0.0;
    for y in 0..h {
        for x in 0..w {
            if label.is_valid(y, x) {
                let r = fit.scale * pred[[0, y, x]] + fit.shift - label.get(y, x) as f64;
                loss += r * r;
                grad[[0, y, x]] = 2.0 * fit.scale * r / n;
            }
        }
    }
    Ok((loss / n, grad))
}

// ---------------------------------------------------------------------------
// Regressor training
// ---------------------------------------------------------------------------

/// Per-iteration training record: `(iteration, loss)`.
pub type LossLog = Vec<(usize, f64)>;

/// Fits the tiny regressor on `(image, depth)` pairs with Adam on
/// [`ssi_loss`]. Labels are normalized per image; samples whose labels are
/// degenerate are skipped.
pub fn train_tiny_regressor(
    samples: &[SceneSample],
    cfg: &RegressorConfig,
) -> Result<(CoarseModel, LossLog)> {
    if samples.is_empty() {
        return Err(Error::Config("training manifest is empty".into()));
    }
    cfg.validate()?;

    // Pre-normalize labels once.
    let prepared: Vec<Option<(Feat, DepthMap)>> = samples
        .par_iter()
        .map(|s| {
            let label = normalize_depth(&s.depth, cfg.lo_pct, cfg.hi_pct).ok()?.0;
            Some((image_to_feat(&s.image), label))
        })
        .collect();
    let usable: Vec<&(Feat, DepthMap)> = prepared.iter().flatten().collect();
    if usable.is_empty() {
        return Err(Error::Config("no usable training samples (all degenerate)".into()));
    }

    let mut net = cfg.init_net()?;
    let mut opt = Adam::new(cfg.lr, net.param_count());
    let mut log = LossLog::new();

    for iter in 0..cfg.iterations {
        let mut rng = SplitMix64::derive(cfg.seed, 0xC0A5_0000 ^ iter as u64);
        let batch: Vec<usize> = (0..cfg.batch_size).map(|_| rng.range_usize(usable.len())).collect();

        let results: Vec<Result<(f64, UNet)>> = batch
            .par_iter()
            .map(|&idx| {
                let (img, label) = usable[idx];
                let (out, cache) = net.forward_cached(img, None)?;
                let (loss, dout) = ssi_loss_grad(&out, label)?;
                let mut grads = net.zeros_like();
                net.backward(&cache, &dout, &mut grads);
                Ok((loss, grads))
            })
            .collect();

        let mut total = net.zeros_like();
        let mut loss_sum = 0.0;
        let mut n_ok = 0usize;
        for r in results {
            match r {
                Ok((loss, g)) => {
                    total.add_params(&g);
                    loss_sum += loss;
                    n_ok += 1;
                }
                // Degenerate draws are skipped, matching the trainer contract.
                Err(Error::DegenerateSource) | Err(Error::DegenerateDepth) => {}
                Err(e) => return Err(e),
            }
        }
        if n_ok == 0 {
            continue;
        }
        // Mean gradient over the batch.
        let scale = 1.0 / n_ok as f64;
        let mut scaled = net.zeros_like();
        scaled.add_params(&total);
        scaled.visit_params_mut(&mut |_, s| {
            for v in s.iter_mut() {
                *v *= scale;
            }
        });
        opt.step(&mut net, &scaled);
        log.push((iter, loss_sum / n_ok as f64));
    }

    Ok((
        CoarseModel::TinyRegressor {
            net: Box::new(net),
            config: cfg.clone(),
            trained_iterations: cfg.iterations,
        },
        log,
    ))
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

/// Serializes a trained regressor (plus the run config echo).
pub fn regressor_checkpoint(model: &CoarseModel, run_config_echo: &str) -> Result<Checkpoint> {
    let CoarseModel::TinyRegressor {
        net,
        config,
        trained_iterations,
    } = model
    else {
        return Err(Error::Config("only the tiny regressor is checkpointed".into()));
    };
    let mut kv = KvMap::new();
    kv.set("kind", "coarse_regressor");
    kv.set("arch.base_channels", config.base_channels);
    kv.set("arch.levels", config.levels);
    kv.set("arch.groups", config.groups);
    kv.set("train.lr", config.lr);
    kv.set("train.batch_size", config.batch_size);
    kv.set("train.iterations", config.iterations);
    kv.set("train.lo_pct", config.lo_pct);
    kv.set("train.hi_pct", config.hi_pct);
    kv.set("meta.seed", config.seed);
    kv.set("meta.trained_iterations", *trained_iterations);
    for (i, line) in run_config_echo.lines().enumerate() {
        kv.set(&format!("run.{i:03}"), line);
    }
    Ok(Checkpoint {
        config: kv,
        blobs: blobs_from_net(net),
    })
}

/// Restores a regressor from a checkpoint.
pub fn regressor_from_checkpoint(ckpt: &Checkpoint) -> Result<CoarseModel> {
    if ckpt.config.get("kind") != Some("coarse_regressor") {
        return Err(Error::Format(format!(
            "checkpoint kind {:?} is not a coarse regressor",
            ckpt.config.get("kind")
        )));
    }
    let config = RegressorConfig {
        base_channels: ckpt.config.get_parse("arch.base_channels")?,
        levels: ckpt.config.get_parse("arch.levels")?,
        groups: ckpt.config.get_parse("arch.groups")?,
        lr: ckpt.config.get_parse("train.lr")?,
        batch_size: ckpt.config.get_parse("train.batch_size")?,
        iterations: ckpt.config.get_parse("train.iterations")?,
        seed: ckpt.config.get_parse("meta.seed")?,
        lo_pct: ckpt.config.get_parse("train.lo_pct")?,
        hi_pct: ckpt.config.get_parse("train.hi_pct")?,
    };
    let mut net = UNet::init(config.arch(), config.seed)?;
    load_net_from_blobs(&mut net, ckpt)?;
    Ok(CoarseModel::TinyRegressor {
        net: Box::new(net),
        trained_iterations: ckpt.config.get_parse("meta.trained_iterations")?,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_sample, SceneSpec};

    fn ramp_map(h: usize, w: usize, lo: f32, hi: f32) -> DepthMap {
        let n = h * w;
        let values: Vec<f32> = (0..n)
            .map(|i| lo + (hi - lo) * i as f32 / (n - 1) as f32)
            .collect();
        DepthMap::dense(h, w, values, DepthUnits::Metric).unwrap()
    }

    #[test]
    fn neutral_degradation_is_identity() {
        let gt = ramp_map(8, 8, 0.0, 1.0);
        let img = ImageMap::new(8, 8, 1, vec![0.5; 64]).unwrap();
        let model = CoarseModel::DegradeOracle(DegradeParams::neutral());
        let out = predict_coarse(&model, &img, Some(&gt)).unwrap();
        assert_eq!(out.values(), gt.values());
        assert_eq!(out.units(), DepthUnits::Inverse);
    }

    #[test]
    fn fixed_affine_degradation() {
        let gt = ramp_map(4, 4, 0.0, 1.0);
        let img = ImageMap::new(4, 4, 1, vec![0.5; 16]).unwrap();
        let params = DegradeParams {
            affine_scale: 2.0,
            affine_shift: 1.0,
            ..DegradeParams::neutral()
        };
        let out = predict_coarse(&CoarseModel::DegradeOracle(params), &img, Some(&gt)).unwrap();
        for (o, g) in out.values().iter().zip(gt.values()) {
            assert!((o - (2.0 * g + 1.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn oracle_without_ground_truth_errors() {
        let img = ImageMap::new(4, 4, 1, vec![0.5; 16]).unwrap();
        let model = CoarseModel::DegradeOracle(DegradeParams::neutral());
        assert!(matches!(
            predict_coarse(&model, &img, None),
            Err(Error::MissingGroundTruth)
        ));
    }

    #[test]
    fn jitter_is_deterministic_per_input_and_varies_across_inputs() {
        let img = ImageMap::new(8, 8, 1, vec![0.5; 64]).unwrap();
        let params = DegradeParams {
            jitter: true,
            jitter_seed: 3,
            ..DegradeParams::neutral()
        };
        let model = CoarseModel::DegradeOracle(params);
        let a = ramp_map(8, 8, 0.0, 1.0);
        let b = ramp_map(8, 8, 0.0, 2.0);
        let pa1 = predict_coarse(&model, &img, Some(&a)).unwrap();
        let pa2 = predict_coarse(&model, &img, Some(&a)).unwrap();
        let pb = predict_coarse(&model, &img, Some(&b)).unwrap();
        assert_eq!(pa1.values(), pa2.values());
        // Different inputs draw different affines: the fitted scale differs.
        let fa = fit_affine(&a, &pa1).unwrap();
        let fb = fit_affine(&b, &pb).unwrap();
        assert!((fa.scale - fb.scale).abs() > 1e-3);
    }

    #[test]
    fn degradation_blur_smooths_discontinuities() {
        let mut values = vec![0.0f32; 64];
        for row in 0..8 {
            for col in 4..8 {
                values[row * 8 + col] = 1.0;
            }
        }
        let gt = DepthMap::dense(8, 8, values, DepthUnits::Metric).unwrap();
        let img = ImageMap::new(8, 8, 1, vec![0.5; 64]).unwrap();
        let params = DegradeParams {
            blur_sigma: 1.0,
            ..DegradeParams::neutral()
        };
        let out = predict_coarse(&CoarseModel::DegradeOracle(params), &img, Some(&gt)).unwrap();
        // The step edge is no longer a step.
        let mid_jump = (out.get(4, 4) - out.get(4, 3)).abs();
        assert!(mid_jump < 0.9, "edge should smear, jump {mid_jump}");
        // But the global layout survives: left < right.
        assert!(out.get(4, 0) < out.get(4, 7));
    }

    #[test]
    fn quantization_reduces_distinct_values() {
        let gt = ramp_map(8, 8, 0.0, 1.0);
        let img = ImageMap::new(8, 8, 1, vec![0.5; 64]).unwrap();
        let params = DegradeParams {
            quantize_levels: 4,
            ..DegradeParams::neutral()
        };
        let out = predict_coarse(&CoarseModel::DegradeOracle(params), &img, Some(&gt)).unwrap();
        let mut distinct: Vec<u32> = out.values().iter().map(|v| v.to_bits()).collect();
        distinct.sort_unstable();
        distinct.dedup();
        assert!(distinct.len() <= 4, "{} distinct values", distinct.len());
    }

    #[test]
    fn ssi_loss_is_affine_invariant() {
        let label = ramp_map(8, 8, 1.0, 5.0);
        for (a, b) in [(1.0f32, 0.0f32), (2.0, 1.0), (0.3, -2.0)] {
            let pred_values: Vec<f32> = label.values().iter().map(|&v| a * v + b).collect();
            let pred = label.with_values(pred_values, DepthUnits::Inverse).unwrap();
            let loss = ssi_loss(&pred, &label).unwrap();
            assert!(loss < 1e-10, "loss {loss} for affine ({a},{b})");
        }
    }

    #[test]
    fn ssi_loss_matches_grid_search_oracle() {
        // Noisy prediction: the loss equals the SSE/n at the grid-search
        // optimum over (s, b).
        let mut rng = SplitMix64::new(77);
        let label = ramp_map(8, 8, 0.0, 1.0);
        let pred_values: Vec<f32> = label
            .values()
            .iter()
            .map(|&v| (1.3 * v as f64 - 0.2 + rng.range_f64(-0.05, 0.05)) as f32)
            .collect();
        let pred = label.with_values(pred_values, DepthUnits::Inverse).unwrap();
        let loss = ssi_loss(&pred, &label).unwrap();

        let mut best = f64::INFINITY;
        let (mut s0, mut b0, mut half) = (0.0f64, 0.0f64, 4.0f64);
        for _ in 0..6 {
            let step = half / 20.0;
            let (mut bs, mut bb) = (s0, b0);
            for i in 0..=40 {
                for j in 0..=40 {
                    let s = s0 - half + i as f64 * step;
                    let b = b0 - half + j as f64 * step;
                    let sse: f64 = pred
                        .values()
                        .iter()
                        .zip(label.values())
                        .map(|(&p, &l)| (s * p as f64 + b - l as f64).powi(2))
                        .sum();
                    if sse < best {
                        best = sse;
                        bs = s;
                        bb = b;
                    }
                }
            }
            s0 = bs;
            b0 = bb;
            half = step * 3.0;
        }
        assert!((loss - best / 64.0).abs() < 1e-6, "{loss} vs {}", best / 64.0);
    }

    #[test]
    fn ssi_loss_constant_label_is_degenerate() {
        let label = DepthMap::constant(4, 4, 3.0, DepthUnits::Metric).unwrap();
        let pred = ramp_map(4, 4, 0.0, 1.0);
        assert!(matches!(ssi_loss(&pred, &label), Err(Error::DegenerateDepth)));
    }

    #[test]
    fn ssi_grad_matches_finite_differences() {
        let mut rng = SplitMix64::new(5);
        let label = ramp_map(4, 4, 0.0, 1.0);
        let mut pred = Feat::from_shape_fn((1, 4, 4), |_| rng.range_f64(-0.5, 1.5));
        let (_, grad) = ssi_loss_grad(&pred, &label).unwrap();
        let h = 1e-6;
        for idx in 0..16 {
            let orig = pred.as_slice().unwrap()[idx];
            pred.as_slice_mut().unwrap()[idx] = orig + h;
            let up = ssi_loss_grad(&pred, &label).unwrap().0;
            pred.as_slice_mut().unwrap()[idx] = orig - h;
            let dn = ssi_loss_grad(&pred, &label).unwrap().0;
            pred.as_slice_mut().unwrap()[idx] = orig;
            let fd = (up - dn) / (2.0 * h);
            let an = grad.as_slice().unwrap()[idx];
            assert!(
                (an - fd).abs() < 2e-4 * an.abs().max(fd.abs()).max(1.0),
                "idx {idx}: {an} vs {fd}"
            );
        }
    }

    #[test]
    fn regressor_prediction_shape_matches_input() {
        let spec = SceneSpec::new(3, 16, 16, 3);
        let sample = generate_sample(&spec, 0);
        let cfg = RegressorConfig {
            base_channels: 2,
            levels: 2,
            groups: 1,
            iterations: 0,
            ..RegressorConfig::default()
        };
        let (model, log) = train_tiny_regressor(&[sample.clone()], &cfg).unwrap();
        assert!(log.is_empty());
        let pred = predict_coarse(&model, &sample.image, None).unwrap();
        assert_eq!((pred.height(), pred.width()), (16, 16));
    }

    #[test]
    fn zero_iterations_returns_initialization() {
        let spec = SceneSpec::new(3, 16, 16, 3);
        let sample = generate_sample(&spec, 0);
        let cfg = RegressorConfig {
            base_channels: 2,
            levels: 2,
            groups: 1,
            iterations: 0,
            seed: 11,
            ..RegressorConfig::default()
        };
        let (model, _) = train_tiny_regressor(&[sample], &cfg).unwrap();
        let CoarseModel::TinyRegressor { net, .. } = &model else {
            panic!("wrong model kind")
        };
        let fresh = cfg.init_net().unwrap();
        let mut a = Vec::new();
        net.visit_params(&mut |_, s| a.extend_from_slice(s));
        let mut b = Vec::new();
        fresh.visit_params(&mut |_, s| b.extend_from_slice(s));
        assert_eq!(a, b);
    }

    #[test]
    fn empty_manifest_is_config_error() {
        let cfg = RegressorConfig::default();
        assert!(matches!(
            train_tiny_regressor(&[], &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn overfits_one_sample() {
        let spec = SceneSpec::new(21, 16, 16, 4);
        let sample = generate_sample(&spec, 0);
        let cfg = RegressorConfig {
            base_channels: 4,
            levels: 2,
            groups: 2,
            lr: 3e-3,
            batch_size: 1,
            iterations: 300,
            seed: 2,
            ..RegressorConfig::default()
        };
        let (_, log) = train_tiny_regressor(&[sample], &cfg).unwrap();
        let initial = log.first().unwrap().1;
        let fin = log.last().unwrap().1;
        assert!(
            fin < 0.1 * initial,
            "memorization failed: {initial} -> {fin}"
        );
    }

    #[test]
    fn regressor_checkpoint_round_trips() {
        let spec = SceneSpec::new(4, 16, 16, 2);
        let sample = generate_sample(&spec, 0);
        let cfg = RegressorConfig {
            base_channels: 2,
            levels: 2,
            groups: 1,
            iterations: 3,
            batch_size: 2,
            ..RegressorConfig::default()
        };
        let (model, _) = train_tiny_regressor(&[sample.clone()], &cfg).unwrap();
        let ckpt = regressor_checkpoint(&model, "seed=7\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reg.ckpt");
        ckpt.save(&path).unwrap();
        let restored = regressor_from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
        let a = predict_coarse(&model, &sample.image, None).unwrap();
        let b = predict_coarse(&restored, &sample.image, None).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
