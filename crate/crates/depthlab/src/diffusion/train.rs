//! Refiner training loop.
//!
//! Per batch sample: normalize the label, run the coarse model, globally
//! pre-align the conditioning, build the patch mask, encode image /
//! conditioning / label to latents, draw `(t, eps)`, noise the label latent,
//! and take an Adam step on the masked velocity loss. The variant switches
//! turn conditioning, pre-alignment, and masking off individually to realize
//! the ablation rows.
//!
//! Conditioning, masks, and latents are deterministic per sample, so they
//! are prepared once up front; only `(t, eps)` is drawn per iteration, from
//! a stream keyed by `(seed, iteration, slot)` — batch assembly order and
//! thread scheduling cannot affect results.

use std::time::Instant;

use rayon::prelude::*;

use crate::align::prealign_conditioning;
use crate::coarse::{predict_coarse, CoarseModel};
use crate::error::{Error, Result};
use crate::maskgen::{build_latent_mask, LatentMask, MaskConfig};
use crate::nn::{Adam, Feat, UNet, UNetConfig};
use crate::raster::normalize_depth;
use crate::rng::SplitMix64;
use crate::scenegen::SceneSample;

use super::codec::{encode_depth, encode_image, LatentTag};
use super::loss::masked_v_loss_grad;
use super::model::{RefinerModel, TrainMeta, Variant};
use super::schedule::{add_noise, v_target, NoiseSchedule};

/// Everything the trainer needs beyond the data and the coarse model.
#[derive(Debug, Clone)]
pub struct RefinerTrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub variant: Variant,
    pub base_channels: usize,
    pub levels: usize,
    pub groups: usize,
    pub temb_dim: usize,
    pub schedule: NoiseSchedule,
    pub mask: MaskConfig,
    pub codec_factor: usize,
    pub lo_pct: f64,
    pub hi_pct: f64,
}

impl RefinerTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.mask.codec_factor != self.codec_factor {
            return Err(Error::Config(format!(
                "mask codec factor {} disagrees with codec factor {}",
                self.mask.codec_factor, self.codec_factor
            )));
        }
        Ok(())
    }
}

/// One CSV row per iteration: `(iteration, loss, wall_time_s)`.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub rows: Vec<(usize, f64, f64)>,
    pub skipped_samples: usize,
}

/// A sample reduced to its per-iteration-constant latents.
struct Prepared {
    z_image: Feat,
    z_cond: Feat,
    z_label: Feat,
    mask: LatentMask,
}

fn prepare_sample(
    sample: &SceneSample,
    coarse: &CoarseModel,
    cfg: &RefinerTrainConfig,
) -> Result<Prepared> {
    let (label, _) = normalize_depth(&sample.depth, cfg.lo_pct, cfg.hi_pct)?;
    cfg.mask.check_dims(label.height(), label.width())?;

    let f = cfg.codec_factor;
    let z_image = encode_image(&sample.image, f)?.to_feat();
    let z_label = encode_depth(&label, f, LatentTag::DepthState)?.to_feat();

    let (lh, lw) = (label.height() / f, label.width() / f);
    let (z_cond, mask) = if cfg.variant.uses_conditioning() {
        let raw = predict_coarse(coarse, &sample.image, Some(&label))?;
        let conditioning = if cfg.variant.uses_alignment() {
            prealign_conditioning(&raw, &label)?
        } else {
            raw
        };
        let mask = if cfg.variant.uses_masking() {
            let m = build_latent_mask(&conditioning, &label, &cfg.mask)?;
            if m.ones_count() == 0 {
                return Err(Error::EmptyMask);
            }
            m
        } else {
            LatentMask::ones(lh, lw)
        };
        (encode_depth(&conditioning, f, LatentTag::DepthCond)?.to_feat(), mask)
    } else {
        (
            Feat::zeros((f * f, lh, lw)),
            LatentMask::ones(lh, lw),
        )
    };

    Ok(Prepared {
        z_image,
        z_cond,
        z_label,
        mask,
    })
}

/// Trains a refiner; `samples` come from a non-empty manifest.
pub fn train_refiner(
    samples: &[SceneSample],
    coarse: &CoarseModel,
    cfg: &RefinerTrainConfig,
) -> Result<(RefinerModel, TrainLog)> {
    if samples.is_empty() {
        return Err(Error::Config("training manifest is empty".into()));
    }
    cfg.validate()?;

    let image_channels = samples[0].image.channels();
    let arch = UNetConfig {
        in_channels: RefinerModel::input_channels(image_channels, cfg.codec_factor),
        out_channels: cfg.codec_factor * cfg.codec_factor,
        base_channels: cfg.base_channels,
        levels: cfg.levels,
        groups: cfg.groups,
        temb_dim: cfg.temb_dim,
    };
    arch.validate()?;

    // Conditioning and masks are deterministic per sample: build them once.
    let prepared_results: Vec<Result<Prepared>> = samples
        .par_iter()
        .map(|s| prepare_sample(s, coarse, cfg))
        .collect();
    let mut prepared = Vec::with_capacity(samples.len());
    let mut skipped_samples = 0usize;
    for r in prepared_results {
        match r {
            Ok(p) => prepared.push(p),
            Err(Error::DegenerateSource)
            | Err(Error::DegenerateDepth)
            | Err(Error::EmptyDepth)
            | Err(Error::EmptyMask) => skipped_samples += 1,
            Err(e) => return Err(e),
        }
    }
    if prepared.is_empty() {
        return Err(Error::Config(
            "every training sample was skipped as degenerate".into(),
        ));
    }

    let mut net = UNet::init(arch, cfg.seed)?;
    let mut opt = Adam::new(cfg.lr, net.param_count());
    let mut log = TrainLog {
        skipped_samples,
        ..TrainLog::default()
    };
    let t_max = cfg.schedule.steps();
    let started = Instant::now();

    for iter in 0..cfg.iterations {
        let slots: Vec<usize> = (0..cfg.batch_size).collect();
        let results: Vec<Result<(f64, UNet)>> = slots
            .par_iter()
            .map(|&slot| {
                let stream = (iter * cfg.batch_size + slot) as u64;
                let mut rng = SplitMix64::derive(cfg.seed ^ 0xD1FF_0000_0000_0000, stream);
                let p = &prepared[rng.range_usize(prepared.len())];
                let t = 1 + rng.range_usize(t_max);
                let mut eps = Feat::zeros(p.z_label.dim());
                for v in eps.iter_mut() {
                    *v = rng.next_normal();
                }
                let z_t = add_noise(&p.z_label, &eps, t, &cfg.schedule)?;
                let v_true = v_target(&p.z_label, &eps, t, &cfg.schedule)?;

                let mut z = Feat::zeros((
                    p.z_image.dim().0 + p.z_cond.dim().0 + z_t.dim().0,
                    z_t.dim().1,
                    z_t.dim().2,
                ));
                let cx = p.z_image.dim().0;
                let cc = p.z_cond.dim().0;
                z.slice_mut(ndarray::s![..cx, .., ..]).assign(&p.z_image);
                if cfg.variant.uses_conditioning() {
                    z.slice_mut(ndarray::s![cx..cx + cc, .., ..]).assign(&p.z_cond);
                }
                z.slice_mut(ndarray::s![cx + cc.., .., ..]).assign(&z_t);

                let (v_hat, cache) = net.forward_cached(&z, Some(t as f64))?;
                let (loss, dv) = masked_v_loss_grad(&v_hat, &v_true, &p.mask)?;
                let mut grads = net.zeros_like();
                net.backward(&cache, &dv, &mut grads);
                Ok((loss, grads))
            })
            .collect();

        let mut total = net.zeros_like();
        let mut loss_sum = 0.0;
        let mut n_ok = 0usize;
        for r in results {
            let (loss, g) = r?;
            total.add_params(&g);
            loss_sum += loss;
            n_ok += 1;
        }
        let scale = 1.0 / n_ok as f64;
        total.visit_params_mut(&mut |_, s| {
            for v in s.iter_mut() {
                *v *= scale;
            }
        });
        opt.step(&mut net, &total);
        log.rows
            .push((iter, loss_sum / n_ok as f64, started.elapsed().as_secs_f64()));
    }

    let model = RefinerModel {
        net,
        schedule: cfg.schedule.clone(),
        mask_cfg: cfg.mask,
        codec_factor: cfg.codec_factor,
        image_channels,
        variant: cfg.variant,
        lo_pct: cfg.lo_pct,
        hi_pct: cfg.hi_pct,
        meta: TrainMeta {
            seed: cfg.seed,
            iterations: cfg.iterations,
            losses: log.rows.iter().map(|r| r.1).collect(),
            skipped: skipped_samples,
        },
    };
    Ok((model, log))
}
