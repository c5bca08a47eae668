//! Deterministic DDIM sampling and end-to-end depth refinement.
//!
//! The reverse process starts from Gaussian noise and walks an evenly spaced
//! descending subset of the training timesteps. At each step the predicted
//! velocity is converted to a (clean latent, noise) pair via the velocity
//! algebra and re-noised to the previous timestep with zero stochasticity,
//! so the whole trajectory is a pure function of the starting noise.

use crate::coarse::{predict_coarse, CoarseModel};
use crate::error::{Error, Result};
use crate::nn::Feat;
use crate::raster::{normalize_depth, DepthMap, DepthUnits, ImageMap};
use crate::rng::SplitMix64;

use super::codec::{decode_depth, encode_depth, encode_image, LatentTag, LatentTensor};
use super::model::RefinerModel;
use super::schedule::{eps_from_v, z0_from_v, NoiseSchedule};

/// Anything that predicts a velocity for a latent state at a timestep.
///
/// The trained refiner implements this with its conditioning baked in;
/// tests implement it with exact-algebra oracles.
pub trait VelocityModel {
    fn velocity(&self, z_state: &Feat, t: usize) -> Result<Feat>;
}

/// The trained denoiser with fixed conditioning latents.
pub struct ConditionedDenoiser<'a> {
    pub model: &'a RefinerModel,
    pub z_image: Feat,
    pub z_cond: Feat,
}

impl VelocityModel for ConditionedDenoiser<'_> {
    fn velocity(&self, z_state: &Feat, t: usize) -> Result<Feat> {
        let z = self.model.assemble_input(&self.z_image, &self.z_cond, z_state)?;
        self.model.denoiser_forward(&z, t)
    }
}

/// Evenly spaced ascending timesteps `((i+1) * T) / steps`, ending at `T`.
pub fn ddim_timesteps(t_max: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 {
        return Err(Error::Config("ddim needs at least one step".into()));
    }
    if steps > t_max {
        return Err(Error::Config(format!(
            "ddim steps {steps} exceed schedule length {t_max}"
        )));
    }
    Ok((0..steps).map(|i| ((i + 1) * t_max) / steps).collect())
}

/// Deterministic DDIM: returns the final clean-latent estimate.
///
/// `shape` is the latent state shape; the starting noise is drawn from
/// `seed` so identical seeds give identical outputs.
pub fn ddim_sample(
    model: &dyn VelocityModel,
    sched: &NoiseSchedule,
    shape: (usize, usize, usize),
    steps: usize,
    seed: u64,
) -> Result<Feat> {
    let ts = ddim_timesteps(sched.steps(), steps)?;
    let mut rng = SplitMix64::derive(seed, 0xDD1A);
    let mut z = Feat::zeros(shape);
    for v in z.iter_mut() {
        *v = rng.next_normal();
    }
    for i in (0..ts.len()).rev() {
        let t = ts[i];
        let abar = sched.alpha_bar(t)?;
        let v = model.velocity(&z, t)?;
        let z0 = z0_from_v(&z, &v, abar);
        let eps = eps_from_v(&z, &v, abar);
        let abar_prev = if i == 0 { 1.0 } else { sched.alpha_bar(ts[i - 1])? };
        z = z0 * abar_prev.sqrt() + eps * (1.0 - abar_prev).sqrt();
    }
    Ok(z)
}

/// Full inference: coarse prediction, normalization, conditioning encode,
/// DDIM, decode. Returns a normalized (`[-1, 1]`) refined map.
///
/// `gt` is forwarded to the coarse model and is only required by the
/// degradation oracle; any [`CoarseModel`] plugs in here, including ones the
/// refiner never saw during training.
pub fn refine_depth(
    model: &RefinerModel,
    coarse: &CoarseModel,
    x: &ImageMap,
    gt: Option<&DepthMap>,
    steps: usize,
    seed: u64,
) -> Result<DepthMap> {
    let f = model.codec_factor;
    let w = model.mask_cfg.patch_size;
    if x.height() % f != 0 || x.width() % f != 0 || x.height() % w != 0 || x.width() % w != 0 {
        return Err(Error::Shape(format!(
            "input {}x{} must divide by codec factor {f} and patch size {w}",
            x.height(),
            x.width()
        )));
    }

    // The oracle degrades a normalized label so its blur/quantization run in
    // the same value range as during training.
    let gt_norm;
    let gt_for_coarse = match gt {
        Some(g) if g.units() != DepthUnits::Normalized => {
            gt_norm = normalize_depth(g, model.lo_pct, model.hi_pct)?.0;
            Some(&gt_norm)
        }
        other => other,
    };
    let coarse_pred = predict_coarse(coarse, x, gt_for_coarse)?;
    let (coarse_norm, _) = normalize_depth(&coarse_pred, model.lo_pct, model.hi_pct)?;

    let z_x = encode_image(x, f)?;
    let z_cond = encode_depth(&coarse_norm, f, LatentTag::DepthCond)?;
    let denoiser = ConditionedDenoiser {
        model,
        z_image: z_x.to_feat(),
        z_cond: z_cond.to_feat(),
    };
    let shape = (model.state_channels(), x.height() / f, x.width() / f);
    let z0 = ddim_sample(&denoiser, &model.schedule, shape, steps, seed)?;
    decode_depth(&LatentTensor::from_feat(&z0, LatentTag::DepthState), f)
}
