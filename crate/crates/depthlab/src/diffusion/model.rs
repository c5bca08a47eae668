//! The refiner bundle: denoiser network plus everything needed to run it.
//!
//! A [`RefinerModel`] owns the trained network together with its noise
//! schedule, mask configuration, codec factor, normalization percentiles,
//! and training variant, and (de)serializes the lot through the shared
//! checkpoint container so a reloaded model reproduces its predictions bit
//! for bit.

use crate::checkpoint::{blobs_from_net, load_net_from_blobs, Checkpoint};
use crate::config::KvMap;
use crate::error::{Error, Result};
use crate::maskgen::{MaskConfig, PoolMode};
use crate::nn::{Feat, UNet, UNetConfig};

use super::schedule::{make_schedule, NoiseSchedule, ScheduleKind};

/// Training variant (ablation rows): which pipeline pieces are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Depth conditioning + global pre-alignment + patch masking.
    Full,
    /// No depth conditioning at all (image conditioning only).
    NoCond,
    /// Conditioning on, but without pre-alignment (and without masking).
    NoAlign,
    /// Conditioning and pre-alignment on, masking off.
    NoMask,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::NoCond, Variant::NoAlign, Variant::NoMask, Variant::Full];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoCond => "no-cond",
            Variant::NoAlign => "no-align",
            Variant::NoMask => "no-mask",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no-cond" => Ok(Variant::NoCond),
            "no-align" => Ok(Variant::NoAlign),
            "no-mask" => Ok(Variant::NoMask),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (expected full, no-cond, no-align, no-mask)"
            ))),
        }
    }

    pub fn uses_conditioning(self) -> bool {
        !matches!(self, Variant::NoCond)
    }

    pub fn uses_alignment(self) -> bool {
        matches!(self, Variant::Full | Variant::NoMask)
    }

    pub fn uses_masking(self) -> bool {
        matches!(self, Variant::Full)
    }
}

/// Training provenance stored with the model.
#[derive(Debug, Clone, Default)]
pub struct TrainMeta {
    pub seed: u64,
    pub iterations: usize,
    /// Per-iteration mean masked loss.
    pub losses: Vec<f64>,
    /// Samples skipped for degenerate alignment or empty masks.
    pub skipped: usize,
}

/// A trained (or freshly initialized) diffusion refiner.
#[derive(Debug, Clone)]
pub struct RefinerModel {
    pub net: UNet,
    pub schedule: NoiseSchedule,
    pub mask_cfg: MaskConfig,
    pub codec_factor: usize,
    pub image_channels: usize,
    pub variant: Variant,
    pub lo_pct: f64,
    pub hi_pct: f64,
    pub meta: TrainMeta,
}

impl RefinerModel {
    /// Denoiser input channels: image block + depth-cond block + state block.
    pub fn input_channels(image_channels: usize, codec_factor: usize) -> usize {
        let f2 = codec_factor * codec_factor;
        (image_channels + 2) * f2
    }

    /// Latent channels of a single depth plane.
    pub fn state_channels(&self) -> usize {
        self.codec_factor * self.codec_factor
    }

    /// Concatenates `[image | cond | state]` latent blocks into one input.
    ///
    /// The conditioning block is zeroed when the variant trains without
    /// depth conditioning, preserving the input layout.
    pub fn assemble_input(&self, z_x: &Feat, z_cond: &Feat, z_state: &Feat) -> Result<Feat> {
        let (cx, h, w) = z_x.dim();
        let (cc, hc, wc) = z_cond.dim();
        let (cs, hs, ws) = z_state.dim();
        if (h, w) != (hc, wc) || (h, w) != (hs, ws) {
            return Err(Error::Shape(format!(
                "latent grids differ: image {h}x{w}, cond {hc}x{wc}, state {hs}x{ws}"
            )));
        }
        let f2 = self.state_channels();
        if cx != self.image_channels * f2 || cc != f2 || cs != f2 {
            return Err(Error::Shape(format!(
                "latent channels {cx}/{cc}/{cs} do not match image_channels={} f={}",
                self.image_channels, self.codec_factor
            )));
        }
        let mut z = Feat::zeros((cx + cc + cs, h, w));
        z.slice_mut(ndarray::s![..cx, .., ..]).assign(z_x);
        if self.variant.uses_conditioning() {
            z.slice_mut(ndarray::s![cx..cx + cc, .., ..]).assign(z_cond);
        }
        z.slice_mut(ndarray::s![cx + cc.., .., ..]).assign(z_state);
        Ok(z)
    }

    /// Runs the denoiser on an already concatenated latent at timestep `t`.
    pub fn denoiser_forward(&self, z: &Feat, t: usize) -> Result<Feat> {
        self.schedule.alpha_bar(t)?; // range check
        self.net.forward(z, Some(t as f64))
    }

    /// Serializes the model (with a run-config echo) into the shared
    /// checkpoint container.
    pub fn checkpoint(&self, run_config_echo: &str) -> Checkpoint {
        let mut kv = KvMap::new();
        kv.set("kind", "refiner");
        kv.set("arch.base_channels", self.net.cfg.base_channels);
        kv.set("arch.levels", self.net.cfg.levels);
        kv.set("arch.groups", self.net.cfg.groups);
        kv.set("arch.temb_dim", self.net.cfg.temb_dim);
        kv.set("arch.image_channels", self.image_channels);
        kv.set("schedule.kind", self.schedule.kind.name());
        kv.set("schedule.timesteps", self.schedule.steps());
        kv.set("schedule.beta_start", self.schedule.beta_start);
        kv.set("schedule.beta_end", self.schedule.beta_end);
        kv.set("mask.patch_size", self.mask_cfg.patch_size);
        kv.set("mask.threshold", self.mask_cfg.threshold);
        kv.set("mask.pool", self.mask_cfg.pool.name());
        kv.set("codec_factor", self.codec_factor);
        kv.set("variant", self.variant.name());
        kv.set("norm.lo_pct", self.lo_pct);
        kv.set("norm.hi_pct", self.hi_pct);
        kv.set("meta.seed", self.meta.seed);
        kv.set("meta.iterations", self.meta.iterations);
        kv.set("meta.skipped", self.meta.skipped);
        for (i, line) in run_config_echo.lines().enumerate() {
            kv.set(&format!("run.{i:03}"), line);
        }
        let mut blobs = blobs_from_net(&self.net);
        blobs.push(("__meta.losses".to_string(), self.meta.losses.clone()));
        Checkpoint { config: kv, blobs }
    }

    /// Rebuilds a model from a checkpoint.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<RefinerModel> {
        if ckpt.config.get("kind") != Some("refiner") {
            return Err(Error::Format(format!(
                "checkpoint kind {:?} is not a refiner",
                ckpt.config.get("kind")
            )));
        }
        let codec_factor: usize = ckpt.config.get_parse("codec_factor")?;
        let image_channels: usize = ckpt.config.get_parse("arch.image_channels")?;
        let arch = UNetConfig {
            in_channels: RefinerModel::input_channels(image_channels, codec_factor),
            out_channels: codec_factor * codec_factor,
            base_channels: ckpt.config.get_parse("arch.base_channels")?,
            levels: ckpt.config.get_parse("arch.levels")?,
            groups: ckpt.config.get_parse("arch.groups")?,
            temb_dim: ckpt.config.get_parse("arch.temb_dim")?,
        };
        let seed: u64 = ckpt.config.get_parse("meta.seed")?;
        let mut net = UNet::init(arch, seed)?;
        load_net_from_blobs(&mut net, ckpt)?;
        let schedule = make_schedule(
            ScheduleKind::parse(ckpt.config.get("schedule.kind").unwrap_or("scaled_linear"))?,
            ckpt.config.get_parse("schedule.timesteps")?,
            ckpt.config.get_parse("schedule.beta_start")?,
            ckpt.config.get_parse("schedule.beta_end")?,
        )?;
        let mut mask_cfg = MaskConfig::new(
            ckpt.config.get_parse("mask.patch_size")?,
            ckpt.config.get_parse("mask.threshold")?,
            codec_factor,
        )?;
        mask_cfg.pool = PoolMode::parse(ckpt.config.get("mask.pool").unwrap_or("max"))?;
        Ok(RefinerModel {
            net,
            schedule,
            mask_cfg,
            codec_factor,
            image_channels,
            variant: Variant::parse(ckpt.config.get("variant").unwrap_or("full"))?,
            lo_pct: ckpt.config.get_parse("norm.lo_pct")?,
            hi_pct: ckpt.config.get_parse("norm.hi_pct")?,
            meta: TrainMeta {
                seed,
                iterations: ckpt.config.get_parse("meta.iterations")?,
                losses: ckpt.blob("__meta.losses")?.to_vec(),
                skipped: ckpt.config.get_parse("meta.skipped")?,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_flags() {
        assert!(Variant::Full.uses_conditioning() && Variant::Full.uses_alignment());
        assert!(Variant::Full.uses_masking());
        assert!(!Variant::NoCond.uses_conditioning());
        assert!(Variant::NoAlign.uses_conditioning() && !Variant::NoAlign.uses_alignment());
        assert!(Variant::NoMask.uses_alignment() && !Variant::NoMask.uses_masking());
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
        assert!(Variant::parse("bogus").is_err());
    }

    #[test]
    fn assemble_zeroes_conditioning_when_ablated() {
        let make = |variant| {
            let arch = UNetConfig {
                in_channels: RefinerModel::input_channels(1, 1),
                out_channels: 1,
                base_channels: 2,
                levels: 1,
                groups: 1,
                temb_dim: 8,
            };
            RefinerModel {
                net: UNet::init(arch, 0).unwrap(),
                schedule: make_schedule(ScheduleKind::Linear, 10, 0.01, 0.02).unwrap(),
                mask_cfg: MaskConfig::new(2, 0.1, 1).unwrap(),
                codec_factor: 1,
                image_channels: 1,
                variant,
                lo_pct: 2.0,
                hi_pct: 98.0,
                meta: TrainMeta::default(),
            }
        };
        let z_x = Feat::from_elem((1, 4, 4), 0.3);
        let z_cond = Feat::from_elem((1, 4, 4), 0.7);
        let z_state = Feat::from_elem((1, 4, 4), -0.2);
        let full = make(Variant::Full).assemble_input(&z_x, &z_cond, &z_state).unwrap();
        assert_eq!(full[[1, 0, 0]], 0.7);
        let ablated = make(Variant::NoCond).assemble_input(&z_x, &z_cond, &z_state).unwrap();
        assert_eq!(ablated[[1, 0, 0]], 0.0);
        assert_eq!(ablated[[0, 0, 0]], 0.3);
        assert_eq!(ablated[[2, 0, 0]], -0.2);
    }
}
