//! Run configuration: one flat `key=value` block for every hyperparameter.
//!
//! The same text format is used for config files on disk, the `config.txt`
//! echoed into run directories, and the configuration block embedded in
//! checkpoints — so any artifact can be traced back to the exact settings
//! that produced it. Keys are snake_case, one per line, `#` starts a
//! comment. Serialization order is fixed so identical configs produce
//! identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ordered key=value map with typed accessors.
#[derive(Debug, Clone, Default)]
pub struct KvMap {
    entries: Vec<(String, String)>,
    index: BTreeMap<String, usize>,
}

impl KvMap {
    pub fn new() -> Self {
        KvMap::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.index.get(key) {
            Some(&i) => self.entries[i].1 = value,
            None => {
                self.index.insert(key.to_string(), self.entries.len());
                self.entries.push((key.to_string(), value));
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.index.get(key).map(|&i| self.entries[i].1.as_str())
    }

    pub fn get_parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::Config(format!("missing config key {key:?}")))?;
        raw.parse::<T>()
            .map_err(|e| Error::Config(format!("config key {key:?}: {e}")))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = KvMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => map.set(k.trim(), v.trim()),
                None => {
                    return Err(Error::Config(format!(
                        "line {}: expected key=value, got {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(map)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "{k}={v}").expect("string write");
        }
        out
    }
}

macro_rules! run_config {
    ($(#[doc = $doc:literal] $field:ident : $ty:ty = $default:expr),* $(,)?) => {
        /// Every tunable of the pipeline, with desk-scale defaults.
        ///
        /// Reference-protocol values that differ from the desk defaults
        /// (full-scale batch size, training length, and so on) are listed in
        /// the CLI `--help` text.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $(#[doc = $doc] pub $field: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $($field: $default,)* }
            }
        }

        impl RunConfig {
            /// Fixed-order serialization; `parse` of the output round-trips.
            pub fn to_kv(&self) -> KvMap {
                let mut map = KvMap::new();
                $(map.set(stringify!($field), &self.$field);)*
                map
            }

            /// Builds a config from a map, erroring on unknown keys.
            pub fn from_kv(map: &KvMap) -> Result<Self> {
                let defaults = RunConfig::default();
                let known: &[&str] = &[$(stringify!($field)),*];
                for key in map.keys() {
                    if !known.contains(&key) {
                        return Err(Error::Config(format!("unknown config key {key:?}")));
                    }
                }
                Ok(RunConfig {
                    $($field: match map.get(stringify!($field)) {
                        Some(_) => map.get_parse(stringify!($field))?,
                        None => defaults.$field,
                    },)*
                })
            }
        }
    };
}

run_config! {
    /// Master seed; every stream derives from it.
    seed: u64 = 7,
    /// Raster height in pixels.
    height: usize = 64,
    /// Raster width in pixels.
    width: usize = 64,
    /// Primitives per generated scene.
    n_primitives: usize = 8,
    /// Comma-separated primitive kinds to sample from.
    kinds: String = "plane,sphere,box".to_string(),
    /// Pinhole focal length in pixels (0 = use raster width).
    focal_px: f64 = 0.0,
    /// Lower normalization percentile.
    lo_pct: f64 = 2.0,
    /// Upper normalization percentile.
    hi_pct: f64 = 98.0,
    /// Mask patch side length (pixels).
    patch_size: usize = 8,
    /// Mask tolerance per pixel in normalized units.
    threshold: f64 = 0.1,
    /// Pixel-to-latent codec factor (1 = pixel space).
    codec_factor: usize = 1,
    /// Latent mask pooling: max or min.
    latent_pool: String = "max".to_string(),
    /// Diffusion process length T.
    timesteps: usize = 1000,
    /// Beta spacing: scaled_linear or linear.
    schedule: String = "scaled_linear".to_string(),
    /// First beta.
    beta_start: f64 = 0.00085,
    /// Last beta.
    beta_end: f64 = 0.012,
    /// Denoiser base channel width.
    base_channels: usize = 12,
    /// Denoiser resolution levels.
    levels: usize = 3,
    /// GroupNorm group target.
    groups: usize = 4,
    /// Timestep embedding width.
    temb_dim: usize = 64,
    /// Refiner Adam learning rate (desk scale; reference protocol uses 3e-5).
    lr: f64 = 1e-3,
    /// Refiner batch size (reference protocol uses 32).
    batch_size: usize = 8,
    /// Refiner training iterations (reference protocol uses 5000).
    iterations: usize = 2000,
    /// DDIM sampling steps at inference.
    ddim_steps: usize = 50,
    /// Test-time ensemble size.
    ensemble: usize = 10,
    /// Training variant: full, no-cond, no-align, no-mask.
    variant: String = "full".to_string(),
    /// Degradation oracle: Gaussian blur sigma (low-res pixels).
    degrade_blur_sigma: f64 = 1.5,
    /// Degradation oracle: box downscale factor.
    degrade_downscale: usize = 2,
    /// Degradation oracle: fixed affine scale.
    degrade_scale: f64 = 1.0,
    /// Degradation oracle: fixed affine shift.
    degrade_shift: f64 = 0.0,
    /// Degradation oracle: quantization levels (<=1 disables).
    degrade_quantize: usize = 16,
    /// Degradation oracle: per-sample random affine jitter on/off.
    degrade_jitter: bool = true,
    /// Regressor base channel width.
    reg_base_channels: usize = 8,
    /// Regressor resolution levels.
    reg_levels: usize = 3,
    /// Regressor GroupNorm group target.
    reg_groups: usize = 4,
    /// Regressor Adam learning rate.
    reg_lr: f64 = 2e-3,
    /// Regressor training iterations.
    reg_iterations: usize = 1500,
    /// Regressor batch size.
    reg_batch_size: usize = 8,
}

impl RunConfig {
    /// Loads a config file and applies it over the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        RunConfig::from_kv(&KvMap::parse(&text)?)
    }

    /// Effective focal length (defaulting to the raster width).
    pub fn effective_focal(&self) -> f64 {
        if self.focal_px > 0.0 {
            self.focal_px
        } else {
            self.width as f64
        }
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = RunConfig::default();
        let text = cfg.to_text();
        let back = RunConfig::from_kv(&KvMap::parse(&text).unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_files_fall_back_to_defaults() {
        let map = KvMap::parse("seed=42\nthreshold=0.2\n# comment\n").unwrap();
        let cfg = RunConfig::from_kv(&map).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.threshold, 0.2);
        assert_eq!(cfg.patch_size, RunConfig::default().patch_size);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let map = KvMap::parse("not_a_key=1").unwrap();
        assert!(matches!(RunConfig::from_kv(&map), Err(Error::Config(_))));
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(KvMap::parse("just some words").is_err());
    }

    #[test]
    fn serialization_order_is_stable() {
        let a = RunConfig::default().to_text();
        let b = RunConfig::default().to_text();
        assert_eq!(a, b);
        assert!(a.starts_with("seed="));
    }
}
