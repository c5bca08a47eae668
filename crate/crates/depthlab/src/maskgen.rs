//! Patchwise agreement masks.
//!
//! Two depth rasters are split into non-overlapping `w x w` patches and each
//! patch pair is compared by Euclidean distance. Pairs whose distance stays
//! within `w * eta` (an average per-pixel tolerance of `eta`) are kept; the
//! resulting binary mask is broadcast back to pixel resolution and then
//! pooled down to the latent grid. Training only supervises kept regions, so
//! the threshold trades conditioning strength against detail refinement.

use crate::error::{Error, Result};
use crate::raster::DepthMap;

/// How the pixel mask is pooled to latent resolution.
///
/// Max-pooling keeps a latent cell when any pixel under it is kept; min
/// requires the whole window to agree. Max is the default; min is exposed
/// for ablation harnesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Min,
}

impl PoolMode {
    pub fn name(self) -> &'static str {
        match self {
            PoolMode::Max => "max",
            PoolMode::Min => "min",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(PoolMode::Max),
            "min" => Ok(PoolMode::Min),
            other => Err(Error::Config(format!("unknown pool mode {other:?}"))),
        }
    }
}

/// Patch size, tolerance, and codec factor for mask construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskConfig {
    /// Patch side length in pixels.
    pub patch_size: usize,
    /// Average per-pixel tolerance in normalized depth units.
    pub threshold: f64,
    /// Downscale factor between pixel and latent resolution.
    pub codec_factor: usize,
    pub pool: PoolMode,
}

impl MaskConfig {
    pub fn new(patch_size: usize, threshold: f64, codec_factor: usize) -> Result<Self> {
        if patch_size == 0 || codec_factor == 0 {
            return Err(Error::Config("patch size and codec factor must be positive".into()));
        }
        if !(threshold > 0.0) {
            return Err(Error::Config(format!("threshold must be > 0, got {threshold}")));
        }
        Ok(MaskConfig {
            patch_size,
            threshold,
            codec_factor,
            pool: PoolMode::Max,
        })
    }

    /// Checks raster dimensions divide evenly by the patch size and factor.
    pub fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        for (name, q) in [("patch size", self.patch_size), ("codec factor", self.codec_factor)] {
            if height % q != 0 || width % q != 0 {
                return Err(Error::Shape(format!(
                    "raster {height}x{width} not divisible by {name} {q}"
                )));
            }
        }
        Ok(())
    }
}

/// Binary raster at pixel resolution, constant within each patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMask {
    pub height: usize,
    pub width: usize,
    pub patch_size: usize,
    pub data: Vec<u8>,
}

impl PatchMask {
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Binary raster at latent resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl LatentMask {
    /// All-ones mask (masking disabled).
    pub fn ones(height: usize, width: usize) -> Self {
        LatentMask {
            height,
            width,
            data: vec![1u8; height * width],
        }
    }

    pub fn ones_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

fn check_pair(a: &DepthMap, b: &DepthMap, q: usize, what: &str) -> Result<(usize, usize)> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::Shape(format!(
            "mask inputs differ in shape: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    if q == 0 {
        return Err(Error::Shape(format!("{what} must be positive")));
    }
    if a.height() % q != 0 || a.width() % q != 0 {
        return Err(Error::Shape(format!(
            "raster {}x{} not divisible by {what} {q}",
            a.height(),
            a.width()
        )));
    }
    Ok((a.height(), a.width()))
}

/// Per-patch Euclidean (Frobenius) distance between two rasters.
///
/// The output grid has one value per `w x w` patch, row-major.
pub fn patch_distance(a: &DepthMap, b: &DepthMap, patch_size: usize) -> Result<Vec<f64>> {
    let (h, w) = check_pair(a, b, patch_size, "patch size")?;
    let (ph, pw) = (h / patch_size, w / patch_size);
    let mut out = Vec::with_capacity(ph * pw);
    for py in 0..ph {
        for px in 0..pw {
            let mut sq = 0.0f64;
            for dy in 0..patch_size {
                let y = py * patch_size + dy;
                for dx in 0..patch_size {
                    let x = px * patch_size + dx;
                    let d = a.get(y, x) as f64 - b.get(y, x) as f64;
                    sq += d * d;
                }
            }
            out.push(sq.sqrt());
        }
    }
    Ok(out)
}

/// Pixel-space agreement mask: patch `n` is kept (1) iff
/// `Dist(a_n, b_n) <= w * eta`, inclusive on the boundary.
pub fn build_pixel_mask(a: &DepthMap, b: &DepthMap, cfg: &MaskConfig) -> Result<PatchMask> {
    let (h, w) = check_pair(a, b, cfg.patch_size, "patch size")?;
    let dist = patch_distance(a, b, cfg.patch_size)?;
    let limit = cfg.patch_size as f64 * cfg.threshold;
    let pw = w / cfg.patch_size;
    let mut data = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let patch = (y / cfg.patch_size) * pw + x / cfg.patch_size;
            data[y * w + x] = u8::from(dist[patch] <= limit);
        }
    }
    Ok(PatchMask {
        height: h,
        width: w,
        patch_size: cfg.patch_size,
        data,
    })
}

/// Pools the pixel mask down to latent resolution with window = stride = `f`.
pub fn downscale_mask(mask: &PatchMask, factor: usize, pool: PoolMode) -> Result<LatentMask> {
    if factor == 0 {
        return Err(Error::Shape("codec factor must be positive".into()));
    }
    if mask.height % factor != 0 || mask.width % factor != 0 {
        return Err(Error::Shape(format!(
            "mask {}x{} not divisible by codec factor {}",
            mask.height, mask.width, factor
        )));
    }
    let (lh, lw) = (mask.height / factor, mask.width / factor);
    let mut data = vec![0u8; lh * lw];
    for ly in 0..lh {
        for lx in 0..lw {
            let mut acc = match pool {
                PoolMode::Max => 0u8,
                PoolMode::Min => 1u8,
            };
            for dy in 0..factor {
                for dx in 0..factor {
                    let v = mask.get(ly * factor + dy, lx * factor + dx);
                    acc = match pool {
                        PoolMode::Max => acc.max(v),
                        PoolMode::Min => acc.min(v),
                    };
                }
            }
            data[ly * lw + lx] = acc;
        }
    }
    Ok(LatentMask {
        height: lh,
        width: lw,
        data,
    })
}

/// Full mask pipeline: pixel mask from the raster pair, pooled to latent.
pub fn build_latent_mask(a: &DepthMap, b: &DepthMap, cfg: &MaskConfig) -> Result<LatentMask> {
    let pixel = build_pixel_mask(a, b, cfg)?;
    downscale_mask(&pixel, cfg.codec_factor, cfg.pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::DepthUnits;
    use crate::rng::SplitMix64;

    fn map_from(values: Vec<f32>, h: usize, w: usize) -> DepthMap {
        DepthMap::dense(h, w, values, DepthUnits::Metric).unwrap()
    }

    fn random_pair(seed: u64, h: usize, w: usize, spread: f64) -> (DepthMap, DepthMap) {
        let mut rng = SplitMix64::new(seed);
        let a: Vec<f32> = (0..h * w).map(|_| rng.range_f64(-1.0, 1.0) as f32).collect();
        let b: Vec<f32> = a
            .iter()
            .map(|&v| (v as f64 + rng.range_f64(-spread, spread)) as f32)
            .collect();
        (map_from(a, h, w), map_from(b, h, w))
    }

    #[test]
    fn identical_inputs_have_zero_distance() {
        let (a, _) = random_pair(1, 8, 8, 0.0);
        let d = patch_distance(&a, &a, 4).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_difference_has_closed_form_distance() {
        // w=2 patch differing by 0.2 at every pixel: sqrt(4 * 0.04) = 0.4.
        let a = map_from(vec![0.0; 4], 2, 2);
        let b = map_from(vec![0.2; 4], 2, 2);
        let d = patch_distance(&a, &b, 2).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d[0] - 0.4).abs() < 1e-7);
    }

    #[test]
    fn whole_raster_patch_gives_single_value() {
        let (a, b) = random_pair(2, 8, 8, 0.1);
        let d = patch_distance(&a, &b, 8).unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn non_divisible_dims_are_a_shape_error() {
        let (a, b) = random_pair(3, 6, 6, 0.1);
        assert!(matches!(patch_distance(&a, &b, 4), Err(Error::Shape(_))));
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        // Exact-arithmetic boundary: w=2, eta=0.125 -> limit 0.25. A patch
        // differing by exactly 0.125 per pixel has distance sqrt(4*0.125^2)
        // = 0.25, every quantity exactly representable in binary.
        let cfg = MaskConfig::new(2, 0.125, 1).unwrap();
        let a = map_from(vec![0.0; 4], 2, 2);
        let b = map_from(vec![0.125; 4], 2, 2);
        let m = build_pixel_mask(&a, &b, &cfg).unwrap();
        assert!(m.data.iter().all(|&v| v == 1), "boundary patch must be kept");

        // One ulp above the boundary is dropped.
        let just_over = f32::from_bits(0.125f32.to_bits() + 1);
        let b2 = map_from(vec![just_over; 4], 2, 2);
        let m2 = build_pixel_mask(&a, &b2, &cfg).unwrap();
        assert!(m2.data.iter().all(|&v| v == 0));
    }

    #[test]
    fn default_threshold_keeps_079_drops_081() {
        // w=8 and eta=0.1 give limit 0.8.
        let cfg = MaskConfig::new(8, 0.1, 1).unwrap();
        for (dist_target, expect) in [(0.79f64, 1u8), (0.81, 0u8)] {
            // Uniform per-pixel difference d gives distance 8*d, so d = target/8.
            let per_px = (dist_target / 8.0) as f32;
            let a = map_from(vec![0.0; 64], 8, 8);
            let b = map_from(vec![per_px; 64], 8, 8);
            let m = build_pixel_mask(&a, &b, &cfg).unwrap();
            assert!(m.data.iter().all(|&v| v == expect), "dist {dist_target}");
        }
    }

    #[test]
    fn equal_inputs_give_all_ones() {
        let (a, _) = random_pair(5, 16, 16, 0.0);
        let cfg = MaskConfig::new(4, 0.01, 1).unwrap();
        let m = build_pixel_mask(&a, &a, &cfg).unwrap();
        assert!(m.data.iter().all(|&v| v == 1));
    }

    #[test]
    fn huge_threshold_keeps_everything() {
        let (a, b) = random_pair(6, 16, 16, 2.0);
        let cfg = MaskConfig::new(4, 1e12, 1).unwrap();
        let m = build_pixel_mask(&a, &b, &cfg).unwrap();
        assert!(m.data.iter().all(|&v| v == 1));
    }

    #[test]
    fn monotone_in_threshold_symmetric_and_reflexive() {
        for seed in 0..20 {
            let (a, b) = random_pair(seed, 16, 16, 0.15);
            let mut cfg1 = MaskConfig::new(4, 0.05, 1).unwrap();
            let mut cfg2 = MaskConfig::new(4, 0.15, 1).unwrap();
            cfg1.pool = PoolMode::Max;
            cfg2.pool = PoolMode::Max;
            let m1 = build_pixel_mask(&a, &b, &cfg1).unwrap();
            let m2 = build_pixel_mask(&a, &b, &cfg2).unwrap();
            for (x, y) in m1.data.iter().zip(&m2.data) {
                assert!(x <= y, "monotonicity in threshold");
            }
            let ab = build_pixel_mask(&a, &b, &cfg1).unwrap();
            let ba = build_pixel_mask(&b, &a, &cfg1).unwrap();
            assert_eq!(ab, ba, "symmetry");
            let aa = build_pixel_mask(&a, &a, &cfg1).unwrap();
            assert!(aa.data.iter().all(|&v| v == 1), "reflexivity");
        }
    }

    #[test]
    fn patch_equals_factor_gives_per_patch_latent_mask() {
        let (a, b) = random_pair(9, 16, 16, 0.12);
        let cfg = MaskConfig::new(8, 0.1, 8).unwrap();
        let pixel = build_pixel_mask(&a, &b, &cfg).unwrap();
        let latent = downscale_mask(&pixel, 8, PoolMode::Max).unwrap();
        assert_eq!(latent.height, 2);
        assert_eq!(latent.width, 2);
        // Each window is patch-constant, so the latent mask equals the patch grid.
        for ly in 0..2 {
            for lx in 0..2 {
                assert_eq!(latent.data[ly * 2 + lx], pixel.get(ly * 8, lx * 8));
            }
        }
    }

    #[test]
    fn all_zero_mask_stays_zero() {
        let m = PatchMask {
            height: 8,
            width: 8,
            patch_size: 4,
            data: vec![0; 64],
        };
        let l = downscale_mask(&m, 4, PoolMode::Max).unwrap();
        assert!(l.data.iter().all(|&v| v == 0));
    }

    #[test]
    fn kept_patch_spanning_two_windows_marks_both() {
        // One 16x16 raster, patch 16 (single patch, kept), factor 8: both
        // latent cells under the kept patch go to 1.
        let (a, _) = random_pair(12, 16, 16, 0.0);
        let cfg = MaskConfig::new(16, 0.1, 8).unwrap();
        let pixel = build_pixel_mask(&a, &a, &cfg).unwrap();
        let latent = downscale_mask(&pixel, 8, PoolMode::Max).unwrap();
        assert!(latent.data.iter().all(|&v| v == 1));

        // Conversely a half-kept raster: hand-build a mask where the left
        // 16x8 half is 1; with factor 8 both left windows are 1, right are 0.
        let mut data = vec![0u8; 256];
        for y in 0..16 {
            for x in 0..8 {
                data[y * 16 + x] = 1;
            }
        }
        let m = PatchMask { height: 16, width: 16, patch_size: 8, data };
        let l = downscale_mask(&m, 8, PoolMode::Max).unwrap();
        assert_eq!(l.data, vec![1, 0, 1, 0]);
    }

    #[test]
    fn maxpool_dominates_mean_and_minpool_is_stricter() {
        for seed in 40..50 {
            let (a, b) = random_pair(seed, 16, 16, 0.2);
            let cfg = MaskConfig::new(4, 0.1, 2).unwrap();
            let pixel = build_pixel_mask(&a, &b, &cfg).unwrap();
            let lmax = downscale_mask(&pixel, 2, PoolMode::Max).unwrap();
            let lmin = downscale_mask(&pixel, 2, PoolMode::Min).unwrap();
            assert!(lmax.mean() >= pixel.mean() - 1e-12);
            for (hi, lo) in lmax.data.iter().zip(&lmin.data) {
                assert!(hi >= lo);
            }
        }
    }
}
