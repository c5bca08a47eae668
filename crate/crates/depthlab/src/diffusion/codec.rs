//! Deterministic lossless pixel/latent codec.
//!
//! The latent space is a space-to-depth rearrangement: every `f x f` pixel
//! block of a base channel becomes `f*f` latent channels at `1/f` resolution.
//! The map is a pure permutation — lossless, bit-exact to invert — and
//! `f = 1` is the identity (pixel-space mode). Latent channel `c*f*f +
//! dy*f + dx` at `(y, x)` holds pixel `(y*f + dy, x*f + dx)` of base
//! channel `c`.

use crate::error::{Error, Result};
use crate::nn::Feat;
use crate::raster::{DepthMap, DepthUnits, ImageMap};

/// What a latent block carries, for interface hygiene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentTag {
    ImageCond,
    DepthCond,
    DepthState,
}

/// A `[channels, height, width]` f64 latent block.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    pub tag: LatentTag,
}

impl LatentTensor {
    pub fn from_feat(feat: &Feat, tag: LatentTag) -> Self {
        let (c, h, w) = feat.dim();
        LatentTensor {
            channels: c,
            height: h,
            width: w,
            data: feat.iter().copied().collect(),
            tag,
        }
    }

    pub fn to_feat(&self) -> Feat {
        Feat::from_shape_vec((self.channels, self.height, self.width), self.data.clone())
            .expect("latent buffer matches its shape")
    }
}

/// Space-to-depth encode of a planar raster (`base_channels` planes of
/// `h x w`, concatenated) by factor `f`.
pub fn encode(
    values: &[f64],
    base_channels: usize,
    height: usize,
    width: usize,
    factor: usize,
    tag: LatentTag,
) -> Result<LatentTensor> {
    if factor == 0 {
        return Err(Error::Shape("codec factor must be positive".into()));
    }
    if height % factor != 0 || width % factor != 0 {
        return Err(Error::Shape(format!(
            "raster {height}x{width} not divisible by codec factor {factor}"
        )));
    }
    if values.len() != base_channels * height * width {
        return Err(Error::Shape(format!(
            "buffer length {} does not match {}x{}x{}",
            values.len(),
            base_channels,
            height,
            width
        )));
    }
    let (lh, lw) = (height / factor, width / factor);
    let lc = base_channels * factor * factor;
    let mut data = vec![0f64; lc * lh * lw];
    for c in 0..base_channels {
        for dy in 0..factor {
            for dx in 0..factor {
                let lch = (c * factor + dy) * factor + dx;
                for ly in 0..lh {
                    for lx in 0..lw {
                        let src = (c * height + ly * factor + dy) * width + lx * factor + dx;
                        data[(lch * lh + ly) * lw + lx] = values[src];
                    }
                }
            }
        }
    }
    Ok(LatentTensor {
        channels: lc,
        height: lh,
        width: lw,
        data,
        tag,
    })
}

/// Exact inverse of [`encode`]; returns `(base_channels, height, width, data)`.
pub fn decode(z: &LatentTensor, factor: usize) -> Result<(usize, usize, usize, Vec<f64>)> {
    if factor == 0 {
        return Err(Error::Shape("codec factor must be positive".into()));
    }
    if z.channels % (factor * factor) != 0 {
        return Err(Error::Shape(format!(
            "latent channel count {} not divisible by f^2 = {}",
            z.channels,
            factor * factor
        )));
    }
    let base_channels = z.channels / (factor * factor);
    let (h, w) = (z.height * factor, z.width * factor);
    let mut values = vec![0f64; base_channels * h * w];
    for c in 0..base_channels {
        for dy in 0..factor {
            for dx in 0..factor {
                let lch = (c * factor + dy) * factor + dx;
                for ly in 0..z.height {
                    for lx in 0..z.width {
                        let dst = (c * h + ly * factor + dy) * w + lx * factor + dx;
                        values[dst] = z.data[(lch * z.height + ly) * z.width + lx];
                    }
                }
            }
        }
    }
    Ok((base_channels, h, w, values))
}

/// Encodes a depth map (single plane, values as-is).
pub fn encode_depth(d: &DepthMap, factor: usize, tag: LatentTag) -> Result<LatentTensor> {
    let values: Vec<f64> = d.values().iter().map(|&v| v as f64).collect();
    encode(&values, 1, d.height(), d.width(), factor, tag)
}

/// Encodes an image, remapping `[0, 1]` to `[-1, 1]` so every conditioning
/// channel shares the depth range.
pub fn encode_image(img: &ImageMap, factor: usize) -> Result<LatentTensor> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut planar = vec![0f64; c * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                planar[(ch * h + y) * w + x] = 2.0 * img.get(y, x, ch) as f64 - 1.0;
            }
        }
    }
    encode(&planar, c, h, w, factor, LatentTag::ImageCond)
}

/// Decodes a depth-state latent back to a normalized map, clamped to
/// `[-1, 1]` with all pixels valid.
pub fn decode_depth(z: &LatentTensor, factor: usize) -> Result<DepthMap> {
    let (bc, h, w, values) = decode(z, factor)?;
    if bc != 1 {
        return Err(Error::Shape(format!("depth latent decodes to {bc} planes, expected 1")));
    }
    let clamped: Vec<f32> = values.iter().map(|&v| v.clamp(-1.0, 1.0) as f32).collect();
    DepthMap::dense(h, w, clamped, DepthUnits::Normalized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = SplitMix64::new(1);
        for factor in [1usize, 2, 4, 8] {
            let (c, h, w) = (2usize, 16usize, 16usize);
            let values: Vec<f64> = (0..c * h * w).map(|_| rng.range_f64(-3.0, 3.0)).collect();
            let z = encode(&values, c, h, w, factor, LatentTag::DepthState).unwrap();
            let (bc, dh, dw, back) = decode(&z, factor).unwrap();
            assert_eq!((bc, dh, dw), (c, h, w));
            for (a, b) in values.iter().zip(&back) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn factor_one_is_identity() {
        let values: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let z = encode(&values, 1, 3, 4, 1, LatentTag::DepthCond).unwrap();
        assert_eq!(z.channels, 1);
        assert_eq!((z.height, z.width), (3, 4));
        assert_eq!(z.data, values);
    }

    #[test]
    fn shape_arithmetic_16x16_f8() {
        let values = vec![0f64; 256];
        let z = encode(&values, 1, 16, 16, 8, LatentTag::DepthState).unwrap();
        assert_eq!((z.channels, z.height, z.width), (64, 2, 2));
    }

    #[test]
    fn layout_places_block_pixels_in_channels() {
        // 2x2 raster, f=2: the four pixels land in channels 0..4 at (0,0).
        let values = vec![10.0, 11.0, 12.0, 13.0];
        let z = encode(&values, 1, 2, 2, 2, LatentTag::DepthState).unwrap();
        assert_eq!(z.data, vec![10.0, 11.0, 12.0, 13.0]);
        assert_eq!((z.height, z.width), (1, 1));
    }

    #[test]
    fn non_divisible_dims_error() {
        let values = vec![0f64; 9];
        assert!(encode(&values, 1, 3, 3, 2, LatentTag::DepthState).is_err());
    }

    #[test]
    fn image_encode_maps_to_symmetric_range() {
        let img = crate::raster::ImageMap::new(2, 2, 1, vec![0.0, 0.5, 1.0, 0.25]).unwrap();
        let z = encode_image(&img, 1).unwrap();
        assert_eq!(z.data, vec![-1.0, 0.0, 1.0, -0.5]);
    }
}
