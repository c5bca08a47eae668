//! Masked velocity-prediction loss.
//!
//! `loss = sum((v_hat - v_true)^2 * m) / gamma` where the binary latent mask
//! `m` broadcasts across channels and `gamma` is the number of kept mask
//! entries times the channel count — i.e. the mean over supervised elements,
//! independent of how much of the raster the mask keeps.

use crate::error::{Error, Result};
use crate::maskgen::LatentMask;
use crate::nn::Feat;

fn check(v_hat: &Feat, v_true: &Feat, m: &LatentMask) -> Result<f64> {
    if v_hat.dim() != v_true.dim() {
        return Err(Error::Shape(format!(
            "velocity shapes differ: {:?} vs {:?}",
            v_hat.dim(),
            v_true.dim()
        )));
    }
    let (c, h, w) = v_hat.dim();
    if (m.height, m.width) != (h, w) {
        return Err(Error::Shape(format!(
            "mask {}x{} does not match latent {h}x{w}",
            m.height, m.width
        )));
    }
    let gamma = m.ones_count() * c;
    if gamma == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(gamma as f64)
}

/// Scalar masked loss.
pub fn masked_v_loss(v_hat: &Feat, v_true: &Feat, m: &LatentMask) -> Result<f64> {
    let gamma = check(v_hat, v_true, m)?;
    let (c, h, w) = v_hat.dim();
    let mut acc = 0.0f64;
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                if m.data[y * w + x] != 0 {
                    let d = v_hat[[ci, y, x]] - v_true[[ci, y, x]];
                    acc += d * d;
                }
            }
        }
    }
    Ok(acc / gamma)
}

/// Loss plus its gradient with respect to `v_hat`:
/// `d loss / d v_hat = 2 (v_hat - v_true) * m / gamma`.
pub fn masked_v_loss_grad(v_hat: &Feat, v_true: &Feat, m: &LatentMask) -> Result<(f64, Feat)> {
    let gamma = check(v_hat, v_true, m)?;
    let (c, h, w) = v_hat.dim();
    let mut grad = Feat::zeros((c, h, w));
    let mut acc = 0.0f64;
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                if m.data[y * w + x] != 0 {
                    let d = v_hat[[ci, y, x]] - v_true[[ci, y, x]];
                    acc += d * d;
                    grad[[ci, y, x]] = 2.0 * d / gamma;
                }
            }
        }
    }
    Ok((acc / gamma, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn rand_feat(rng: &mut SplitMix64, c: usize, h: usize, w: usize) -> Feat {
        Feat::from_shape_fn((c, h, w), |_| rng.range_f64(-2.0, 2.0))
    }

    #[test]
    fn zero_when_prediction_is_exact() {
        let mut rng = SplitMix64::new(1);
        let v = rand_feat(&mut rng, 2, 4, 4);
        let m = LatentMask::ones(4, 4);
        assert_eq!(masked_v_loss(&v, &v, &m).unwrap(), 0.0);
    }

    #[test]
    fn all_ones_mask_equals_plain_mse() {
        let mut rng = SplitMix64::new(2);
        let a = rand_feat(&mut rng, 3, 4, 4);
        let b = rand_feat(&mut rng, 3, 4, 4);
        let m = LatentMask::ones(4, 4);
        let masked = masked_v_loss(&a, &b, &m).unwrap();
        let mse = (&a - &b).mapv(|d| d * d).mean().unwrap();
        assert!((masked - mse).abs() < 1e-10);
    }

    #[test]
    fn per_element_normalization_is_coverage_independent() {
        // Constant residual of 2 on the kept half: loss = 4 regardless of
        // how many entries the mask keeps.
        let v_true = Feat::zeros((1, 2, 2));
        let v_hat = Feat::from_elem((1, 2, 2), 2.0);
        for keep in 1..=4usize {
            let mut data = vec![0u8; 4];
            for d in data.iter_mut().take(keep) {
                *d = 1;
            }
            let m = LatentMask { height: 2, width: 2, data };
            assert_eq!(masked_v_loss(&v_hat, &v_true, &m).unwrap(), 4.0);
        }
    }

    #[test]
    fn empty_mask_is_an_error() {
        let v = Feat::zeros((1, 2, 2));
        let m = LatentMask { height: 2, width: 2, data: vec![0; 4] };
        assert!(matches!(masked_v_loss(&v, &v, &m), Err(Error::EmptyMask)));
    }

    #[test]
    fn masked_elements_get_zero_gradient() {
        let mut rng = SplitMix64::new(3);
        let a = rand_feat(&mut rng, 2, 2, 2);
        let b = rand_feat(&mut rng, 2, 2, 2);
        let m = LatentMask { height: 2, width: 2, data: vec![1, 0, 0, 1] };
        let (_, g) = masked_v_loss_grad(&a, &b, &m).unwrap();
        for c in 0..2 {
            assert_eq!(g[[c, 0, 1]], 0.0);
            assert_eq!(g[[c, 1, 0]], 0.0);
            assert_ne!(g[[c, 0, 0]], 0.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = SplitMix64::new(4);
        let mut a = rand_feat(&mut rng, 2, 3, 3);
        let b = rand_feat(&mut rng, 2, 3, 3);
        let m = LatentMask {
            height: 3,
            width: 3,
            data: (0..9).map(|i| (i % 2) as u8).collect(),
        };
        let (_, g) = masked_v_loss_grad(&a, &b, &m).unwrap();
        let h = 1e-6;
        for idx in 0..a.len() {
            let orig = a.as_slice().unwrap()[idx];
            a.as_slice_mut().unwrap()[idx] = orig + h;
            let up = masked_v_loss(&a, &b, &m).unwrap();
            a.as_slice_mut().unwrap()[idx] = orig - h;
            let dn = masked_v_loss(&a, &b, &m).unwrap();
            a.as_slice_mut().unwrap()[idx] = orig;
            let fd = (up - dn) / (2.0 * h);
            let an = g.as_slice().unwrap()[idx];
            assert!((an - fd).abs() < 1e-6 * an.abs().max(fd.abs()).max(1.0));
        }
    }
}
