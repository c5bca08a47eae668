//! Adam optimizer over a network's flattened parameter vector.

use super::unet::UNet;

/// Adam with bias correction; moment buffers align with the network's fixed
/// parameter visiting order.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// One update of `net` from accumulated gradients `grads`.
    pub fn step(&mut self, net: &mut UNet, grads: &UNet) {
        self.step += 1;
        let mut g_flat: Vec<f64> = Vec::with_capacity(self.m.len());
        grads.visit_params(&mut |_, s| g_flat.extend_from_slice(s));
        assert_eq!(g_flat.len(), self.m.len(), "gradient/param layout mismatch");

        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut off = 0usize;
        net.visit_params_mut(&mut |_, s| {
            for p in s.iter_mut() {
                let g = g_flat[off];
                self.m[off] = self.beta1 * self.m[off] + (1.0 - self.beta1) * g;
                self.v[off] = self.beta2 * self.v[off] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[off] / bc1;
                let v_hat = self.v[off] / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                off += 1;
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::unet::UNetConfig;
    use crate::nn::Feat;

    #[test]
    fn adam_reduces_a_simple_regression_loss() {
        let cfg = UNetConfig {
            in_channels: 1,
            out_channels: 1,
            base_channels: 2,
            levels: 1,
            groups: 1,
            temb_dim: 0,
        };
        let mut net = UNet::init(cfg, 3).unwrap();
        // Give the zero head some signal to start from.
        let mut rng = crate::rng::SplitMix64::new(4);
        net.visit_params_mut(&mut |name, s| {
            if name.starts_with("head.") {
                for v in s.iter_mut() {
                    *v = rng.range_f64(-0.1, 0.1);
                }
            }
        });
        let mut opt = Adam::new(1e-2, net.param_count());

        let x = Feat::from_shape_fn((1, 4, 4), |(_, y, xx)| (y as f64 - xx as f64) * 0.2);
        let target = x.mapv(|v| 0.5 * v + 0.1);

        let loss_of = |net: &UNet| -> f64 {
            let out = net.forward(&x, None).unwrap();
            (&out - &target).mapv(|d| d * d).mean().unwrap()
        };
        let initial = loss_of(&net);
        for _ in 0..200 {
            let (out, cache) = net.forward_cached(&x, None).unwrap();
            let dout = (&out - &target).mapv(|d| 2.0 * d / out.len() as f64);
            let mut grads = net.zeros_like();
            net.backward(&cache, &dout, &mut grads);
            opt.step(&mut net, &grads);
        }
        let fin = loss_of(&net);
        assert!(fin < initial * 0.1, "loss {initial} -> {fin}");
    }
}
