//! Encoder-decoder denoiser with skip connections and timestep conditioning.
//!
//! The network is a small U-shaped stack: a stem convolution, `levels`
//! residual blocks separated by 2x average pooling on the way down, mirrored
//! upsampling + skip concatenation on the way up, and a zero-initialized
//! output head. Each residual block is `GN -> SiLU -> conv`, twice, with a
//! per-channel bias projected from the (shared, SiLU-activated) sinusoidal
//! timestep embedding added between the two convolutions. Channel width
//! doubles per level from `base_channels`.
//!
//! Everything is f64 and the backward pass is written out by hand; the
//! finite-difference tests at the bottom hold it to account.

use ndarray::Array1;

use super::layers::{AvgPool2, Conv2d, GnCache, GroupNorm, Linear, Upsample2};
use super::{silu, silu_grad, Feat};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_channels: usize,
    /// Resolution levels (1..=3); level `l` runs at `1/2^l` scale.
    pub levels: usize,
    /// Target group count for GroupNorm (clamped to divide each width).
    pub groups: usize,
    /// Sinusoidal embedding width; 0 disables timestep conditioning.
    pub temb_dim: usize,
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.base_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if !(1..=3).contains(&self.levels) {
            return Err(Error::Config(format!("levels must be in 1..=3, got {}", self.levels)));
        }
        if self.groups == 0 {
            return Err(Error::Config("groups must be positive".into()));
        }
        Ok(())
    }

    fn width(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

/// Largest group count <= `want` that divides `channels`.
fn pick_groups(channels: usize, want: usize) -> usize {
    let mut g = want.min(channels).max(1);
    while channels % g != 0 {
        g -= 1;
    }
    g
}

/// Sinusoidal timestep embedding `[sin(t*w_k) .. cos(t*w_k)]` with
/// geometrically spaced frequencies from 1 down to 1/10000.
pub fn sinusoidal_embedding(t: f64, dim: usize) -> Array1<f64> {
    let half = dim / 2;
    let mut out = Array1::zeros(dim);
    let denom = (half.max(2) - 1) as f64;
    for k in 0..half {
        let freq = (-(10_000f64).ln() * k as f64 / denom).exp();
        out[k] = (t * freq).sin();
        out[half + k] = (t * freq).cos();
    }
    out
}

/// `GN -> SiLU -> conv -> (+temb bias) -> GN -> SiLU -> conv`, residual.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub gn1: GroupNorm,
    pub conv1: Conv2d,
    pub temb_proj: Option<Linear>,
    pub gn2: GroupNorm,
    pub conv2: Conv2d,
    /// 1x1 projection on the residual path when cin != cout.
    pub skip: Option<Conv2d>,
}

pub struct ResCache {
    x: Feat,
    gn1: GnCache,
    silu1_in: Feat,
    conv1_in: Feat,
    gn2: GnCache,
    silu2_in: Feat,
    conv2_in: Feat,
}

impl ResBlock {
    fn init(cin: usize, cout: usize, groups: usize, temb_dim: usize, rng: &mut SplitMix64) -> Self {
        ResBlock {
            gn1: GroupNorm::new(cin, pick_groups(cin, groups)),
            conv1: Conv2d::init(cin, cout, 3, rng),
            temb_proj: (temb_dim > 0).then(|| Linear::init(temb_dim, cout, rng)),
            gn2: GroupNorm::new(cout, pick_groups(cout, groups)),
            conv2: Conv2d::init(cout, cout, 3, rng),
            skip: (cin != cout).then(|| Conv2d::init(cin, cout, 1, rng)),
        }
    }

    fn zeros_like(&self) -> Self {
        ResBlock {
            gn1: self.gn1.zeros_like(),
            conv1: Conv2d::zeros(self.conv1.cin, self.conv1.cout, self.conv1.ksize),
            temb_proj: self
                .temb_proj
                .as_ref()
                .map(|p| Linear::zeros(p.weight.dim().1, p.weight.dim().0)),
            gn2: self.gn2.zeros_like(),
            conv2: Conv2d::zeros(self.conv2.cin, self.conv2.cout, self.conv2.ksize),
            skip: self
                .skip
                .as_ref()
                .map(|s| Conv2d::zeros(s.cin, s.cout, s.ksize)),
        }
    }

    fn param_count(&self) -> usize {
        self.gn1.param_count()
            + self.conv1.param_count()
            + self.temb_proj.as_ref().map_or(0, Linear::param_count)
            + self.gn2.param_count()
            + self.conv2.param_count()
            + self.skip.as_ref().map_or(0, Conv2d::param_count)
    }

    fn forward(&self, x: &Feat, temb: Option<&Array1<f64>>) -> (Feat, ResCache) {
        let (gn1_out, gn1) = self.gn1.forward(x);
        let silu1_in = gn1_out;
        let conv1_in = silu1_in.mapv(silu);
        let mut h = self.conv1.forward(&conv1_in);
        if let (Some(proj), Some(tv)) = (&self.temb_proj, temb) {
            let bias = proj.forward(tv);
            for (mut plane, &b) in h.outer_iter_mut().zip(bias.iter()) {
                plane.mapv_inplace(|v| v + b);
            }
        }
        let (gn2_out, gn2) = self.gn2.forward(&h);
        let silu2_in = gn2_out;
        let conv2_in = silu2_in.mapv(silu);
        let main = self.conv2.forward(&conv2_in);
        let out = match &self.skip {
            Some(s) => main + s.forward(x),
            None => main + x,
        };
        (
            out,
            ResCache {
                x: x.clone(),
                gn1,
                silu1_in,
                conv1_in,
                gn2,
                silu2_in,
                conv2_in,
            },
        )
    }

    /// Accumulates parameter grads into `grad` (and `dtemb` when present),
    /// returns the input gradient.
    fn backward(
        &self,
        cache: &ResCache,
        dy: &Feat,
        temb: Option<&Array1<f64>>,
        grad: &mut ResBlock,
        dtemb: Option<&mut Array1<f64>>,
    ) -> Feat {
        // Residual path.
        let dx_skip = match (&self.skip, &mut grad.skip) {
            (Some(s), Some(gs)) => s.backward(&cache.x, dy, gs),
            _ => dy.clone(),
        };

        // Main path, reverse order.
        let d_conv2_in = self.conv2.backward(&cache.conv2_in, dy, &mut grad.conv2);
        let d_gn2_out = &d_conv2_in * &cache.silu2_in.mapv(silu_grad);
        let mut dh = self.gn2.backward(&cache.gn2, &d_gn2_out, &mut grad.gn2);

        if let (Some(proj), Some(tv), Some(gproj), Some(dt)) =
            (&self.temb_proj, temb, grad.temb_proj.as_mut(), dtemb)
        {
            let per_channel: Array1<f64> =
                Array1::from_iter(dh.outer_iter().map(|plane| plane.sum()));
            let d_tv = proj.backward(tv, &per_channel, gproj);
            *dt += &d_tv;
        }

        let d_conv1_in = self.conv1.backward(&cache.conv1_in, &dh, &mut grad.conv1);
        dh = &d_conv1_in * &cache.silu1_in.mapv(silu_grad);
        let dx_main = self.gn1.backward(&cache.gn1, &dh, &mut grad.gn1);

        dx_main + dx_skip
    }
}

/// The denoiser network.
#[derive(Debug, Clone)]
pub struct UNet {
    pub cfg: UNetConfig,
    pub stem: Conv2d,
    pub temb_base: Option<Linear>,
    pub down: Vec<ResBlock>,
    pub up: Vec<ResBlock>,
    pub head_gn: GroupNorm,
    pub head: Conv2d,
}

struct TembCache {
    pre: Array1<f64>,
    act: Array1<f64>,
}

pub struct UNetCache {
    x_in: Feat,
    temb: Option<(Array1<f64>, TembCache)>, // (raw sinusoidal, mlp cache)
    down: Vec<ResCache>,
    up: Vec<ResCache>,
    head_gn: GnCache,
    head_gn_out: Feat,
    head_silu_out: Feat,
}

impl UNet {
    pub fn init(cfg: UNetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = SplitMix64::derive(seed, 0x5EED);
        let mut down = Vec::with_capacity(cfg.levels);
        for l in 0..cfg.levels {
            let cin = if l == 0 { cfg.base_channels } else { cfg.width(l - 1) };
            down.push(ResBlock::init(cin, cfg.width(l), cfg.groups, cfg.temb_dim, &mut rng));
        }
        let mut up = Vec::with_capacity(cfg.levels.saturating_sub(1));
        for l in 0..cfg.levels.saturating_sub(1) {
            let cin = cfg.width(l + 1) + cfg.width(l);
            up.push(ResBlock::init(cin, cfg.width(l), cfg.groups, cfg.temb_dim, &mut rng));
        }
        // Zero-initialized head: the network starts as the zero map, which
        // keeps early velocity-prediction updates well-scaled.
        let head = Conv2d::zeros(cfg.base_channels, cfg.out_channels, 3);
        Ok(UNet {
            stem: Conv2d::init(cfg.in_channels, cfg.base_channels, 3, &mut rng),
            temb_base: (cfg.temb_dim > 0).then(|| Linear::init(cfg.temb_dim, cfg.temb_dim, &mut rng)),
            down,
            up,
            head_gn: GroupNorm::new(cfg.base_channels, pick_groups(cfg.base_channels, cfg.groups)),
            head,
            cfg,
        })
    }

    /// Same shapes, all parameters zero (gradient mirror).
    pub fn zeros_like(&self) -> UNet {
        UNet {
            cfg: self.cfg,
            stem: Conv2d::zeros(self.stem.cin, self.stem.cout, self.stem.ksize),
            temb_base: self
                .temb_base
                .as_ref()
                .map(|l| Linear::zeros(l.weight.dim().1, l.weight.dim().0)),
            down: self.down.iter().map(ResBlock::zeros_like).collect(),
            up: self.up.iter().map(ResBlock::zeros_like).collect(),
            head_gn: self.head_gn.zeros_like(),
            head: Conv2d::zeros(self.head.cin, self.head.cout, self.head.ksize),
        }
    }

    pub fn param_count(&self) -> usize {
        self.stem.param_count()
            + self.temb_base.as_ref().map_or(0, Linear::param_count)
            + self.down.iter().map(ResBlock::param_count).sum::<usize>()
            + self.up.iter().map(ResBlock::param_count).sum::<usize>()
            + self.head_gn.param_count()
            + self.head.param_count()
    }

    fn check_input(&self, x: &Feat) -> Result<()> {
        let (c, h, w) = x.dim();
        if c != self.cfg.in_channels {
            return Err(Error::Shape(format!(
                "denoiser expects {} input channels, got {c}",
                self.cfg.in_channels
            )));
        }
        let div = 1usize << (self.cfg.levels - 1);
        if h % div != 0 || w % div != 0 {
            return Err(Error::Shape(format!(
                "input {h}x{w} not divisible by 2^(levels-1) = {div}"
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Feat, t: Option<f64>) -> Result<Feat> {
        Ok(self.forward_cached(x, t)?.0)
    }

    pub fn forward_cached(&self, x: &Feat, t: Option<f64>) -> Result<(Feat, UNetCache)> {
        self.check_input(x)?;
        let temb = match (&self.temb_base, t) {
            (Some(base), Some(tv)) => {
                let raw = sinusoidal_embedding(tv, self.cfg.temb_dim);
                let pre = base.forward(&raw);
                let act = pre.mapv(silu);
                Some((raw, TembCache { pre, act }))
            }
            _ => None,
        };
        let temb_act = temb.as_ref().map(|(_, c)| &c.act);

        let mut h = self.stem.forward(x);
        let mut down_caches = Vec::with_capacity(self.cfg.levels);
        let mut skips: Vec<Feat> = Vec::with_capacity(self.cfg.levels - 1);
        for l in 0..self.cfg.levels {
            if l > 0 {
                h = AvgPool2::forward(&h);
            }
            let (out, cache) = self.down[l].forward(&h, temb_act);
            h = out;
            down_caches.push(cache);
            if l < self.cfg.levels - 1 {
                skips.push(h.clone());
            }
        }

        let mut up_caches: Vec<Option<ResCache>> = (0..self.up.len()).map(|_| None).collect();
        for l in (0..self.cfg.levels - 1).rev() {
            let upsampled = Upsample2::forward(&h);
            let cat = concat_channels(&upsampled, &skips[l]);
            let (out, cache) = self.up[l].forward(&cat, temb_act);
            h = out;
            up_caches[l] = Some(cache);
        }

        let (gn_out, head_gn) = self.head_gn.forward(&h);
        let head_silu_out = gn_out.mapv(silu);
        let out = self.head.forward(&head_silu_out);

        Ok((
            out,
            UNetCache {
                x_in: x.clone(),
                temb,
                down: down_caches,
                up: up_caches.into_iter().map(|c| c.expect("all up caches set")).collect(),
                head_gn,
                head_gn_out: gn_out,
                head_silu_out,
            },
        ))
    }

    /// Accumulates parameter gradients for `d loss / d out = dout`.
    pub fn backward(&self, cache: &UNetCache, dout: &Feat, grads: &mut UNet) {
        let temb_act = cache.temb.as_ref().map(|(_, c)| &c.act);
        let mut dtemb = cache
            .temb
            .as_ref()
            .map(|(_, c)| Array1::<f64>::zeros(c.act.len()));

        // Head.
        let d_silu_out = self.head.backward(&cache.head_silu_out, dout, &mut grads.head);
        let d_gn_out = &d_silu_out * &cache.head_gn_out.mapv(silu_grad);
        let mut dh = self
            .head_gn
            .backward(&cache.head_gn, &d_gn_out, &mut grads.head_gn);

        // Up path (reverse of forward: forward went levels-2 .. 0).
        let mut dskips: Vec<Option<Feat>> = (0..self.cfg.levels - 1).map(|_| None).collect();
        for l in 0..self.cfg.levels - 1 {
            let dcat = self.up[l].backward(
                &cache.up[l],
                &dh,
                temb_act,
                &mut grads.up[l],
                dtemb.as_mut(),
            );
            let c_up = self.cfg.width(l + 1);
            let (d_upsampled, d_skip) = split_channels(&dcat, c_up);
            dskips[l] = Some(d_skip);
            dh = Upsample2::backward(&d_upsampled);
        }

        // Down path, deepest first.
        for l in (0..self.cfg.levels).rev() {
            if l < self.cfg.levels - 1 {
                dh += dskips[l].as_ref().expect("skip grad present");
            }
            dh = self.down[l].backward(
                &cache.down[l],
                &dh,
                temb_act,
                &mut grads.down[l],
                dtemb.as_mut(),
            );
            if l > 0 {
                dh = AvgPool2::backward(&dh);
            }
        }

        // Stem.
        let _ = self.stem.backward(&cache.x_in, &dh, &mut grads.stem);

        // Shared timestep MLP.
        if let (Some(base), Some((raw, tc)), Some(dt), Some(gbase)) = (
            &self.temb_base,
            cache.temb.as_ref(),
            dtemb.as_ref(),
            grads.temb_base.as_mut(),
        ) {
            let d_pre = dt * &tc.pre.mapv(silu_grad);
            let _ = base.backward(raw, &d_pre, gbase);
        }
    }

    /// Walks every parameter slice in a fixed order.
    pub fn visit_params(&self, f: &mut dyn FnMut(&str, &[f64])) {
        let conv = |name: &str, c: &Conv2d, f: &mut dyn FnMut(&str, &[f64])| {
            f(&format!("{name}.w"), c.weight.as_slice().expect("standard layout"));
            f(&format!("{name}.b"), c.bias.as_slice().expect("standard layout"));
        };
        let gn = |name: &str, g: &GroupNorm, f: &mut dyn FnMut(&str, &[f64])| {
            f(&format!("{name}.g"), g.gamma.as_slice().expect("standard layout"));
            f(&format!("{name}.beta"), g.beta.as_slice().expect("standard layout"));
        };
        let lin = |name: &str, l: &Linear, f: &mut dyn FnMut(&str, &[f64])| {
            f(&format!("{name}.w"), l.weight.as_slice().expect("standard layout"));
            f(&format!("{name}.b"), l.bias.as_slice().expect("standard layout"));
        };
        let block = |name: &str, b: &ResBlock, f: &mut dyn FnMut(&str, &[f64])| {
            gn(&format!("{name}.gn1"), &b.gn1, f);
            conv(&format!("{name}.conv1"), &b.conv1, f);
            if let Some(p) = &b.temb_proj {
                lin(&format!("{name}.temb"), p, f);
            }
            gn(&format!("{name}.gn2"), &b.gn2, f);
            conv(&format!("{name}.conv2"), &b.conv2, f);
            if let Some(s) = &b.skip {
                conv(&format!("{name}.skip"), s, f);
            }
        };

        conv("stem", &self.stem, f);
        if let Some(t) = &self.temb_base {
            lin("temb_base", t, f);
        }
        for (l, b) in self.down.iter().enumerate() {
            block(&format!("down{l}"), b, f);
        }
        for (l, b) in self.up.iter().enumerate() {
            block(&format!("up{l}"), b, f);
        }
        gn("head_gn", &self.head_gn, f);
        conv("head", &self.head, f);
    }

    /// Mutable variant of [`UNet::visit_params`], same order.
    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        let conv = |name: &str, c: &mut Conv2d, f: &mut dyn FnMut(&str, &mut [f64])| {
            f(&format!("{name}.w"), c.weight.as_slice_mut().expect("standard layout"));
            f(&format!("{name}.b"), c.bias.as_slice_mut().expect("standard layout"));
        };
        let gn = |name: &str, g: &mut GroupNorm, f: &mut dyn FnMut(&str, &mut [f64])| {
            f(&format!("{name}.g"), g.gamma.as_slice_mut().expect("standard layout"));
            f(&format!("{name}.beta"), g.beta.as_slice_mut().expect("standard layout"));
        };
        let lin = |name: &str, l: &mut Linear, f: &mut dyn FnMut(&str, &mut [f64])| {
            f(&format!("{name}.w"), l.weight.as_slice_mut().expect("standard layout"));
            f(&format!("{name}.b"), l.bias.as_slice_mut().expect("standard layout"));
        };
        let block = |name: &str, b: &mut ResBlock, f: &mut dyn FnMut(&str, &mut [f64])| {
            gn(&format!("{name}.gn1"), &mut b.gn1, f);
            conv(&format!("{name}.conv1"), &mut b.conv1, f);
            if let Some(p) = &mut b.temb_proj {
                lin(&format!("{name}.temb"), p, f);
            }
            gn(&format!("{name}.gn2"), &mut b.gn2, f);
            conv(&format!("{name}.conv2"), &mut b.conv2, f);
            if let Some(s) = &mut b.skip {
                conv(&format!("{name}.skip"), s, f);
            }
        };

        conv("stem", &mut self.stem, f);
        if let Some(t) = &mut self.temb_base {
            lin("temb_base", t, f);
        }
        for (l, b) in self.down.iter_mut().enumerate() {
            block(&format!("down{l}"), b, f);
        }
        for (l, b) in self.up.iter_mut().enumerate() {
            block(&format!("up{l}"), b, f);
        }
        gn("head_gn", &mut self.head_gn, f);
        conv("head", &mut self.head, f);
    }

    /// Adds `other`'s parameters into `self` (used to reduce batch grads).
    pub fn add_params(&mut self, other: &UNet) {
        let mut flat: Vec<f64> = Vec::new();
        other.visit_params(&mut |_, s| flat.extend_from_slice(s));
        let mut off = 0usize;
        self.visit_params_mut(&mut |_, s| {
            for v in s.iter_mut() {
                *v += flat[off];
                off += 1;
            }
        });
    }
}

fn concat_channels(a: &Feat, b: &Feat) -> Feat {
    let (ca, h, w) = a.dim();
    let (cb, hb, wb) = b.dim();
    debug_assert_eq!((h, w), (hb, wb));
    let mut out = Feat::zeros((ca + cb, h, w));
    out.slice_mut(ndarray::s![..ca, .., ..]).assign(a);
    out.slice_mut(ndarray::s![ca.., .., ..]).assign(b);
    out
}

fn split_channels(x: &Feat, c_first: usize) -> (Feat, Feat) {
    (
        x.slice(ndarray::s![..c_first, .., ..]).to_owned(),
        x.slice(ndarray::s![c_first.., .., ..]).to_owned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro_cfg(levels: usize, temb: usize) -> UNetConfig {
        UNetConfig {
            in_channels: 3,
            out_channels: 1,
            base_channels: 2,
            levels,
            groups: 1,
            temb_dim: temb,
        }
    }

    fn randomize(net: &mut UNet, seed: u64) {
        let mut rng = SplitMix64::new(seed);
        net.visit_params_mut(&mut |_, s| {
            for v in s.iter_mut() {
                *v = rng.range_f64(-0.4, 0.4);
            }
        });
    }

    #[test]
    fn forward_shapes_and_determinism() {
        for levels in 1..=3 {
            let net = UNet::init(micro_cfg(levels, 8), 1).unwrap();
            let x = Feat::from_shape_fn((3, 8, 8), |(c, y, xx)| {
                (c as f64 + y as f64 * 0.1 + xx as f64 * 0.01).sin()
            });
            let a = net.forward(&x, Some(5.0)).unwrap();
            let b = net.forward(&x, Some(5.0)).unwrap();
            assert_eq!(a.dim(), (1, 8, 8));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn timestep_changes_output() {
        let mut net = UNet::init(micro_cfg(2, 8), 2).unwrap();
        randomize(&mut net, 3);
        let x = Feat::from_shape_fn((3, 8, 8), |(c, y, xx)| ((c + y + xx) as f64 * 0.1).cos());
        let a = net.forward(&x, Some(1.0)).unwrap();
        let b = net.forward(&x, Some(500.0)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn zero_init_head_outputs_zero() {
        let net = UNet::init(micro_cfg(2, 8), 7).unwrap();
        let x = Feat::from_shape_fn((3, 8, 8), |(c, y, xx)| (c + y * xx) as f64 * 0.05);
        let out = net.forward(&x, Some(3.0)).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn param_count_matches_visitor() {
        let net = UNet::init(micro_cfg(3, 8), 1).unwrap();
        let mut seen = 0usize;
        net.visit_params(&mut |_, s| seen += s.len());
        assert_eq!(seen, net.param_count());
    }

    /// Full-network gradient check on every parameter of a micro config.
    #[test]
    fn full_backward_matches_finite_differences() {
        let mut net = UNet::init(micro_cfg(2, 8), 11).unwrap();
        randomize(&mut net, 13);
        let mut rng = SplitMix64::new(17);
        let x = Feat::from_shape_fn((3, 4, 4), |_| rng.range_f64(-1.0, 1.0));
        let wl = Feat::from_shape_fn((1, 4, 4), |_| rng.range_f64(-1.0, 1.0));
        let t = Some(37.0);

        let (out, cache) = net.forward_cached(&x, t).unwrap();
        let mut grads = net.zeros_like();
        net.backward(&cache, &wl, &mut grads);
        let _ = out;

        let mut analytic: Vec<f64> = Vec::new();
        grads.visit_params(&mut |_, s| analytic.extend_from_slice(s));

        let h = 1e-5;
        let n = net.param_count();
        let mut max_rel = 0.0f64;
        for idx in 0..n {
            let mut probe = |delta: f64, net: &mut UNet| -> f64 {
                let mut off = 0usize;
                net.visit_params_mut(&mut |_, s| {
                    if idx >= off && idx < off + s.len() {
                        s[idx - off] += delta;
                    }
                    off += s.len();
                });
                0.0
            };
            probe(h, &mut net);
            let up = (net.forward(&x, t).unwrap() * &wl).sum();
            probe(-2.0 * h, &mut net);
            let dn = (net.forward(&x, t).unwrap() * &wl).sum();
            probe(h, &mut net);
            let fd = (up - dn) / (2.0 * h);
            let a = analytic[idx];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
            assert!(rel < 1e-3, "param {idx}: analytic {a} vs fd {fd} (rel {rel})");
        }
        assert!(max_rel < 1e-3);
    }

    #[test]
    fn add_params_sums_gradients() {
        let net = UNet::init(micro_cfg(1, 0), 5).unwrap();
        let mut a = net.zeros_like();
        let mut b = net.zeros_like();
        randomize(&mut a, 1);
        randomize(&mut b, 2);
        let mut a_flat = Vec::new();
        a.visit_params(&mut |_, s| a_flat.extend_from_slice(s));
        let mut b_flat = Vec::new();
        b.visit_params(&mut |_, s| b_flat.extend_from_slice(s));
        a.add_params(&b);
        let mut sum_flat = Vec::new();
        a.visit_params(&mut |_, s| sum_flat.extend_from_slice(s));
        for i in 0..a_flat.len() {
            assert!((sum_flat[i] - (a_flat[i] + b_flat[i])).abs() < 1e-12);
        }
    }
}
