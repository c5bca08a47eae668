//! Layer primitives with explicit forward caches and backward passes.
//!
//! Each layer exposes `forward(input) -> output` plus a `backward` that takes
//! the upstream gradient, accumulates parameter gradients into a mirror layer
//! of identical shape, and returns the input gradient. Gradients accumulate
//! (`+=`) so one mirror can sum a whole batch.

use ndarray::{Array1, Array2, Array3};

use super::Feat;

/// 2D convolution, stride 1, square kernel, zero padding to preserve size.
#[derive(Debug, Clone)]
pub struct Conv2d {
    /// `[cout, cin * k * k]`.
    pub weight: Array2<f64>,
    /// `[cout]`.
    pub bias: Array1<f64>,
    pub cin: usize,
    pub cout: usize,
    pub ksize: usize,
}

impl Conv2d {
    /// Zero-valued layer (used both for grad mirrors and zero-init heads).
    pub fn zeros(cin: usize, cout: usize, ksize: usize) -> Self {
        assert!(ksize % 2 == 1, "kernel must be odd for same-size padding");
        Conv2d {
            weight: Array2::zeros((cout, cin * ksize * ksize)),
            bias: Array1::zeros(cout),
            cin,
            cout,
            ksize,
        }
    }

    /// Kaiming-uniform init: `U(-sqrt(3/fan_in), +sqrt(3/fan_in))`.
    pub fn init(cin: usize, cout: usize, ksize: usize, rng: &mut crate::rng::SplitMix64) -> Self {
        let mut layer = Conv2d::zeros(cin, cout, ksize);
        let fan_in = (cin * ksize * ksize) as f64;
        let limit = (3.0 / fan_in).sqrt();
        for w in layer.weight.iter_mut() {
            *w = rng.range_f64(-limit, limit);
        }
        layer
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// im2col: `[cin*k*k, h*w]` patch matrix with zero padding.
    ///
    /// Built from contiguous row-segment copies; this runs inside the
    /// training hot loop.
    fn im2col(&self, x: &Feat) -> Array2<f64> {
        let (c, h, w) = x.dim();
        debug_assert_eq!(c, self.cin);
        let k = self.ksize;
        let half = (k / 2) as isize;
        let mut cols = Array2::<f64>::zeros((c * k * k, h * w));
        let xs = x.as_slice().expect("feature maps are contiguous");
        let cs = cols.as_slice_mut().expect("fresh array is contiguous");
        let plane = h * w;
        for ci in 0..c {
            for ky in 0..k {
                let dy = ky as isize - half;
                for kx in 0..k {
                    let dx = kx as isize - half;
                    let row = (ci * k + ky) * k + kx;
                    let out_base = row * plane;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize).min(w as isize - dx) as usize;
                    if x0 >= x1 {
                        continue;
                    }
                    let len = x1 - x0;
                    for y in 0..h as isize {
                        let sy = y + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let src = (ci * h + sy as usize) * w + (x0 as isize + dx) as usize;
                        let dst = out_base + y as usize * w + x0;
                        cs[dst..dst + len].copy_from_slice(&xs[src..src + len]);
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, x: &Feat) -> Feat {
        let (_, h, w) = x.dim();
        let cols = self.im2col(x);
        let mut out = self.weight.dot(&cols); // [cout, h*w]
        for (mut row, &b) in out.rows_mut().into_iter().zip(self.bias.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        out.into_shape_with_order((self.cout, h, w)).expect("conv output shape")
    }

    /// Backward: `x` is the cached forward input.
    pub fn backward(&self, x: &Feat, dy: &Feat, grad: &mut Conv2d) -> Feat {
        let (c, h, w) = x.dim();
        let k = self.ksize;
        let half = (k / 2) as isize;
        let dy_mat = dy
            .to_shape((self.cout, h * w))
            .expect("dy contiguous")
            .to_owned();

        // Parameter gradients.
        let cols = self.im2col(x);
        grad.weight += &dy_mat.dot(&cols.t());
        grad.bias += &dy_mat.sum_axis(ndarray::Axis(1));

        // Input gradient: col2im of W^T * dy (scatter-add of row segments).
        let dcols = self.weight.t().dot(&dy_mat); // [cin*k*k, h*w]
        let mut dx = Array3::<f64>::zeros((c, h, w));
        let ds = dcols.as_slice().expect("gemm output is contiguous");
        let dxs = dx.as_slice_mut().expect("fresh array is contiguous");
        let plane = h * w;
        for ci in 0..c {
            for ky in 0..k {
                let dyo = ky as isize - half;
                for kx in 0..k {
                    let dxo = kx as isize - half;
                    let row = (ci * k + ky) * k + kx;
                    let in_base = row * plane;
                    let x0 = (-dxo).max(0) as usize;
                    let x1 = (w as isize).min(w as isize - dxo) as usize;
                    if x0 >= x1 {
                        continue;
                    }
                    let len = x1 - x0;
                    for y in 0..h as isize {
                        let sy = y + dyo;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let dst = (ci * h + sy as usize) * w + (x0 as isize + dxo) as usize;
                        let src = in_base + y as usize * w + x0;
                        for i in 0..len {
                            dxs[dst + i] += ds[src + i];
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Group normalization over `[C/G, H, W]` slabs with learned scale/shift.
#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub groups: usize,
    pub eps: f64,
}

/// Forward cache: normalized activations and per-group inverse stddev.
pub struct GnCache {
    pub xhat: Feat,
    pub inv_std: Vec<f64>,
}

impl GroupNorm {
    pub fn new(channels: usize, groups: usize) -> Self {
        assert!(groups > 0 && channels % groups == 0, "groups must divide channels");
        GroupNorm {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            groups,
            eps: 1e-5,
        }
    }

    pub fn zeros_like(&self) -> Self {
        GroupNorm {
            gamma: Array1::zeros(self.gamma.len()),
            beta: Array1::zeros(self.beta.len()),
            groups: self.groups,
            eps: self.eps,
        }
    }

    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }

    pub fn forward(&self, x: &Feat) -> (Feat, GnCache) {
        let (c, h, w) = x.dim();
        let per = c / self.groups;
        let plane = h * w;
        let n = (per * plane) as f64;
        let xs = x.as_slice().expect("feature maps are contiguous");
        let mut xhat = Feat::zeros((c, h, w));
        let xh = xhat.as_slice_mut().expect("fresh array is contiguous");
        let mut out = Feat::zeros((c, h, w));
        let os = out.as_slice_mut().expect("fresh array is contiguous");
        let mut inv_std = Vec::with_capacity(self.groups);
        for g in 0..self.groups {
            let base = g * per * plane;
            let slab = &xs[base..base + per * plane];
            let mean = slab.iter().sum::<f64>() / n;
            let var = slab.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std.push(istd);
            for ci in 0..per {
                let ch = g * per + ci;
                let (gm, bt) = (self.gamma[ch], self.beta[ch]);
                let off = base + ci * plane;
                for i in 0..plane {
                    let xh_v = (xs[off + i] - mean) * istd;
                    xh[off + i] = xh_v;
                    os[off + i] = xh_v * gm + bt;
                }
            }
        }
        (out, GnCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &GnCache, dy: &Feat, grad: &mut GroupNorm) -> Feat {
        let (c, h, w) = dy.dim();
        let per = c / self.groups;
        let plane = h * w;
        let n = (per * plane) as f64;
        let dys = dy.as_slice().expect("gradients are contiguous");
        let xh = cache.xhat.as_slice().expect("cache is contiguous");
        let mut dx = Feat::zeros((c, h, w));
        let dxs = dx.as_slice_mut().expect("fresh array is contiguous");

        for ci in 0..c {
            let off = ci * plane;
            let mut dg = 0.0;
            let mut db = 0.0;
            for i in 0..plane {
                dg += dys[off + i] * xh[off + i];
                db += dys[off + i];
            }
            grad.gamma[ci] += dg;
            grad.beta[ci] += db;
        }

        for g in 0..self.groups {
            let istd = cache.inv_std[g];
            // dxhat = dy * gamma; then the two mean corrections.
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for ci in 0..per {
                let ch = g * per + ci;
                let gm = self.gamma[ch];
                let off = ch * plane;
                for i in 0..plane {
                    let dxh = dys[off + i] * gm;
                    s1 += dxh;
                    s2 += dxh * xh[off + i];
                }
            }
            let (m1, m2) = (s1 / n, s2 / n);
            for ci in 0..per {
                let ch = g * per + ci;
                let gm = self.gamma[ch];
                let off = ch * plane;
                for i in 0..plane {
                    let dxh = dys[off + i] * gm;
                    dxs[off + i] = istd * (dxh - m1 - xh[off + i] * m2);
                }
            }
        }
        dx
    }
}

/// Dense layer `y = W x + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    /// `[out, in]`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn init(input: usize, output: usize, rng: &mut crate::rng::SplitMix64) -> Self {
        let mut layer = Linear::zeros(input, output);
        let limit = (3.0 / input as f64).sqrt();
        for w in layer.weight.iter_mut() {
            *w = rng.range_f64(-limit, limit);
        }
        layer
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Array1<f64>) -> Array1<f64> {
        self.weight.dot(x) + &self.bias
    }

    pub fn backward(&self, x: &Array1<f64>, dy: &Array1<f64>, grad: &mut Linear) -> Array1<f64> {
        for (i, &g) in dy.iter().enumerate() {
            grad.bias[i] += g;
            for (j, &xv) in x.iter().enumerate() {
                grad.weight[[i, j]] += g * xv;
            }
        }
        self.weight.t().dot(dy)
    }
}

/// 2x2 average pooling with stride 2 (no parameters).
pub struct AvgPool2;

impl AvgPool2 {
    pub fn forward(x: &Feat) -> Feat {
        let (c, h, w) = x.dim();
        debug_assert!(h % 2 == 0 && w % 2 == 0);
        let mut out = Feat::zeros((c, h / 2, w / 2));
        for ci in 0..c {
            for y in 0..h / 2 {
                for xx in 0..w / 2 {
                    out[[ci, y, xx]] = 0.25
                        * (x[[ci, 2 * y, 2 * xx]]
                            + x[[ci, 2 * y, 2 * xx + 1]]
                            + x[[ci, 2 * y + 1, 2 * xx]]
                            + x[[ci, 2 * y + 1, 2 * xx + 1]]);
                }
            }
        }
        out
    }

    pub fn backward(dy: &Feat) -> Feat {
        let (c, h, w) = dy.dim();
        let mut dx = Feat::zeros((c, h * 2, w * 2));
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let g = dy[[ci, y, xx]] * 0.25;
                    dx[[ci, 2 * y, 2 * xx]] = g;
                    dx[[ci, 2 * y, 2 * xx + 1]] = g;
                    dx[[ci, 2 * y + 1, 2 * xx]] = g;
                    dx[[ci, 2 * y + 1, 2 * xx + 1]] = g;
                }
            }
        }
        dx
    }
}

/// Nearest-neighbor 2x upsampling (no parameters).
pub struct Upsample2;

impl Upsample2 {
    pub fn forward(x: &Feat) -> Feat {
        let (c, h, w) = x.dim();
        let mut out = Feat::zeros((c, h * 2, w * 2));
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let v = x[[ci, y, xx]];
                    out[[ci, 2 * y, 2 * xx]] = v;
                    out[[ci, 2 * y, 2 * xx + 1]] = v;
                    out[[ci, 2 * y + 1, 2 * xx]] = v;
                    out[[ci, 2 * y + 1, 2 * xx + 1]] = v;
                }
            }
        }
        out
    }

    pub fn backward(dy: &Feat) -> Feat {
        let (c, h, w) = dy.dim();
        debug_assert!(h % 2 == 0 && w % 2 == 0);
        let mut dx = Feat::zeros((c, h / 2, w / 2));
        for ci in 0..c {
            for y in 0..h / 2 {
                for xx in 0..w / 2 {
                    dx[[ci, y, xx]] = dy[[ci, 2 * y, 2 * xx]]
                        + dy[[ci, 2 * y, 2 * xx + 1]]
                        + dy[[ci, 2 * y + 1, 2 * xx]]
                        + dy[[ci, 2 * y + 1, 2 * xx + 1]];
                }
            }
        }
        dx
    }
}
