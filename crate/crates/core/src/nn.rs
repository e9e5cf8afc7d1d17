//! Minimal layer kernels over flat `f64` parameter buffers.
//!
//! Every layer knows its offset into a model's single parameter vector, so
//! optimizer state, checksums and checkpoints deal with one slice per stream.
//! Activations are channel-major `[c][y][x]`.

use rand::Rng;

/// Fills `weights` with fan-in scaled uniform values, `U(-b, b)` with
/// `b = sqrt(6 / fan_in)`.
pub fn init_fan_in_uniform(weights: &mut [f64], fan_in: usize, rng: &mut impl Rng) {
    let bound = (6.0 / fan_in as f64).sqrt();
    for w in weights {
        *w = rng.random_range(-bound..bound);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub offset: usize,
}

/// Output positions `o` in `[lo, hi)` whose input index `o*stride + k - pad`
/// lands inside `[0, n_in)`.
fn valid_range(k: usize, pad: usize, stride: usize, n_in: usize, n_out: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let top = n_in as isize - 1 + pad as isize - k as isize;
    if top < 0 {
        return (0, 0);
    }
    let hi = (top as usize / stride + 1).min(n_out);
    (lo.min(hi), hi)
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, offset: usize) -> Self {
        Self { in_ch, out_ch, kernel, stride, pad: kernel / 2, offset }
    }

    pub fn weight_count(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel * self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_ch
    }

    pub fn end(&self) -> usize {
        self.offset + self.param_count()
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        ((h + 2 * self.pad - self.kernel) / self.stride + 1, (w + 2 * self.pad - self.kernel) / self.stride + 1)
    }

    pub fn init(&self, params: &mut [f64], rng: &mut impl Rng) {
        let fan_in = self.in_ch * self.kernel * self.kernel;
        let (w, b) = params[self.offset..self.end()].split_at_mut(self.weight_count());
        init_fan_in_uniform(w, fan_in, rng);
        b.fill(0.0);
    }

    fn split<'a>(&self, params: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        params[self.offset..self.end()].split_at(self.weight_count())
    }

    pub fn forward(&self, params: &[f64], input: &[f64], h: usize, w: usize) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.in_ch * h * w);
        let (weights, bias) = self.split(params);
        let (oh, ow) = self.out_dims(h, w);
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let mut out = vec![0.0; self.out_ch * oh * ow];
        for (co, out_plane) in out.chunks_mut(oh * ow).enumerate() {
            out_plane.fill(bias[co]);
            for ci in 0..self.in_ch {
                let in_plane = &input[ci * h * w..(ci + 1) * h * w];
                let wbase = (co * self.in_ch + ci) * k * k;
                for ky in 0..k {
                    let (oy0, oy1) = valid_range(ky, p, s, h, oh);
                    for kx in 0..k {
                        let wv = weights[wbase + ky * k + kx];
                        let (ox0, ox1) = valid_range(kx, p, s, w, ow);
                        for oy in oy0..oy1 {
                            let irow = &in_plane[(oy * s + ky - p) * w..][..w];
                            let orow = &mut out_plane[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                let shift = kx as isize - p as isize;
                                let src = &irow[(ox0 as isize + shift) as usize..(ox1 as isize + shift) as usize];
                                for (o, &i) in orow[ox0..ox1].iter_mut().zip(src) {
                                    *o += wv * i;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    orow[ox] += wv * irow[ox * s + kx - p];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad_params` (full-model
    /// layout) and, when requested, input gradients into `grad_input`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        h: usize,
        w: usize,
        grad_out: &[f64],
        grad_params: &mut [f64],
        mut grad_input: Option<&mut [f64]>,
    ) {
        let (weights, _) = self.split(params);
        let (oh, ow) = self.out_dims(h, w);
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let (gw, gb) = grad_params[self.offset..self.end()].split_at_mut(self.weight_count());
        for (co, g_plane) in grad_out.chunks(oh * ow).enumerate() {
            gb[co] += g_plane.iter().sum::<f64>();
            for ci in 0..self.in_ch {
                let in_plane = &input[ci * h * w..(ci + 1) * h * w];
                let wbase = (co * self.in_ch + ci) * k * k;
                for ky in 0..k {
                    let (oy0, oy1) = valid_range(ky, p, s, h, oh);
                    for kx in 0..k {
                        let wv = weights[wbase + ky * k + kx];
                        let (ox0, ox1) = valid_range(kx, p, s, w, ow);
                        let mut acc = 0.0;
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - p;
                            let grow = &g_plane[oy * ow..(oy + 1) * ow];
                            let irow = &in_plane[iy * w..(iy + 1) * w];
                            for ox in ox0..ox1 {
                                acc += grow[ox] * irow[ox * s + kx - p];
                            }
                            if let Some(gi) = grad_input.as_deref_mut() {
                                let girow = &mut gi[ci * h * w + iy * w..][..w];
                                for ox in ox0..ox1 {
                                    girow[ox * s + kx - p] += wv * grow[ox];
                                }
                            }
                        }
                        gw[wbase + ky * k + kx] += acc;
                    }
                }
            }
        }
    }
}

/// Fully connected layer; weights stored `[out][in]`, then bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub offset: usize,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, offset: usize) -> Self {
        Self { inputs, outputs, offset }
    }

    pub fn weight_count(&self) -> usize {
        self.inputs * self.outputs
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.outputs
    }

    pub fn end(&self) -> usize {
        self.offset + self.param_count()
    }

    pub fn init(&self, params: &mut [f64], rng: &mut impl Rng) {
        let (w, b) = params[self.offset..self.end()].split_at_mut(self.weight_count());
        init_fan_in_uniform(w, self.inputs, rng);
        b.fill(0.0);
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        let (w, b) = params[self.offset..self.end()].split_at(self.weight_count());
        w.chunks(self.inputs).zip(b).map(|(row, &bias)| bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).collect()
    }

    pub fn backward(&self, params: &[f64], x: &[f64], grad_out: &[f64], grad_params: &mut [f64], grad_input: Option<&mut [f64]>) {
        let (gw, gb) = grad_params[self.offset..self.end()].split_at_mut(self.weight_count());
        for ((row, b), &g) in gw.chunks_mut(self.inputs).zip(gb.iter_mut()).zip(grad_out) {
            *b += g;
            if g != 0.0 {
                for (r, &xi) in row.iter_mut().zip(x) {
                    *r += g * xi;
                }
            }
        }
        if let Some(gi) = grad_input {
            let w = &params[self.offset..self.offset + self.weight_count()];
            for (row, &g) in w.chunks(self.inputs).zip(grad_out) {
                if g != 0.0 {
                    for (acc, &wv) in gi.iter_mut().zip(row) {
                        *acc += g * wv;
                    }
                }
            }
        }
    }
}

pub fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes gradient entries whose activation output was not positive.
pub fn relu_backward(grad: &mut [f64], output: &[f64]) {
    for (g, &o) in grad.iter_mut().zip(output) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Nearest-neighbour 2x upsampling of `c` planes of size `h x w`.
pub fn upsample2x(input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            let src = &input[ch * h * w + (oy / 2) * w..][..w];
            let dst = &mut out[ch * oh * ow + oy * ow..][..ow];
            for (ox, d) in dst.iter_mut().enumerate() {
                *d = src[ox / 2];
            }
        }
    }
    out
}

/// Adjoint of [`upsample2x`]: sums each 2x2 block of `grad` (size `c x 2h x 2w`).
pub fn upsample2x_backward(grad: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for oy in 0..oh {
            let src = &grad[ch * oh * ow + oy * ow..][..ow];
            let dst = &mut out[ch * h * w + (oy / 2) * w..][..w];
            for (ox, g) in src.iter().enumerate() {
                dst[ox / 2] += g;
            }
        }
    }
    out
}

/// Stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
