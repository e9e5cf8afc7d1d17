//! Reference encoder-decoder FCN used as the default segmentation stream.
//!
//! Encoder: three 3x3 stride-2 convolutions with ReLU; the deepest output is
//! the trunk shared with the classification head. Decoder: three blocks that
//! upsample 2x (nearest), concatenate the encoder activation of the same
//! resolution where one exists and apply a 3x3 convolution with ReLU. The
//! full-resolution block has no encoder partner, which also keeps the map
//! from being painted straight off raw pixels and makes the decoder lean on
//! the trunk.
//! A 1x1 convolution and a sigmoid produce the map at input resolution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backbone::{Backbone, BackboneConfig, BackboneOutput, BackboneSpec, Trace};
use crate::error::{Error, Result};
use crate::nn::{relu_backward, relu_inplace, sigmoid, upsample2x, upsample2x_backward, Conv2d};
use crate::types::{CamoMap, ImageGrid};

pub const NAME: &str = "reference";
pub const DEFAULT_CHANNELS: [usize; 3] = [8, 16, 32];

#[derive(Debug, Clone)]
pub struct ReferenceBackbone {
    config: BackboneConfig,
    enc: [Conv2d; 3],
    dec: [Conv2d; 3],
    head: Conv2d,
    params: Vec<f64>,
}

// Trace slots.
const INPUT: usize = 0;
const E1: usize = 1;
const E2: usize = 2;
const E3: usize = 3;
const CAT3: usize = 4;
const D3: usize = 5;
const CAT2: usize = 6;
const D2: usize = 7;
const CAT1: usize = 8;
const D1: usize = 9;

pub fn build(config: &BackboneConfig) -> Result<ReferenceBackbone> {
    let (h, w) = (config.height, config.width);
    if h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 {
        return Err(Error::Resolution {
            height: h,
            width: w,
            reason: "reference backbone needs both sides to be positive multiples of 8".into(),
        });
    }
    let [c1, c2, c3] = match config.channels.as_slice() {
        &[a, b, c] if a > 0 && b > 0 && c > 0 => [a, b, c],
        other => return Err(Error::Config(format!("reference backbone needs 3 positive channel widths, got {other:?}"))),
    };
    let mut offset = 0;
    let mut conv = |i, o, k, s| {
        let c = Conv2d::new(i, o, k, s, offset);
        offset = c.end();
        c
    };
    let enc = [conv(3, c1, 3, 2), conv(c1, c2, 3, 2), conv(c2, c3, 3, 2)];
    let dec = [conv(c3 + c2, c2, 3, 1), conv(c2 + c1, c1, 3, 1), conv(c1, c1, 3, 1)];
    let head = conv(c1, 1, 1, 1);
    let mut params = vec![0.0; offset];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for layer in enc.iter().chain(&dec).chain(std::iter::once(&head)) {
        layer.init(&mut params, &mut rng);
    }
    Ok(ReferenceBackbone { config: config.clone(), enc, dec, head, params })
}

pub(crate) fn build_boxed(config: &BackboneConfig) -> Result<Box<dyn Backbone>> {
    Ok(Box::new(build(config)?))
}

impl ReferenceBackbone {
    fn level(&self, l: usize) -> (usize, usize) {
        (self.config.height >> l, self.config.width >> l)
    }
}

impl Backbone for ReferenceBackbone {
    fn name(&self) -> &str {
        NAME
    }

    fn spec(&self) -> BackboneSpec {
        let (h, w) = self.level(3);
        BackboneSpec {
            input_resolution: (self.config.height, self.config.width),
            trunk_shape: (self.enc[2].out_ch, h, w),
            parameter_count: self.params.len(),
        }
    }

    fn config(&self) -> &BackboneConfig {
        &self.config
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, image: &ImageGrid) -> Result<BackboneOutput> {
        let (h, w) = self.level(0);
        if image.dims() != (h, w) {
            return Err(Error::Resolution { height: image.height(), width: image.width(), reason: format!("backbone expects {h}x{w}") });
        }
        let p = &self.params;
        let x = image.data().to_vec();
        let mut acts = vec![Vec::new(); 10];

        let mut prev = x.clone();
        for (l, conv) in self.enc.iter().enumerate() {
            let (lh, lw) = self.level(l);
            let mut a = conv.forward(p, &prev, lh, lw);
            relu_inplace(&mut a);
            acts[E1 + l] = a.clone();
            prev = a;
        }
        acts[INPUT] = x;

        // Decoder: up(deeper) ++ skip -> conv -> relu
        let skips = [Some(E2), Some(E1), None];
        let cats = [CAT3, CAT2, CAT1];
        let outs = [D3, D2, D1];
        let mut deeper = acts[E3].clone();
        let mut deeper_ch = self.enc[2].out_ch;
        for (i, conv) in self.dec.iter().enumerate() {
            let (dh, dw) = self.level(3 - i);
            let mut cat = upsample2x(&deeper, deeper_ch, dh, dw);
            if let Some(skip) = skips[i] {
                cat.extend_from_slice(&acts[skip]);
            }
            let (uh, uw) = self.level(2 - i);
            let mut d = conv.forward(p, &cat, uh, uw);
            relu_inplace(&mut d);
            acts[cats[i]] = cat;
            deeper = d.clone();
            deeper_ch = conv.out_ch;
            acts[outs[i]] = d;
        }

        let logits = self.head.forward(p, &acts[D1], h, w);
        let map = CamoMap::new(h, w, logits.iter().map(|&z| sigmoid(z)).collect())?;
        Ok(BackboneOutput { map, trunk: acts[E3].clone(), trace: Trace { activations: acts } })
    }

    fn backward(&self, output: &BackboneOutput, grad_map: Option<&[f64]>, grad_trunk: Option<&[f64]>, grads: &mut [f64]) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::ShapeMismatch { what: "backbone gradient buffer", expected: self.params.len(), actual: grads.len() });
        }
        let acts = &output.trace.activations;
        let p = &self.params;
        let spec = self.spec();
        let sizes: Vec<usize> = (1..=3)
            .map(|l| {
                let (lh, lw) = self.level(l);
                self.enc[l - 1].out_ch * lh * lw
            })
            .collect();

        let mut g_e = [vec![0.0; sizes[0]], vec![0.0; sizes[1]], vec![0.0; sizes[2]]];

        if let Some(gm) = grad_map {
            let (h, w) = self.level(0);
            if gm.len() != h * w {
                return Err(Error::ShapeMismatch { what: "map gradient", expected: h * w, actual: gm.len() });
            }
            let gz: Vec<f64> = gm.iter().zip(output.map.data()).map(|(g, &s)| g * s * (1.0 - s)).collect();
            let mut g_d = vec![0.0; acts[D1].len()];
            self.head.backward(p, &acts[D1], h, w, &gz, grads, Some(&mut g_d));

            let cats = [CAT1, CAT2, CAT3];
            let outs = [D1, D2, D3];
            let skip_grad_slot = [None, Some(0usize), Some(1usize)];
            // Walk the decoder from the output back to the trunk.
            for step in 0..3 {
                let dec = &self.dec[2 - step];
                let (lh, lw) = self.level(step);
                relu_backward(&mut g_d, &acts[outs[step]]);
                let mut g_cat = vec![0.0; acts[cats[step]].len()];
                dec.backward(p, &acts[cats[step]], lh, lw, &g_d, grads, Some(&mut g_cat));
                let up_ch = if step == 2 { self.enc[2].out_ch } else { self.dec[2 - step - 1].out_ch };
                let up_len = up_ch * lh * lw;
                if let Some(slot) = skip_grad_slot[step] {
                    for (a, b) in g_e[slot].iter_mut().zip(&g_cat[up_len..]) {
                        *a += b;
                    }
                }
                let (dh, dw) = self.level(step + 1);
                g_d = upsample2x_backward(&g_cat[..up_len], up_ch, dh, dw);
            }
            for (a, b) in g_e[2].iter_mut().zip(&g_d) {
                *a += b;
            }
        }

        if let Some(gt) = grad_trunk {
            if gt.len() != spec.trunk_len() {
                return Err(Error::ShapeMismatch { what: "trunk gradient", expected: spec.trunk_len(), actual: gt.len() });
            }
            for (a, b) in g_e[2].iter_mut().zip(gt) {
                *a += b;
            }
        }

        if grad_map.is_none() && grad_trunk.is_none() {
            return Ok(());
        }

        // Encoder, deepest first. g_e[l] collects every consumer of E(l+1)
        // before its ReLU is applied.
        for l in (0..3).rev() {
            let mut g = std::mem::take(&mut g_e[l]);
            relu_backward(&mut g, &acts[E1 + l]);
            let (lh, lw) = self.level(l);
            let input = &acts[if l == 0 { INPUT } else { E1 + l - 1 }];
            let grad_in = if l == 0 { None } else { Some(g_e[l - 1].as_mut_slice()) };
            self.enc[l].backward(p, input, lh, lw, &g, grads, grad_in);
        }
        Ok(())
    }

    fn clone_box(&self) -> Box<dyn Backbone> {
        Box::new(self.clone())
    }
}
