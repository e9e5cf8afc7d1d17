//! Classification stream: FC -> ReLU -> Dropout -> FC -> ReLU -> Dropout -> FC
//! -> Softmax over {camouflaged, non-camouflaged}, on top of the backbone trunk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backbone::BackboneSpec;
use crate::error::{Error, Result};
use crate::nn::{relu_backward, relu_inplace, softmax, Linear};
use crate::types::ClassLabel;

/// Hidden width for desk-scale runs, small enough that the head stays a
/// minor share of the forward cost at 64x64.
pub const DESK_HIDDEN_WIDTH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub hidden_width: usize,
    pub dropout: f64,
    /// Trunk features are global-average-pooled per channel when their
    /// flattened size exceeds this.
    pub trunk_cap: usize,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { hidden_width: 2048, dropout: 0.5, trunk_cap: 8192, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct ClassificationHead {
    config: HeadConfig,
    trunk_shape: (usize, usize, usize),
    pooled: bool,
    fc: [Linear; 3],
    params: Vec<f64>,
}

/// Activations of one head pass.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    pub input: Vec<f64>,
    pub hidden1: Vec<f64>,
    pub keep1: Vec<f64>,
    /// fc2 pre-activation.
    pub pre2: Vec<f64>,
    pub hidden2: Vec<f64>,
    pub keep2: Vec<f64>,
    pub logits: [f64; 2],
}

impl HeadTrace {
    pub fn probability(&self) -> f64 {
        camouflage_probability(self.logits)
    }
}

/// Softmax probability of the camouflaged class.
pub fn camouflage_probability(logits: [f64; 2]) -> f64 {
    softmax(&logits)[ClassLabel::Camouflaged.index()]
}

impl ClassificationHead {
    pub fn new(backbone: &BackboneSpec, config: HeadConfig) -> Result<Self> {
        if config.hidden_width == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", config.dropout)));
        }
        let trunk_shape = backbone.trunk_shape;
        let pooled = backbone.trunk_len() > config.trunk_cap;
        let input_dim = if pooled { trunk_shape.0 } else { backbone.trunk_len() };
        let d = config.hidden_width;
        let fc1 = Linear::new(input_dim, d, 0);
        let fc2 = Linear::new(d, d, fc1.end());
        let fc3 = Linear::new(d, 2, fc2.end());
        let mut params = vec![0.0; fc3.end()];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        for fc in [&fc1, &fc2, &fc3] {
            fc.init(&mut params, &mut rng);
        }
        Ok(Self { config, trunk_shape, pooled, fc: [fc1, fc2, fc3], params })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.fc[0].inputs
    }

    pub fn is_pooled(&self) -> bool {
        self.pooled
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Overwrites the output-layer bias, e.g. to pin the classifier.
    pub fn set_output_bias(&mut self, bias: [f64; 2]) {
        let start = self.fc[2].offset + self.fc[2].weight_count();
        self.params[start..start + 2].copy_from_slice(&bias);
    }

    /// Parameter range of the final affine layer.
    pub fn output_layer(&self) -> std::ops::Range<usize> {
        self.fc[2].offset..self.fc[2].end()
    }

    fn features(&self, trunk: &[f64]) -> Result<Vec<f64>> {
        let (c, h, w) = self.trunk_shape;
        if trunk.len() != c * h * w {
            return Err(Error::ShapeMismatch { what: "trunk features", expected: c * h * w, actual: trunk.len() });
        }
        Ok(if self.pooled { trunk.chunks(h * w).map(|ch| ch.iter().sum::<f64>() / (h * w) as f64).collect() } else { trunk.to_vec() })
    }

    fn dropout_mask(&self, n: usize, rng: Option<&mut ChaCha8Rng>) -> Vec<f64> {
        match rng {
            Some(rng) if self.config.dropout > 0.0 => {
                let scale = 1.0 / (1.0 - self.config.dropout);
                (0..n).map(|_| if rng.random::<f64>() < self.config.dropout { 0.0 } else { scale }).collect()
            }
            _ => vec![1.0; n],
        }
    }

    /// Forward pass. Dropout (inverted) is applied only when `dropout_rng` is
    /// given; without it the pass is the deterministic inference form.
    pub fn forward_trace(&self, trunk: &[f64], mut dropout_rng: Option<&mut ChaCha8Rng>) -> Result<HeadTrace> {
        let input = self.features(trunk)?;
        let p = &self.params;
        let mut hidden1 = self.fc[0].forward(p, &input);
        relu_inplace(&mut hidden1);
        let keep1 = self.dropout_mask(hidden1.len(), dropout_rng.as_deref_mut());
        let dropped1: Vec<f64> = hidden1.iter().zip(&keep1).map(|(a, k)| a * k).collect();
        let pre2 = self.fc[1].forward(p, &dropped1);
        let mut hidden2 = pre2.clone();
        relu_inplace(&mut hidden2);
        let keep2 = self.dropout_mask(hidden2.len(), dropout_rng);
        let dropped2: Vec<f64> = hidden2.iter().zip(&keep2).map(|(a, k)| a * k).collect();
        let out = self.fc[2].forward(p, &dropped2);
        let logits = [out[0], out[1]];
        if !logits.iter().all(|l| l.is_finite()) {
            return Err(Error::NonFinite("classifier logits"));
        }
        Ok(HeadTrace { input, hidden1, keep1, pre2, hidden2, keep2, logits })
    }

    /// Probability of the camouflaged class (inference form).
    pub fn forward(&self, trunk: &[f64]) -> Result<f64> {
        Ok(self.forward_trace(trunk, None)?.probability())
    }

    /// Backpropagates `dL/dlogits`, accumulating parameter gradients and
    /// returning `dL/dtrunk`.
    pub fn backward(&self, trace: &HeadTrace, grad_logits: [f64; 2], grads: &mut [f64]) -> Result<Vec<f64>> {
        if grads.len() != self.params.len() {
            return Err(Error::ShapeMismatch { what: "head gradient buffer", expected: self.params.len(), actual: grads.len() });
        }
        let p = &self.params;
        let d = self.config.hidden_width;
        let dropped2: Vec<f64> = trace.hidden2.iter().zip(&trace.keep2).map(|(a, k)| a * k).collect();
        let mut g2 = vec![0.0; d];
        self.fc[2].backward(p, &dropped2, &grad_logits, grads, Some(&mut g2));
        for (g, k) in g2.iter_mut().zip(&trace.keep2) {
            *g *= k;
        }
        relu_backward(&mut g2, &trace.hidden2);

        let dropped1: Vec<f64> = trace.hidden1.iter().zip(&trace.keep1).map(|(a, k)| a * k).collect();
        let mut g1 = vec![0.0; d];
        self.fc[1].backward(p, &dropped1, &g2, grads, Some(&mut g1));
        for (g, k) in g1.iter_mut().zip(&trace.keep1) {
            *g *= k;
        }
        relu_backward(&mut g1, &trace.hidden1);

        let mut g_in = vec![0.0; self.fc[0].inputs];
        self.fc[0].backward(p, &trace.input, &g1, grads, Some(&mut g_in));

        let (c, h, w) = self.trunk_shape;
        Ok(if self.pooled {
            let n = (h * w) as f64;
            (0..c * h * w).map(|i| g_in[i / (h * w)] / n).collect()
        } else {
            g_in
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(trunk: (usize, usize, usize)) -> BackboneSpec {
        BackboneSpec { input_resolution: (trunk.1 * 8, trunk.2 * 8), trunk_shape: trunk, parameter_count: 0 }
    }

    fn small(hidden: usize) -> ClassificationHead {
        ClassificationHead::new(&spec((4, 2, 2)), HeadConfig { hidden_width: hidden, ..HeadConfig::default() }).unwrap()
    }

    #[test]
    fn zeroed_output_layer_gives_half() {
        let mut head = small(8);
        let r = head.output_layer();
        head.params_mut()[r].fill(0.0);
        let trunk: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
        assert_eq!(head.forward(&trunk).unwrap(), 0.5);
    }

    #[test]
    fn logit_examples() {
        assert_eq!(camouflage_probability([3.3, 3.3]), 0.5);
        let e = std::f64::consts::E;
        assert!((camouflage_probability([1.0, 0.0]) - e / (e + 1.0)).abs() < 1e-15);
        assert!((camouflage_probability([1.0, 0.0]) - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn pinned_bias_saturates() {
        let mut head = small(8);
        let r = head.output_layer();
        head.params_mut()[r].fill(0.0);
        head.set_output_bias([-1000.0, 1000.0]);
        assert_eq!(head.forward(&[0.3; 16]).unwrap(), 0.0);
        head.set_output_bias([1000.0, -1000.0]);
        assert_eq!(head.forward(&[0.3; 16]).unwrap(), 1.0);
    }

    #[test]
    fn pooling_above_cap() {
        let cfg = HeadConfig { hidden_width: 4, trunk_cap: 8, ..HeadConfig::default() };
        let head = ClassificationHead::new(&spec((4, 2, 2)), cfg).unwrap();
        assert!(head.is_pooled());
        assert_eq!(head.input_dim(), 4);
        assert!(!small(4).is_pooled());
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(small(4).forward(&[0.0; 3]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn default_width_follows_architecture_table() {
        assert_eq!(HeadConfig::default().hidden_width, 2048);
        assert_eq!(HeadConfig::default().dropout, 0.5);
    }

    #[test]
    fn dropout_masks_are_zero_or_two() {
        let head = small(64);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = head.forward_trace(&[0.5; 16], Some(&mut rng)).unwrap();
        assert!(t.keep1.iter().chain(&t.keep2).all(|&k| k == 0.0 || k == 2.0));
        let eval = head.forward_trace(&[0.5; 16], None).unwrap();
        assert!(eval.keep1.iter().all(|&k| k == 1.0));
    }

    // Inverted dropout keeps each unit's expected value: over many draws the
    // mean of a kept-or-zeroed activation matches the deterministic value.
    #[test]
    fn dropout_preserves_expectation() {
        let head = small(8);
        let trunk = [0.3, -0.2, 0.9, 0.1, 0.4, 0.0, -0.5, 0.7, 0.2, 0.6, -0.1, 0.8, 0.5, -0.3, 0.05, 0.35];
        let reference = head.forward_trace(&trunk, None).unwrap().hidden1;
        let trials = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut sums = vec![0.0; reference.len()];
        for _ in 0..trials {
            let t = head.forward_trace(&trunk, Some(&mut rng)).unwrap();
            for (s, (a, k)) in sums.iter_mut().zip(t.hidden1.iter().zip(&t.keep1)) {
                *s += a * k;
            }
        }
        for (s, &a) in sums.iter().zip(&reference) {
            // each draw is 0 or 2a with equal odds: standard deviation |a|
            let se = a.abs() / (trials as f64).sqrt();
            assert!((s / trials as f64 - a).abs() <= 3.0 * se + 1e-15, "{} vs {a}", s / trials as f64);
        }
    }
}
