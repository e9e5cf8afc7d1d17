//! Multi-octave value noise on seeded lattices.

use rand::Rng;

pub const OCTAVES: usize = 4;

#[derive(Debug, Clone)]
struct Lattice {
    cells: usize,
    values: Vec<f64>,
}

impl Lattice {
    fn sample(&self, u: f64, v: f64) -> f64 {
        // u, v in [0, 1); lattice has (cells + 1)^2 nodes
        let side = self.cells + 1;
        let x = u * self.cells as f64;
        let y = v * self.cells as f64;
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x0, y0) = (x0.min(self.cells - 1), y0.min(self.cells - 1));
        let (fx, fy) = (smoothstep(x - x0 as f64), smoothstep(y - y0 as f64));
        let at = |r: usize, c: usize| self.values[r * side + c];
        let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
        let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Sum of [`OCTAVES`] value-noise layers, each doubling the lattice
/// frequency. Output is normalized to [0, 1].
#[derive(Debug, Clone)]
pub struct ValueNoise {
    layers: Vec<Lattice>,
    weights: [f64; OCTAVES],
}

impl ValueNoise {
    /// `base_cells` lattice cells per side in the coarsest octave. `roughness`
    /// in [0, 1] sets octave `k`'s weight to `roughness^k`, so 0 gives a
    /// single smooth layer and 1 weights all layers equally.
    pub fn new(base_cells: usize, roughness: f64, rng: &mut impl Rng) -> Self {
        let base_cells = base_cells.max(1);
        let layers = (0..OCTAVES)
            .map(|k| {
                let cells = base_cells << k;
                let values = (0..(cells + 1) * (cells + 1)).map(|_| rng.random::<f64>()).collect();
                Lattice { cells, values }
            })
            .collect();
        let mut weights = [0.0; OCTAVES];
        for (k, w) in weights.iter_mut().enumerate() {
            *w = if k == 0 { 1.0 } else { roughness.powi(k as i32) };
        }
        Self { layers, weights }
    }

    /// Noise value at normalized coordinates `u, v` in [0, 1).
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let total: f64 = self.weights.iter().sum();
        let acc: f64 = self.layers.iter().zip(&self.weights).map(|(l, w)| w * l.sample(u, v)).sum();
        (acc / total).clamp(0.0, 1.0)
    }

    /// Noise evaluated at the pixel centres of an `h x w` grid, row-major.
    pub fn render(&self, h: usize, w: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                out.push(self.sample((c as f64 + 0.5) / w as f64, (r as f64 + 0.5) / h as f64));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_and_bounded() {
        let a = ValueNoise::new(4, 0.7, &mut ChaCha8Rng::seed_from_u64(3)).render(16, 16);
        let b = ValueNoise::new(4, 0.7, &mut ChaCha8Rng::seed_from_u64(3)).render(16, 16);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        let c = ValueNoise::new(4, 0.7, &mut ChaCha8Rng::seed_from_u64(4)).render(16, 16);
        assert_ne!(a, c);
    }

    #[test]
    fn not_constant() {
        let v = ValueNoise::new(4, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).render(32, 32);
        let (lo, hi) = v.iter().fold((1.0f64, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        assert!(hi - lo > 0.1);
    }

    #[test]
    fn interpolates_lattice_nodes() {
        let n = ValueNoise::new(2, 0.0, &mut ChaCha8Rng::seed_from_u64(1));
        // with zero roughness only the coarsest layer contributes
        assert!((n.sample(0.0, 0.0) - n.layers[0].values[0]).abs() < 1e-15);
        assert!((n.sample(0.5, 0.0) - n.layers[0].values[1]).abs() < 1e-15);
    }

    #[test]
    fn roughness_adds_high_frequency_energy() {
        let energy = |rough: f64| {
            let v = ValueNoise::new(4, rough, &mut ChaCha8Rng::seed_from_u64(9)).render(64, 64);
            v.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
        };
        assert!(energy(1.0) > energy(0.0));
    }
}
