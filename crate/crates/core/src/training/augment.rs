use rand::Rng;

use crate::types::Sample;

/// Rescales to the backbone resolution (bilinear image, nearest mask) and
/// flips both horizontally with probability 0.5.
pub fn augment(sample: &Sample, resolution: (usize, usize), rng: &mut impl Rng) -> Sample {
    let flip = rng.random_bool(0.5);
    augment_with(sample, resolution, flip)
}

pub fn augment_with(sample: &Sample, (h, w): (usize, usize), flip: bool) -> Sample {
    let (mut image, mut mask) = if sample.image.dims() == (h, w) {
        (sample.image.clone(), sample.mask.clone())
    } else {
        (sample.image.resize_bilinear(h, w), sample.mask.resize_nearest(h, w))
    };
    if flip {
        image = image.flip_horizontal();
        mask = mask.flip_horizontal();
    }
    Sample { image, mask, ..sample.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{derive_label, ImageGrid, MaskGrid, Source, Split};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(mask: Vec<u8>) -> Sample {
        let image = ImageGrid::new(2, 4, (0..24).map(|i| i as f64 / 23.0).collect()).unwrap();
        Sample::new(image, MaskGrid::new(2, 4, mask).unwrap(), Split::Train, Source::Synthetic).unwrap()
    }

    #[test]
    fn double_flip_is_identity() {
        let s = sample(vec![1, 1, 0, 0, 0, 1, 0, 0]);
        let back = augment_with(&augment_with(&s, (2, 4), true), (2, 4), true);
        assert_eq!(back, s);
    }

    #[test]
    fn flip_mirrors_mask_and_keeps_area() {
        let s = sample(vec![1, 1, 0, 0, 0, 1, 0, 0]);
        let f = augment_with(&s, (2, 4), true);
        assert_eq!(f.mask.data(), &[0, 0, 1, 1, 0, 0, 1, 0]);
        assert_eq!(f.mask.area(), s.mask.area());
    }

    #[test]
    fn zero_mask_stays_zero() {
        let s = sample(vec![0; 8]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..8 {
            let a = augment(&s, (8, 8), &mut rng);
            assert_eq!(a.image.dims(), (8, 8));
            assert!(a.mask.is_zero());
            assert_eq!(derive_label(&a.mask), a.label);
        }
    }
}
