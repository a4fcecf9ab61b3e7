use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::train::LabeledImage;
use crate::image::Grid2;
use crate::labels::{ClassId, ClassMembershipMap};

/// Two-class texture images: horizontal stripes (background) left of a
/// random vertical split and vertical stripes (road) right of it, with mild
/// intensity noise. Stripe period is 4 pixels with random phase.
pub fn toy_texture_dataset(count: usize, size: usize, seed: u64) -> Vec<LabeledImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let split = rng.random_range(size / 3..=2 * size / 3);
            let phase_h = rng.random_range(0..4);
            let phase_v = rng.random_range(0..4);
            let lo = rng.random_range(30..80) as f64;
            let hi = rng.random_range(150..230) as f64;
            let mut noise = Vec::with_capacity(size * size);
            for _ in 0..size * size {
                noise.push(rng.random_range(-12.0..12.0));
            }
            let image = Grid2::from_fn(size, size, |r, c| {
                let on = if c < split {
                    (r + phase_h) % 4 < 2
                } else {
                    (c + phase_v) % 4 < 2
                };
                let v = if on { hi } else { lo } + noise[r * size + c];
                v.clamp(0.0, 255.0) as u8
            });
            let labels = Grid2::from_fn(size, size, |_, c| {
                if c < split {
                    ClassId::Background as u8
                } else {
                    ClassId::Road as u8
                }
            });
            LabeledImage {
                image,
                labels: ClassMembershipMap::from_labels(labels).expect("valid classes"),
            }
        })
        .collect()
}
