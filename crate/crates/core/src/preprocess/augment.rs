//! Fifteen-variant offline augmentation.

use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::preprocess::align::rotate;
use crate::preprocess::image::ImageBuffer;
use crate::rng::seeded;

/// Rotation angles in degrees.
pub const ROTATIONS: [f64; 4] = [4.0, -4.0, 6.0, -6.0];
/// Noise variances in unit-intensity space.
pub const NOISE_VARIANCES: [f64; 3] = [0.001, 0.01, 0.015];
pub const NUM_VARIANTS: usize = 1 + 2 * ROTATIONS.len() + 2 * NOISE_VARIANCES.len();

/// Add `N(0, variance)` noise to every sample in `[0, 1]` space, clamp, requantize.
pub fn gaussian_noise(img: &ImageBuffer, variance: f64, seed: u64) -> Result<ImageBuffer> {
    let normal = Normal::new(0.0, variance.sqrt()).expect("variance is finite and nonnegative");
    let mut rng = seeded(seed);
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| {
            let v = (p as f64 / 255.0 + normal.sample(&mut rng)).clamp(0.0, 1.0);
            (v * 255.0).round() as u8
        })
        .collect();
    ImageBuffer::new(img.width(), img.height(), img.channels(), pixels)
}

/// The fifteen offline variants of `img`, in this order:
///
/// - 0: horizontal flip
/// - 1–4: rotations by +4°, −4°, +6°, −6°
/// - 5–8: the same rotations of the flip
/// - 9–11: noise with variance 0.001, 0.01, 0.015
/// - 12–14: the same noise levels on the flip
///
/// Noise draws depend only on `seed`; the first nine variants ignore it.
pub fn offline_augment(img: &ImageBuffer, seed: u64) -> Result<Vec<ImageBuffer>> {
    let flipped = img.hflip();
    let mut out = Vec::with_capacity(NUM_VARIANTS);
    out.push(flipped.clone());
    for base in [img, &flipped] {
        for deg in ROTATIONS {
            out.push(rotate(base, deg)?);
        }
    }
    let mut stream = 0u64;
    for base in [img, &flipped] {
        for var in NOISE_VARIANCES {
            out.push(gaussian_noise(
                base,
                var,
                crate::rng::derive_seed(seed, stream),
            )?);
            stream += 1;
        }
    }
    debug_assert_eq!(out.len(), NUM_VARIANTS);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_variants() {
        let img = ImageBuffer::from_fn(12, 10, 1, |x, y, _| (x * 20 + y) as u8).unwrap();
        let out = offline_augment(&img, 0).unwrap();
        assert_eq!(out.len(), 15);
        assert_eq!(out[0].hflip(), img);
        assert!(out.iter().all(|v| v.width() == 12 && v.height() == 10));
    }

    #[test]
    fn noise_free_variants_ignore_seed() {
        let img = ImageBuffer::from_fn(9, 9, 3, |x, y, c| (x * 25 + y * 3 + c) as u8).unwrap();
        let a = offline_augment(&img, 1).unwrap();
        let b = offline_augment(&img, 2).unwrap();
        assert_eq!(a[..9], b[..9]);
        assert_ne!(a[9..], b[9..]);
        assert_eq!(a, offline_augment(&img, 1).unwrap());
    }

    #[test]
    fn zero_variance_is_identity() {
        let img = ImageBuffer::from_fn(5, 5, 1, |x, y, _| (x * 50 + y) as u8).unwrap();
        assert_eq!(gaussian_noise(&img, 0.0, 9).unwrap(), img);
    }
}
