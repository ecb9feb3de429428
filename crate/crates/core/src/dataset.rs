//! Training examples and a synthetic pattern set for smoke runs.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{shape_err, Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::tensor::Tensor;

/// One example: aligned whole face, aligned region crop, class label.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSample {
    /// `1 × C × S × S`
    pub face: Tensor,
    /// `1 × C × S × S`
    pub region: Tensor,
    pub label: usize,
    pub clip_id: Option<String>,
}

impl RegionSample {
    pub fn new(face: Tensor, region: Tensor, label: usize) -> Result<Self> {
        let (n, ..) = face.dims4()?;
        if n != 1 || face.shape() != region.shape() {
            return Err(shape_err!(
                "face {:?} and region {:?} must be equal single-sample NCHW tensors",
                face.shape(),
                region.shape()
            ));
        }
        Ok(Self {
            face,
            region,
            label,
            clip_id: None,
        })
    }

    pub fn with_clip(mut self, clip_id: impl Into<String>) -> Self {
        self.clip_id = Some(clip_id.into());
        self
    }
}

/// Stack the faces and regions of `samples` into two batch tensors.
pub fn collate(samples: &[&RegionSample]) -> Result<(Tensor, Tensor, Vec<usize>)> {
    let faces: Vec<&Tensor> = samples.iter().map(|s| &s.face).collect();
    let regions: Vec<&Tensor> = samples.iter().map(|s| &s.region).collect();
    Ok((
        Tensor::stack_batch(&faces)?,
        Tensor::stack_batch(&regions)?,
        samples.iter().map(|s| s.label).collect(),
    ))
}

fn face_pattern(class: usize, x: f32, y: f32) -> bool {
    // x, y in [0, 1)
    match class % 7 {
        0 => (0.4..0.6).contains(&y),
        1 => (0.4..0.6).contains(&x),
        2 => (x - y).abs() < 0.12,
        3 => (x + y - 1.0).abs() < 0.12,
        4 => (0.25..0.75).contains(&x) && (0.25..0.75).contains(&y),
        5 => {
            let r = ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt();
            (0.25..0.4).contains(&r)
        }
        _ => ((x * 4.0) as i32 + (y * 4.0) as i32) % 2 == 0,
    }
}

fn region_pattern(class: usize, x: f32, y: f32) -> bool {
    // a blob whose position on a ring encodes the class
    let angle = class as f32 * std::f32::consts::TAU / 7.0;
    let (cx, cy) = (0.5 + 0.3 * angle.cos(), 0.5 + 0.3 * angle.sin());
    (x - cx).powi(2) + (y - cy).powi(2) < 0.03
}

fn render(
    size: usize,
    channels: usize,
    shift: (f32, f32),
    noise: &[f32],
    on: impl Fn(f32, f32) -> bool,
) -> Tensor {
    let mut t = Tensor::zeros(&[1, channels, size, size]);
    let plane = size * size;
    for py in 0..size {
        for px in 0..size {
            let x = (px as f32 + 0.5) / size as f32 + shift.0;
            let y = (py as f32 + 0.5) / size as f32 + shift.1;
            let v = if on(x, y) { 0.5 } else { -0.5 } + noise[py * size + px];
            for c in 0..channels {
                t.data_mut()[c * plane + py * size + px] = v;
            }
        }
    }
    t
}

/// `classes × per_class` two-image samples whose face and region images
/// carry class-coded geometric patterns, jittered and noised per sample.
pub fn synthetic_patterns(
    classes: usize,
    per_class: usize,
    size: usize,
    channels: usize,
    seed: u64,
) -> Result<Vec<RegionSample>> {
    if classes == 0 || per_class == 0 || size == 0 || channels == 0 {
        return Err(Error::InvalidArgument(
            "synthetic set needs positive classes, per_class, size and channels".into(),
        ));
    }
    let normal = Normal::new(0.0f32, 0.1).expect("valid std");
    let mut out = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        for k in 0..per_class {
            let mut rng = seeded(derive_seed(seed, (class * per_class + k) as u64));
            let mut jitter = || {
                (
                    rng.random_range(-0.06f32..0.06),
                    rng.random_range(-0.06f32..0.06),
                )
            };
            let (fs, rs) = (jitter(), jitter());
            let mut draw = |_| normal.sample(&mut rng);
            let fnoise: Vec<f32> = (0..size * size).map(&mut draw).collect();
            let rnoise: Vec<f32> = (0..size * size).map(&mut draw).collect();
            let face = render(size, channels, fs, &fnoise, |x, y| {
                face_pattern(class, x, y)
            });
            let region = render(size, channels, rs, &rnoise, |x, y| {
                region_pattern(class, x, y)
            });
            out.push(RegionSample::new(face, region, class)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_counts_and_determinism() {
        let a = synthetic_patterns(7, 2, 16, 3, 5).unwrap();
        let b = synthetic_patterns(7, 2, 16, 3, 5).unwrap();
        assert_eq!(a.len(), 14);
        assert_eq!(a, b);
        assert_eq!(a[0].face.shape(), &[1, 3, 16, 16]);
        assert_eq!(a[13].label, 6);
    }

    #[test]
    fn rejects_mismatched_pair() {
        assert!(RegionSample::new(
            Tensor::zeros(&[1, 3, 8, 8]),
            Tensor::zeros(&[1, 3, 16, 16]),
            0
        )
        .is_err());
        assert!(RegionSample::new(
            Tensor::zeros(&[2, 3, 8, 8]),
            Tensor::zeros(&[2, 3, 8, 8]),
            0
        )
        .is_err());
    }
}
