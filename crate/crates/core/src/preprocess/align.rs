//! Similarity alignment and bilinear resampling.

use crate::error::{Error, Result};
use crate::preprocess::image::ImageBuffer;
use crate::preprocess::landmarks::Landmarks68;

/// `q = s·R(θ)·p + t`, mapping source coordinates to template coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub angle: f64,
    pub tx: f64,
    pub ty: f64,
}

impl SimilarityTransform {
    pub const IDENTITY: SimilarityTransform = SimilarityTransform {
        scale: 1.0,
        angle: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn new(scale: f64, angle: f64, tx: f64, ty: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite())
            || !angle.is_finite()
            || !tx.is_finite()
            || !ty.is_finite()
        {
            return Err(Error::Degenerate(format!(
                "similarity needs finite parameters and positive scale, got s={scale} θ={angle}"
            )));
        }
        Ok(Self {
            scale,
            angle,
            tx,
            ty,
        })
    }

    /// Rotation by `angle` radians about `center`.
    pub fn rotation_about(center: (f64, f64), angle: f64) -> Self {
        let (sin, cos) = angle.sin_cos();
        let (cx, cy) = center;
        Self {
            scale: 1.0,
            angle,
            tx: cx - (cos * cx - sin * cy),
            ty: cy - (sin * cx + cos * cy),
        }
    }

    pub fn apply(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let (sin, cos) = self.angle.sin_cos();
        (
            self.scale * (cos * x - sin * y) + self.tx,
            self.scale * (sin * x + cos * y) + self.ty,
        )
    }

    pub fn apply_inverse(&self, (u, v): (f64, f64)) -> (f64, f64) {
        let (sin, cos) = self.angle.sin_cos();
        let (dx, dy) = ((u - self.tx) / self.scale, (v - self.ty) / self.scale);
        (cos * dx + sin * dy, -sin * dx + cos * dy)
    }

    pub fn inverse(&self) -> Self {
        let (tx, ty) = self.apply_inverse((0.0, 0.0));
        Self {
            scale: 1.0 / self.scale,
            angle: -self.angle,
            tx,
            ty,
        }
    }
}

/// Least-squares similarity taking `source` onto `target` (no reflection).
pub fn estimate_similarity(
    source: &Landmarks68,
    target: &Landmarks68,
) -> Result<SimilarityTransform> {
    estimate_similarity_points(source.points(), target.points())
}

/// Closed-form 2-D Procrustes fit over paired point lists.
pub fn estimate_similarity_points(
    source: &[(f64, f64)],
    target: &[(f64, f64)],
) -> Result<SimilarityTransform> {
    if source.len() != target.len() || source.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "point sets differ in size ({} vs {})",
            source.len(),
            target.len()
        )));
    }
    let n = source.len() as f64;
    let mean = |pts: &[(f64, f64)]| {
        let (sx, sy) = pts
            .iter()
            .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
        (sx / n, sy / n)
    };
    let (msx, msy) = mean(source);
    let (mtx, mty) = mean(target);
    let (mut var, mut dot, mut cross) = (0.0, 0.0, 0.0);
    for (&(sx, sy), &(tx, ty)) in source.iter().zip(target) {
        let (x, y) = (sx - msx, sy - msy);
        let (u, v) = (tx - mtx, ty - mty);
        var += x * x + y * y;
        dot += x * u + y * v;
        cross += x * v - y * u;
    }
    let spread = source
        .iter()
        .map(|&(x, y)| x.abs().max(y.abs()))
        .fold(1.0f64, f64::max);
    if var <= 1e-20 * spread * spread * n {
        return Err(Error::Degenerate("source points have zero variance".into()));
    }
    let a = dot / var;
    let b = cross / var;
    let scale = a.hypot(b);
    if scale <= 0.0 {
        return Err(Error::Degenerate("target points have zero variance".into()));
    }
    let angle = b.atan2(a);
    let (sin, cos) = angle.sin_cos();
    let tx = mtx - scale * (cos * msx - sin * msy);
    let ty = mty - scale * (sin * msx + cos * msy);
    SimilarityTransform::new(scale, angle, tx, ty)
}

fn sample_bilinear(img: &ImageBuffer, x: f64, y: f64, out: &mut [u8]) {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    for (ch, o) in out.iter_mut().enumerate().take(c) {
        let p00 = img.get(x0, y0, ch) as f64;
        let p10 = img.get(x1, y0, ch) as f64;
        let p01 = img.get(x0, y1, ch) as f64;
        let p11 = img.get(x1, y1, ch) as f64;
        let top = p00 + fx * (p10 - p00);
        let bottom = p01 + fx * (p11 - p01);
        let v = top + fy * (bottom - top);
        *o = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
    }
}

/// Resample `img` into a `width × height` frame: output pixel `q` reads the
/// source at `t⁻¹(q)` bilinearly, clamping to the edge outside the source.
pub fn warp(
    img: &ImageBuffer,
    t: &SimilarityTransform,
    width: usize,
    height: usize,
) -> Result<ImageBuffer> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(
            "output size must be at least 1".into(),
        ));
    }
    let c = img.channels();
    let mut pixels = vec![0u8; width * height * c];
    for v in 0..height {
        for u in 0..width {
            let (x, y) = t.apply_inverse((u as f64, v as f64));
            let at = (v * width + u) * c;
            sample_bilinear(img, x, y, &mut pixels[at..at + c]);
        }
    }
    ImageBuffer::new(width, height, c, pixels)
}

/// [`warp`] into a square `out_size × out_size` frame.
pub fn warp_resize(
    img: &ImageBuffer,
    t: &SimilarityTransform,
    out_size: usize,
) -> Result<ImageBuffer> {
    warp(img, t, out_size, out_size)
}

/// Axis-aligned resample of the box `[x0, x1] × [y0, y1]` (pixel-centre
/// coordinates) onto an `out_size × out_size` grid.
pub fn resample_box(
    img: &ImageBuffer,
    (x0, y0, x1, y1): (f64, f64, f64, f64),
    out_size: usize,
) -> Result<ImageBuffer> {
    if out_size == 0 {
        return Err(Error::InvalidArgument(
            "output size must be at least 1".into(),
        ));
    }
    let c = img.channels();
    let step = |lo: f64, hi: f64| {
        if out_size > 1 {
            (hi - lo) / (out_size - 1) as f64
        } else {
            0.0
        }
    };
    let (sx, sy) = (step(x0, x1), step(y0, y1));
    let mut pixels = vec![0u8; out_size * out_size * c];
    for v in 0..out_size {
        for u in 0..out_size {
            let at = (v * out_size + u) * c;
            sample_bilinear(
                img,
                x0 + u as f64 * sx,
                y0 + v as f64 * sy,
                &mut pixels[at..at + c],
            );
        }
    }
    ImageBuffer::new(out_size, out_size, c, pixels)
}

/// Rotate by `degrees` about the image centre (positive is counter-clockwise
/// as displayed), keeping the frame size.
pub fn rotate(img: &ImageBuffer, degrees: f64) -> Result<ImageBuffer> {
    let center = (
        (img.width() - 1) as f64 / 2.0,
        (img.height() - 1) as f64 / 2.0,
    );
    // y points down, so a displayed counter-clockwise turn is a negative angle
    let t = SimilarityTransform::rotation_about(center, -degrees.to_radians());
    warp(img, &t, img.width(), img.height())
}
