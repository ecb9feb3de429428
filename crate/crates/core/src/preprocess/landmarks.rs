//! 68-point facial landmarks and the canonical alignment template.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const NUM_LANDMARKS: usize = 68;

/// 68 `(x, y)` points in the standard ordering: jaw 0–16, brows 17–26,
/// nose 27–35, eyes 36–47, mouth 48–67.
#[derive(Clone, Debug, PartialEq)]
pub struct Landmarks68([(f64, f64); NUM_LANDMARKS]);

impl Landmarks68 {
    pub fn new(points: [(f64, f64); NUM_LANDMARKS]) -> Result<Self> {
        if let Some(i) = points
            .iter()
            .position(|(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(Error::Landmarks(format!("point {i} is not finite")));
        }
        Ok(Self(points))
    }

    pub fn from_slice(points: &[(f64, f64)]) -> Result<Self> {
        let arr: [(f64, f64); NUM_LANDMARKS] = points.try_into().map_err(|_| {
            Error::Landmarks(format!(
                "expected {NUM_LANDMARKS} points, got {}",
                points.len()
            ))
        })?;
        Self::new(arr)
    }

    pub fn points(&self) -> &[(f64, f64); NUM_LANDMARKS] {
        &self.0
    }

    pub fn map(&self, f: impl Fn((f64, f64)) -> (f64, f64)) -> Self {
        Self(self.0.map(f))
    }

    /// Centroid of the points at `indices`.
    pub fn centroid(&self, indices: &[usize]) -> (f64, f64) {
        let n = indices.len() as f64;
        let (sx, sy) = indices.iter().fold((0.0, 0.0), |(ax, ay), &i| {
            (ax + self.0[i].0, ay + self.0[i].1)
        });
        (sx / n, sy / n)
    }

    /// Parse the `.pts68` text format: 68 lines of `x y`. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::with_capacity(NUM_LANDMARKS);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut coord = || -> Result<f64> {
                fields
                    .next()
                    .and_then(|f| f.parse::<f64>().ok())
                    .ok_or_else(|| Error::Landmarks(format!("line {}: expected 'x y'", lineno + 1)))
            };
            let p = (coord()?, coord()?);
            if fields.next().is_some() {
                return Err(Error::Landmarks(format!(
                    "line {}: more than two values",
                    lineno + 1
                )));
            }
            points.push(p);
        }
        Self::from_slice(&points)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Landmarks(format!("{}: {e}", path.display())))
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|(x, y)| format!("{x} {y}\n")).collect()
    }
}

pub const JAW: std::ops::RangeInclusive<usize> = 0..=16;
pub const VIEWER_LEFT_BROW: std::ops::RangeInclusive<usize> = 17..=21;
pub const NOSE: std::ops::RangeInclusive<usize> = 27..=35;
pub const VIEWER_LEFT_EYE: std::ops::RangeInclusive<usize> = 36..=41;
pub const VIEWER_RIGHT_EYE: std::ops::RangeInclusive<usize> = 42..=47;
pub const MOUTH: std::ops::RangeInclusive<usize> = 48..=67;

/// Eye centres of the template in unit coordinates.
pub const TEMPLATE_EYES: [(f64, f64); 2] = [(0.31, 0.38), (0.69, 0.38)];

/// Six eye-contour points starting at the viewer-left corner, running clockwise.
fn eye(center: (f64, f64)) -> [(f64, f64); 6] {
    let (cx, cy) = center;
    let (a, b) = (0.07, 0.025);
    [
        (cx - a, cy),
        (cx - a / 3.0, cy - b),
        (cx + a / 3.0, cy - b),
        (cx + a, cy),
        (cx + a / 3.0, cy + b),
        (cx - a / 3.0, cy + b),
    ]
}

/// Mean-face template in the unit square (x right, y down).
///
/// A smooth parametric 68-point face: jaw on a half ellipse, arched brows,
/// elliptical eyes whose centroids sit exactly on [`TEMPLATE_EYES`], and
/// two concentric mouth contours.
pub fn unit_template() -> Landmarks68 {
    let mut pts = [(0.0, 0.0); NUM_LANDMARKS];
    for i in 0..=16 {
        let theta = PI - i as f64 * PI / 16.0;
        pts[i] = (0.5 + 0.40 * theta.cos(), 0.36 + 0.50 * theta.sin());
    }
    for k in 0..5 {
        let arch = 0.04 * (PI * k as f64 / 4.0).sin();
        pts[17 + k] = (0.16 + 0.07 * k as f64, 0.27 - arch);
        pts[22 + k] = (0.56 + 0.07 * k as f64, 0.27 - arch);
    }
    for (k, y) in [0.40, 0.46, 0.52, 0.58].into_iter().enumerate() {
        pts[27 + k] = (0.5, y);
    }
    for (k, (x, y)) in [
        (0.42, 0.62),
        (0.46, 0.635),
        (0.5, 0.645),
        (0.54, 0.635),
        (0.58, 0.62),
    ]
    .into_iter()
    .enumerate()
    {
        pts[31 + k] = (x, y);
    }
    pts[36..42].copy_from_slice(&eye(TEMPLATE_EYES[0]));
    pts[42..48].copy_from_slice(&eye(TEMPLATE_EYES[1]));
    let (mcx, mcy) = (0.5, 0.76);
    for j in 0..12 {
        let phi = PI - j as f64 * PI / 6.0;
        pts[48 + j] = (mcx + 0.13 * phi.cos(), mcy - 0.045 * phi.sin());
    }
    for j in 0..8 {
        let phi = PI - j as f64 * PI / 4.0;
        pts[60 + j] = (mcx + 0.08 * phi.cos(), mcy - 0.018 * phi.sin());
    }
    Landmarks68(pts)
}

/// The unit template scaled to an `size × size` pixel frame.
pub fn template(size: usize) -> Landmarks68 {
    let s = size as f64;
    unit_template().map(|(x, y)| (x * s, y * s))
}
