//! Landmark-defined crops of the aligned face.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::Region;
use crate::preprocess::align::resample_box;
use crate::preprocess::image::ImageBuffer;
use crate::preprocess::landmarks::{Landmarks68, NUM_LANDMARKS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegionName {
    WholeFace,
    LeftEye,
    Nose,
    Mouth,
}

impl RegionName {
    pub const ALL: [RegionName; 4] = [
        RegionName::WholeFace,
        RegionName::LeftEye,
        RegionName::Nose,
        RegionName::Mouth,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegionName::WholeFace => "whole_face",
            RegionName::LeftEye => "left_eye",
            RegionName::Nose => "nose",
            RegionName::Mouth => "mouth",
        }
    }
}

impl From<Region> for RegionName {
    fn from(r: Region) -> Self {
        match r {
            Region::LeftEye => RegionName::LeftEye,
            Region::Nose => RegionName::Nose,
            Region::Mouth => RegionName::Mouth,
        }
    }
}

impl fmt::Display for RegionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegionName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown region '{s}'")))
    }
}

/// A crop: which template landmarks bound it and how far to grow the box.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionDef {
    pub name: RegionName,
    pub indices: Vec<usize>,
    /// Each half-extent of the bounding box is multiplied by `1 + margin`.
    pub margin: f64,
}

impl RegionDef {
    pub fn new(name: RegionName, indices: Vec<usize>, margin: f64) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "region {name} has no landmarks"
            )));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= NUM_LANDMARKS) {
            return Err(Error::InvalidArgument(format!(
                "region {name} references landmark {i}"
            )));
        }
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "region {name} margin must be ≥ 0, got {margin}"
            )));
        }
        Ok(Self {
            name,
            indices,
            margin,
        })
    }

    /// The shipped definition for `name`.
    pub fn standard(name: RegionName) -> Self {
        let (indices, margin): (Vec<usize>, f64) = match name {
            RegionName::WholeFace => ((0..=67).collect(), 0.1),
            // viewer-left brow and eye
            RegionName::LeftEye => ((17..=21).chain(36..=41).collect(), 0.6),
            RegionName::Nose => ((27..=35).collect(), 0.5),
            RegionName::Mouth => ((48..=67).collect(), 0.4),
        };
        Self {
            name,
            indices,
            margin,
        }
    }

    /// Square box `(x0, y0, x1, y1)` around the region's template landmarks,
    /// clipped to a `width × height` frame.
    pub fn crop_box(
        &self,
        template: &Landmarks68,
        width: usize,
        height: usize,
    ) -> Result<(f64, f64, f64, f64)> {
        let pts = template.points();
        let (mut minx, mut miny) = (f64::INFINITY, f64::INFINITY);
        let (mut maxx, mut maxy) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &i in &self.indices {
            let (x, y) = pts[i];
            minx = minx.min(x);
            maxx = maxx.max(x);
            miny = miny.min(y);
            maxy = maxy.max(y);
        }
        let (cx, cy) = ((minx + maxx) / 2.0, (miny + maxy) / 2.0);
        let grow = 1.0 + self.margin;
        let half = ((maxx - minx) / 2.0 * grow).max((maxy - miny) / 2.0 * grow);
        let x0 = (cx - half).max(0.0);
        let y0 = (cy - half).max(0.0);
        let x1 = (cx + half).min((width - 1) as f64);
        let y1 = (cy + half).min((height - 1) as f64);
        if x1 - x0 < 1.0 || y1 - y0 < 1.0 {
            return Err(Error::Degenerate(format!(
                "crop box for {} is degenerate after clamping: ({x0:.2}, {y0:.2})–({x1:.2}, {y1:.2})",
                self.name
            )));
        }
        Ok((x0, y0, x1, y1))
    }
}

/// Crop `region` out of an image already aligned to `template` and resample it
/// to `out_size × out_size`.
pub fn crop_region(
    aligned: &ImageBuffer,
    region: &RegionDef,
    template: &Landmarks68,
    out_size: usize,
) -> Result<ImageBuffer> {
    let bbox = region.crop_box(template, aligned.width(), aligned.height())?;
    resample_box(aligned, bbox, out_size)
}
