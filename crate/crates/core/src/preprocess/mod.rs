//! Landmark alignment, region cropping, offline augmentation and image I/O.

mod align;
mod augment;
mod convert;
mod image;
mod landmarks;
mod manifest;
mod regions;

pub use align::{
    estimate_similarity, estimate_similarity_points, resample_box, rotate, warp, warp_resize,
    SimilarityTransform,
};
pub use augment::{gaussian_noise, offline_augment, NOISE_VARIANCES, NUM_VARIANTS, ROTATIONS};
pub use convert::{from_tensor, to_tensor};
pub use image::ImageBuffer;
pub use landmarks::{
    template, unit_template, Landmarks68, JAW, MOUTH, NOSE, NUM_LANDMARKS, TEMPLATE_EYES,
    VIEWER_LEFT_BROW, VIEWER_LEFT_EYE, VIEWER_RIGHT_EYE,
};
pub use manifest::{
    read_dataset_manifest, read_pair_manifest, write_dataset_manifest, write_pair_manifest,
    DatasetRow, PairRow, DATASET_HEADER, PAIR_HEADER,
};
pub use regions::{crop_region, RegionDef, RegionName};

use crate::error::Result;

/// The four crops of one face, indexed like [`RegionName::ALL`].
#[derive(Clone, Debug, PartialEq)]
pub struct FaceCrops {
    pub aligned: ImageBuffer,
    pub crops: [ImageBuffer; 4],
}

impl FaceCrops {
    pub fn get(&self, name: RegionName) -> &ImageBuffer {
        &self.crops[RegionName::ALL.iter().position(|&r| r == name).unwrap()]
    }
}

/// Align `img` to `template` (given in an `out_size` frame) and cut out every region.
pub fn extract_regions(
    img: &ImageBuffer,
    landmarks: &Landmarks68,
    template: &Landmarks68,
    regions: &[RegionDef; 4],
    out_size: usize,
) -> Result<FaceCrops> {
    let t = estimate_similarity(landmarks, template)?;
    let aligned = warp_resize(img, &t, out_size)?;
    let crops = [
        crop_region(&aligned, &regions[0], template, out_size)?,
        crop_region(&aligned, &regions[1], template, out_size)?,
        crop_region(&aligned, &regions[2], template, out_size)?,
        crop_region(&aligned, &regions[3], template, out_size)?,
    ];
    Ok(FaceCrops { aligned, crops })
}

/// Standard definitions in [`RegionName::ALL`] order.
pub fn standard_regions() -> [RegionDef; 4] {
    RegionName::ALL.map(RegionDef::standard)
}
