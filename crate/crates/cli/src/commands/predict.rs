use std::path::{Path, PathBuf};

use anyhow::Context;
use mre_core::ensemble::{ensemble_predict, predictions, EnsembleWeights};
use mre_core::network::Region;
use mre_core::ops::softmax;
use mre_core::preprocess::{
    extract_regions, standard_regions, to_tensor, ImageBuffer, Landmarks68, RegionName,
};

use super::eval::load_ensemble;
use super::preprocess::load_template;
use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub scores: Vec<f32>,
}

/// Landmark file next to an image: the image file name plus `.pts68`.
pub fn default_landmarks(image: &Path) -> PathBuf {
    let mut name = image.as_os_str().to_owned();
    name.push(".pts68");
    PathBuf::from(name)
}

/// Align one raw image, crop every region and run the weighted ensemble on it.
pub fn run(
    cfg: &RunConfig,
    checkpoints: &[PathBuf],
    image: &Path,
    landmarks: Option<&Path>,
    weights: &EnsembleWeights,
) -> CliResult<Prediction> {
    let ensemble = load_ensemble(checkpoints, &[(), (), ()])?;
    let size = ensemble[0].0.spec().input_size;
    let landmarks = landmarks
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_landmarks(image));

    let img =
        ImageBuffer::read(image).with_context(|| format!("reading image {}", image.display()))?;
    let points = Landmarks68::read(&landmarks)
        .with_context(|| format!("reading landmarks {}", landmarks.display()))?;
    let tmpl = load_template(&RunConfig {
        input_size: size,
        ..cfg.clone()
    })?;
    let crops = extract_regions(&img, &points, &tmpl, &standard_regions(), size)?;

    let face = to_tensor(crops.get(RegionName::WholeFace), cfg.dataset_mean);
    let mut scores = Vec::with_capacity(3);
    for ((net, _), region) in ensemble.iter().zip(Region::ALL) {
        let crop = to_tensor(crops.get(region.into()), cfg.dataset_mean);
        scores.push(softmax(&net.infer(&face, &crop)?)?);
    }
    let combined = ensemble_predict([&scores[0], &scores[1], &scores[2]], weights)?;
    Ok(Prediction {
        class: predictions(&combined)?[0],
        scores: combined.into_data(),
    })
}
