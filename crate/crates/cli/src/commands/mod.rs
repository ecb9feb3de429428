pub mod eval;
pub mod inspect;
pub mod predict;
pub mod preprocess;
pub mod train;

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use mre_core::dataset::RegionSample;
use mre_core::preprocess::{read_pair_manifest, to_tensor, ImageBuffer, PairRow};
use mre_core::Tensor;

/// Read an image and convert it, insisting on the network's input size.
pub(crate) fn load_input(path: &Path, size: usize, mean: [f32; 3]) -> anyhow::Result<Tensor> {
    let img = ImageBuffer::read(path).with_context(|| format!("reading {}", path.display()))?;
    if img.width() != size || img.height() != size {
        bail!(
            "{} is {}x{}, the network expects {size}x{size}",
            path.display(),
            img.width(),
            img.height()
        );
    }
    Ok(to_tensor(&img, mean))
}

pub(crate) fn load_pairs(
    manifest: &Path,
    size: usize,
    mean: [f32; 3],
) -> anyhow::Result<(Vec<PairRow>, Vec<RegionSample>)> {
    if !manifest.is_file() {
        bail!("manifest {} does not exist", manifest.display());
    }
    let rows = read_pair_manifest(manifest)
        .with_context(|| format!("reading manifest {}", manifest.display()))?;
    if rows.is_empty() {
        bail!("manifest {} has no rows", manifest.display());
    }
    let mut samples = Vec::with_capacity(rows.len());
    for row in &rows {
        let face = load_input(&row.face, size, mean)?;
        let region = load_input(&row.region, size, mean)?;
        let mut sample = RegionSample::new(face, region, row.label)?;
        sample.clip_id = row.clip_id.clone();
        samples.push(sample);
    }
    Ok((rows, samples))
}

pub(crate) fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
