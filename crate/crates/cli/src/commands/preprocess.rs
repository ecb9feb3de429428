use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use mre_core::network::Region;
use mre_core::preprocess::{
    extract_regions, offline_augment, read_dataset_manifest, standard_regions, template,
    write_pair_manifest, DatasetRow, ImageBuffer, Landmarks68, PairRow, RegionName,
};
use mre_core::rng::derive_seed;

use super::create_dir;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, ExitCode};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PreprocessSummary {
    pub rows_ok: usize,
    pub rows_failed: usize,
    pub images_written: usize,
}

/// Manifest file written for a region's pairs.
pub fn pair_manifest_name(region: Region) -> String {
    format!("{}.csv", region.name())
}

pub(crate) fn load_template(cfg: &RunConfig) -> anyhow::Result<Landmarks68> {
    let size = cfg.input_size as f64;
    match &cfg.template {
        Some(path) => {
            let unit = Landmarks68::read(path)
                .with_context(|| format!("reading template {}", path.display()))?;
            Ok(unit.map(|(x, y)| (x * size, y * size)))
        }
        None => Ok(template(cfg.input_size)),
    }
}

fn slot_of(name: RegionName) -> usize {
    RegionName::ALL.iter().position(|&n| n == name).unwrap()
}

fn stem(index: usize, path: &Path) -> String {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!("{index:05}_{name}")
}

/// Relative paths of the written crops, indexed like `RegionName::ALL`,
/// one entry per variant (the original first).
type Written = Vec<[PathBuf; 4]>;

fn process_row(
    index: usize,
    row: &DatasetRow,
    cfg: &RunConfig,
    tmpl: &Landmarks68,
    out: &Path,
) -> anyhow::Result<Written> {
    let img = ImageBuffer::read(&row.image)
        .with_context(|| format!("reading image {}", row.image.display()))?;
    let landmarks = Landmarks68::read(&row.landmarks)
        .with_context(|| format!("reading landmarks {}", row.landmarks.display()))?;
    let faces = extract_regions(&img, &landmarks, tmpl, &standard_regions(), cfg.input_size)?;

    let image_seed = derive_seed(cfg.seed, index as u64);
    let mut variants: Vec<[ImageBuffer; 4]> = vec![faces.crops.clone()];
    if cfg.augment_offline {
        let mut per_crop = Vec::with_capacity(4);
        for (slot, crop) in faces.crops.iter().enumerate() {
            per_crop.push(offline_augment(crop, derive_seed(image_seed, slot as u64))?);
        }
        for v in 0..per_crop[0].len() {
            variants.push(std::array::from_fn(|slot| per_crop[slot][v].clone()));
        }
    }

    let base = stem(index, &row.image);
    let mut written = Vec::with_capacity(variants.len());
    for (v, crops) in variants.iter().enumerate() {
        let name = if v == 0 {
            base.clone()
        } else {
            format!("{base}_aug{:02}", v - 1)
        };
        let paths: [PathBuf; 4] = std::array::from_fn(|slot| {
            let img = &crops[slot];
            PathBuf::from(RegionName::ALL[slot].as_str())
                .join(format!("{name}.{}", img.extension()))
        });
        for (img, rel) in crops.iter().zip(&paths) {
            img.write(out.join(rel))
                .with_context(|| format!("writing {}", out.join(rel).display()))?;
        }
        written.push(paths);
    }
    Ok(written)
}

pub fn run(cfg: &RunConfig, strict: bool) -> CliResult<PreprocessSummary> {
    let manifest = cfg.manifest_path()?;
    let out = cfg.out_dir()?;
    let rows = read_dataset_manifest(manifest)
        .with_context(|| format!("reading manifest {}", manifest.display()))?;
    let tmpl = load_template(cfg)?;
    for name in RegionName::ALL {
        create_dir(&out.join(name.as_str()))?;
    }
    cfg.echo(out, "preprocess_config.json")?;

    let mut summary = PreprocessSummary::default();
    let mut pairs: [Vec<PairRow>; 3] = Default::default();
    for (index, row) in rows.iter().enumerate() {
        match process_row(index, row, cfg, &tmpl, out) {
            Ok(written) => {
                summary.rows_ok += 1;
                summary.images_written += written.len() * 4;
                for paths in &written {
                    let face = &paths[slot_of(RegionName::WholeFace)];
                    for (k, region) in Region::ALL.iter().enumerate() {
                        pairs[k].push(PairRow {
                            face: face.clone(),
                            region: paths[slot_of((*region).into())].clone(),
                            label: row.label,
                            clip_id: row.clip_id.clone(),
                        });
                    }
                }
            }
            Err(e) => {
                summary.rows_failed += 1;
                log::error!("row {}: {e:#}", index + 1);
            }
        }
    }
    for (k, region) in Region::ALL.iter().enumerate() {
        write_pair_manifest(out.join(pair_manifest_name(*region)), &pairs[k])?;
    }
    log::info!(
        "preprocessed {} rows ({} failed), wrote {} images",
        summary.rows_ok,
        summary.rows_failed,
        summary.images_written
    );
    if summary.rows_failed > 0 && (strict || summary.rows_ok == 0) {
        return Err(CliError {
            code: ExitCode::Data,
            source: anyhow!("{} of {} rows failed", summary.rows_failed, rows.len()),
        });
    }
    Ok(summary)
}
