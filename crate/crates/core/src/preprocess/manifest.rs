//! CSV manifests: the raw dataset manifest and the per-region pair manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATASET_HEADER: [&str; 4] = ["image", "landmarks", "label", "clip_id"];
pub const PAIR_HEADER: [&str; 4] = ["face", "region", "label", "clip_id"];

/// One row of `image,landmarks,label,clip_id`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub image: PathBuf,
    pub landmarks: PathBuf,
    pub label: usize,
    pub clip_id: Option<String>,
}

/// One row of `face,region,label,clip_id`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRow {
    pub face: PathBuf,
    pub region: PathBuf,
    pub label: usize,
    pub clip_id: Option<String>,
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("{}: {e}", path.display()))
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, header: [&str; 4]) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => csv_err(path, format!("{other:?}")),
        })?;
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(csv_err(
            path,
            format!("header is {found:?}, expected {:?}", header.join(",")),
        ));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| csv_err(path, format!("row {}: {e}", i + 1))))
        .collect()
}

fn check_label(path: &Path, row: usize, label: usize) -> Result<()> {
    if label > 6 {
        return Err(csv_err(
            path,
            format!("row {row}: label {label} is outside 0..=6"),
        ));
    }
    Ok(())
}

/// Read a dataset manifest; relative paths resolve against the manifest's directory.
pub fn read_dataset_manifest(path: impl AsRef<Path>) -> Result<Vec<DatasetRow>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let rows: Vec<DatasetRow> = read_rows(path, DATASET_HEADER)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            check_label(path, i + 1, r.label)?;
            Ok(DatasetRow {
                image: resolve(base, r.image),
                landmarks: resolve(base, r.landmarks),
                clip_id: r.clip_id.filter(|c| !c.is_empty()),
                ..r
            })
        })
        .collect()
}

/// Read a pair manifest; relative paths resolve against the manifest's directory.
pub fn read_pair_manifest(path: impl AsRef<Path>) -> Result<Vec<PairRow>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let rows: Vec<PairRow> = read_rows(path, PAIR_HEADER)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            check_label(path, i + 1, r.label)?;
            Ok(PairRow {
                face: resolve(base, r.face),
                region: resolve(base, r.region),
                clip_id: r.clip_id.filter(|c| !c.is_empty()),
                ..r
            })
        })
        .collect()
}

pub fn write_pair_manifest(path: impl AsRef<Path>, rows: &[PairRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(PAIR_HEADER).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.face.to_string_lossy().as_ref(),
            r.region.to_string_lossy().as_ref(),
            &r.label.to_string(),
            r.clip_id.as_deref().unwrap_or(""),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_manifest(path: impl AsRef<Path>, rows: &[DatasetRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(DATASET_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.image.to_string_lossy().as_ref(),
            r.landmarks.to_string_lossy().as_ref(),
            &r.label.to_string(),
            r.clip_id.as_deref().unwrap_or(""),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}
