#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mre_core::dataset::synthetic_patterns;
use mre_core::network::Region;
use mre_core::preprocess::{
    from_tensor, template, write_dataset_manifest, write_pair_manifest, DatasetRow, ImageBuffer,
    Landmarks68, PairRow, SimilarityTransform,
};
use mre_core::rng::seeded;
use rand::Rng;

pub const MEAN: [f32; 3] = [0.5; 3];

pub fn mre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mre"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn mre")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Raw RGB "faces": landmarks are the template under a random similarity,
/// drawn as dark dots on a smooth background. Returns the dataset manifest.
pub fn write_raw_faces(dir: &Path, count: usize, clips: bool, seed: u64) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let mut rng = seeded(seed);
    let size = 80;
    let mut rows = Vec::new();
    for i in 0..count {
        let t = SimilarityTransform::new(
            rng.random_range(1.1..1.4),
            rng.random_range(-0.2..0.2),
            rng.random_range(4.0..10.0),
            rng.random_range(4.0..10.0),
        )
        .unwrap();
        let points = template(48).map(|q| t.apply(q));
        let shade = (i * 30 % 200) as u8;
        let img = ImageBuffer::from_fn(size, size, 3, |x, y, c| {
            let near = points
                .points()
                .iter()
                .any(|&(px, py)| (px - x as f64).abs() < 1.5 && (py - y as f64).abs() < 1.5);
            if near {
                20
            } else {
                (60 + (x + 2 * y) % 100) as u8 / 2 + shade / 2 + c as u8 * 10
            }
        })
        .unwrap();
        let image = dir.join(format!("face{i}.ppm"));
        img.write(&image).unwrap();
        let landmarks = PathBuf::from(format!("{}.pts68", image.display()));
        fs::write(&landmarks, points.to_text()).unwrap();
        rows.push(DatasetRow {
            image: PathBuf::from(image.file_name().unwrap()),
            landmarks: PathBuf::from(landmarks.file_name().unwrap()),
            label: i % 7,
            clip_id: clips.then(|| format!("clip{}", i / 2)),
        });
    }
    let manifest = dir.join("manifest.csv");
    write_dataset_manifest(&manifest, &rows).unwrap();
    manifest
}

/// Pair manifests for every region, written straight from the synthetic
/// pattern generator. One sample per clip when `clips` is set.
pub fn write_pair_sets(
    dir: &Path,
    per_class: usize,
    size: usize,
    clips: bool,
    seed: u64,
) -> [PathBuf; 3] {
    fs::create_dir_all(dir.join("img")).unwrap();
    let samples = synthetic_patterns(7, per_class, size, 3, seed).unwrap();
    let mut faces = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let face = PathBuf::from(format!("img/face{i}.ppm"));
        from_tensor(&s.face, MEAN)
            .unwrap()
            .write(dir.join(&face))
            .unwrap();
        faces.push(face);
    }
    Region::ALL.map(|region| {
        // Each region gets its own draw of the same class-coded patterns.
        let own =
            synthetic_patterns(7, per_class, size, 3, seed + 1 + region.code() as u64).unwrap();
        let rows: Vec<PairRow> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let crop = PathBuf::from(format!("img/{}{i}.ppm", region.name()));
                from_tensor(&own[i].region, MEAN)
                    .unwrap()
                    .write(dir.join(&crop))
                    .unwrap();
                PairRow {
                    face: faces[i].clone(),
                    region: crop,
                    label: s.label,
                    clip_id: clips.then(|| format!("clip{i}")),
                }
            })
            .collect();
        let manifest = dir.join(format!("{}.csv", region.name()));
        write_pair_manifest(&manifest, &rows).unwrap();
        manifest
    })
}

/// A config for a network small enough to train in well under a second.
pub fn tiny_config(dir: &Path, base_lr: f64, extra: &str) -> PathBuf {
    let path = dir.join("tiny.json");
    let body = format!(
        r#"{{"family": "alexnet", "input_size": 8, "channel_scale": "1/16", "fc_widths": [8],
            "batch_size": 7, "base_lr": {base_lr:e}, "total_iterations": 20{extra}}}"#
    );
    fs::write(&path, body).unwrap();
    path
}

pub fn landmarks_of(path: &Path) -> Landmarks68 {
    Landmarks68::read(path).unwrap()
}
