use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use mre_core::dataset::RegionSample;
use mre_core::ensemble::{
    clip_average, confusion_with_classes, ensemble_predict, group_by_clip, mean_diagonal,
    predictions, write_report, ClipFrames, ConfusionMatrix, EnsembleWeights,
};
use mre_core::network::{Region, SubNetwork};
use mre_core::preprocess::PairRow;
use mre_core::training::{load_checkpoint, predict_scores};
use mre_core::Tensor;

use super::{create_dir, load_pairs};
use crate::config::RunConfig;
use crate::error::{usage, CliResult};

pub const REPORT_FILE: &str = "report.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Protocol {
    /// One prediction per image.
    Still,
    /// Frame scores averaged per clip, one prediction per clip.
    Clip,
}

#[derive(Clone, Debug)]
pub struct EvalSummary {
    pub confusion: ConfusionMatrix,
    pub mean_diagonal: f64,
    pub report: PathBuf,
}

/// Load the three sub-networks and order them left_eye, nose, mouth by the
/// region recorded in each checkpoint. The paired paths follow their network.
pub(crate) fn load_ensemble<T: Clone>(
    checkpoints: &[PathBuf],
    paired: &[T],
) -> CliResult<[(SubNetwork, T); 3]> {
    if checkpoints.len() != 3 {
        return Err(usage(anyhow!(
            "expected 3 checkpoints (one per region), got {}",
            checkpoints.len()
        )));
    }
    let mut slots: [Option<(SubNetwork, T)>; 3] = Default::default();
    for (path, extra) in checkpoints.iter().zip(paired) {
        let (net, _) = load_checkpoint(path)
            .with_context(|| format!("loading checkpoint {}", path.display()))?;
        let slot = Region::ALL.iter().position(|&r| r == net.region()).unwrap();
        if slots[slot].is_some() {
            return Err(usage(anyhow!(
                "two checkpoints were trained for region {}",
                net.region()
            )));
        }
        slots[slot] = Some((net, extra.clone()));
    }
    let [a, b, c] = slots;
    let (a, b, c) = (a.unwrap(), b.unwrap(), c.unwrap());
    let size = a.0.spec().input_size;
    if b.0.spec().input_size != size || c.0.spec().input_size != size {
        return Err(usage(anyhow!("checkpoints disagree on input size")));
    }
    Ok([a, b, c])
}

/// Every region manifest must list the same samples in the same order.
fn check_alignment(manifests: &[(&Path, &[PairRow]); 3]) -> anyhow::Result<()> {
    let (ref_path, reference) = manifests[0];
    for (path, rows) in &manifests[1..] {
        if rows.len() != reference.len() {
            bail!(
                "manifests differ in length: {} has {} rows, {} has {}",
                ref_path.display(),
                reference.len(),
                path.display(),
                rows.len()
            );
        }
        for (i, (a, b)) in reference.iter().zip(rows.iter()).enumerate() {
            if a.face != b.face || a.label != b.label || a.clip_id != b.clip_id {
                bail!(
                    "manifests diverge at row {}: {} has ({}, {}, {:?}), {} has ({}, {}, {:?})",
                    i + 1,
                    ref_path.display(),
                    a.face.display(),
                    a.label,
                    a.clip_id,
                    path.display(),
                    b.face.display(),
                    b.label,
                    b.clip_id
                );
            }
        }
    }
    Ok(())
}

struct Scored {
    ids: Vec<String>,
    labels: Vec<usize>,
    scores: Tensor,
}

fn by_clip(rows: &[PairRow], scores: &Tensor) -> anyhow::Result<Scored> {
    let ids: Vec<&str> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.clip_id.as_deref().ok_or_else(|| {
                anyhow!(
                    "row {} has no clip_id, required by the clip protocol",
                    i + 1
                )
            })
        })
        .collect::<anyhow::Result<_>>()?;
    let (_, k) = scores.dims2()?;
    let groups = group_by_clip(&ids);
    let mut clips = Vec::with_capacity(groups.len());
    let mut labels = Vec::with_capacity(groups.len());
    for (clip_id, members) in &groups {
        let label = rows[members[0]].label;
        if let Some(&m) = members.iter().find(|&&m| rows[m].label != label) {
            bail!(
                "clip '{clip_id}' mixes labels {label} and {} (row {})",
                rows[m].label,
                m + 1
            );
        }
        labels.push(label);
        clips.push(ClipFrames {
            clip_id: clip_id.clone(),
            frames: members
                .iter()
                .map(|&m| &scores.data()[m * k..(m + 1) * k])
                .collect(),
        });
    }
    Ok(Scored {
        ids: groups.into_iter().map(|(id, _)| id).collect(),
        labels,
        scores: clip_average(&clips)?,
    })
}

fn write_predictions(path: &Path, scored: &Scored, preds: &[usize]) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let (_, k) = scored.scores.dims2()?;
    let mut header = vec!["id".to_string(), "label".into(), "predicted".into()];
    header.extend((0..k).map(|c| format!("score_{c}")));
    w.write_record(&header)?;
    for (i, row) in scored.scores.data().chunks(k).enumerate() {
        let mut record = vec![
            scored.ids[i].clone(),
            scored.labels[i].to_string(),
            preds[i].to_string(),
        ];
        record.extend(row.iter().map(|v| format!("{v:.6}")));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(
    cfg: &RunConfig,
    checkpoints: &[PathBuf],
    manifests: &[PathBuf],
    weights: &EnsembleWeights,
    protocol: Protocol,
) -> CliResult<EvalSummary> {
    let out = cfg.out_dir()?;
    if manifests.len() != checkpoints.len() {
        return Err(usage(anyhow!(
            "{} checkpoints but {} manifests; pass one manifest per checkpoint",
            checkpoints.len(),
            manifests.len()
        )));
    }
    let ensemble = load_ensemble(checkpoints, manifests)?;
    let size = ensemble[0].0.spec().input_size;
    let num_classes = ensemble[0].0.spec().num_classes;

    let mut loaded: Vec<(Vec<PairRow>, Vec<RegionSample>)> = Vec::with_capacity(3);
    for (_, manifest) in &ensemble {
        loaded.push(load_pairs(manifest, size, cfg.dataset_mean)?);
    }
    check_alignment(&[
        (&ensemble[0].1, &loaded[0].0),
        (&ensemble[1].1, &loaded[1].0),
        (&ensemble[2].1, &loaded[2].0),
    ])?;

    let mut scores = Vec::with_capacity(3);
    for ((net, _), (_, samples)) in ensemble.iter().zip(&loaded) {
        scores.push(predict_scores(net, samples, 32)?);
    }
    let combined = ensemble_predict([&scores[0], &scores[1], &scores[2]], weights)?;

    let rows = &loaded[0].0;
    let scored = match protocol {
        Protocol::Still => Scored {
            ids: rows.iter().map(|r| r.face.display().to_string()).collect(),
            labels: rows.iter().map(|r| r.label).collect(),
            scores: combined,
        },
        Protocol::Clip => by_clip(rows, &combined)?,
    };
    let preds = predictions(&scored.scores)?;
    let confusion = confusion_with_classes(&preds, &scored.labels, num_classes)?;
    let mean = mean_diagonal(&confusion)?;

    create_dir(out)?;
    cfg.echo(out, "eval_config.json")?;
    let report = out.join(REPORT_FILE);
    let mut file = BufWriter::new(
        File::create(&report).with_context(|| format!("writing {}", report.display()))?,
    );
    write_report(&mut file, &confusion)?;
    file.flush()?;
    write_predictions(&out.join(PREDICTIONS_FILE), &scored, &preds)?;
    log::info!("mean diagonal {mean:.4} over {} predictions", preds.len());
    Ok(EvalSummary {
        confusion,
        mean_diagonal: mean,
        report,
    })
}
