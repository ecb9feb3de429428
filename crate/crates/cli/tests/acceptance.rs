//! End-to-end acceptance checks, one line of output per criterion.

mod common;
#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::f64::consts::PI;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{mre, p, stderr, tiny_config, write_pair_sets};
use mre_core::dataset::synthetic_patterns;
use mre_core::ensemble::{
    clip_average, confusion, ensemble_predict, mean_diagonal, predictions, write_report,
    ClipFrames, ConfusionMatrix, EnsembleWeights,
};
use mre_core::network::{build_subnetwork, ArchSpec, ChannelScale, LayerKind, Region, Side};
use mre_core::ops::softmax;
use mre_core::preprocess::{
    estimate_similarity, gaussian_noise, offline_augment, template, ImageBuffer,
    SimilarityTransform,
};
use mre_core::rng::seeded;
use mre_core::training::{accuracy, train, TrainConfig};
use mre_core::Tensor;
use rand::Rng as _;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, format!("took {t:.1?}, limit {limit:?}"))?;
    Ok(t)
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut report = oracles::layer_gradient_suite(1);
    report.merge(oracles::layer_gradient_suite(2));
    report.merge(oracles::toy_network_gradient_check(3, 240));
    let t = within(start, Duration::from_secs(60))?;
    ensure(
        report.probes >= 200,
        format!("only {} probes", report.probes),
    )?;
    ensure(
        report.passed(),
        format!(
            "{} of {} probes failed: {:?}",
            report.failures.len(),
            report.probes,
            report.failures.first()
        ),
    )?;
    Ok(format!(
        "{} probes, worst relative error {:.2e}, {t:.1?}",
        report.probes, report.worst_relative
    ))
}

fn conv_oracle() -> Outcome {
    let start = Instant::now();
    let worst = oracles::conv_oracle_max_error(17, 60);
    let t = within(start, Duration::from_secs(30))?;
    ensure(worst < 1e-5, format!("max deviation {worst:e}"))?;
    Ok(format!("60 draws, max deviation {worst:.1e}, {t:.1?}"))
}

fn toy_overfit() -> Outcome {
    let start = Instant::now();
    let data = synthetic_patterns(7, 8, 32, 3, 11).map_err(|e| e.to_string())?;
    let arch = ArchSpec::alexnet(32, ChannelScale::new(1, 8).unwrap());
    let cfg = TrainConfig {
        base_lr: 0.05,
        iterations: 300,
        batch_size: 8,
        seed: 1,
        ..TrainConfig::new(arch, Region::LeftEye)
    };
    let out = train(&cfg, &data).map_err(|e| e.to_string())?;
    let acc = accuracy(&out.net, &data).map_err(|e| e.to_string())?;
    let mean = |rows: &[mre_core::training::TraceRow]| {
        rows.iter().map(|r| r.loss).sum::<f64>() / rows.len() as f64
    };
    let first = mean(&out.trace[..20]);
    let last = mean(&out.trace[out.trace.len() - 20..]);
    let t = within(start, Duration::from_secs(600))?;
    ensure(acc >= 0.95, format!("train accuracy {acc:.3}"))?;
    ensure(
        last < first,
        format!("loss went from {first:.4} to {last:.4}"),
    )?;
    Ok(format!(
        "accuracy {acc:.3}, loss {first:.3} -> {last:.4}, {t:.1?}"
    ))
}

fn ensemble_exactness() -> Outcome {
    let basis = |c: usize| Tensor::from_fn(&[1, 7], |i| if i == c { 1.0 } else { 0.0 });
    let (e0, e1, e2) = (basis(0), basis(1), basis(2));
    for (name, w, expected) in [
        (
            "vgg",
            EnsembleWeights::vgg(),
            [4.0 / 7.0, 1.0 / 7.0, 2.0 / 7.0],
        ),
        (
            "alexnet",
            EnsembleWeights::alexnet(),
            [2.0 / 5.0, 1.0 / 5.0, 2.0 / 5.0],
        ),
    ] {
        ensure(
            w.alpha() == expected,
            format!("{name} preset is {:?}", w.alpha()),
        )?;
        let sum: f64 = w.alpha().iter().sum();
        ensure(
            (sum - 1.0).abs() < 1e-9,
            format!("{name} weights sum to {sum}"),
        )?;
        let out = ensemble_predict([&e0, &e1, &e2], &w).map_err(|e| e.to_string())?;
        let want = expected.map(|a| a as f32);
        ensure(
            out.data()[..3] == want,
            format!("{name}: basis output {:?}", out.data()),
        )?;
        ensure(
            out.data()[3..].iter().all(|&v| v == 0.0),
            format!("{name}: stray mass"),
        )?;
    }
    Ok("both presets reproduce their weights".into())
}

fn metric_exactness() -> Outcome {
    let per_class = [83.95, 57.50, 60.81, 88.78, 79.92, 86.02, 80.15];
    let rows: Vec<Vec<u64>> = per_class
        .iter()
        .enumerate()
        .map(|(c, pct)| {
            let hit = (pct * 100.0f64).round() as u64;
            let mut row = vec![0u64; 7];
            row[c] = hit;
            row[(c + 1) % 7] = 10_000 - hit;
            row
        })
        .collect();
    let cm = ConfusionMatrix::from_counts(&rows).map_err(|e| e.to_string())?;
    let md = mean_diagonal(&cm).map_err(|e| e.to_string())? * 100.0;
    ensure((md - 76.73).abs() < 0.005, format!("mean diagonal {md:.4}"))?;
    Ok(format!("mean diagonal {md:.4}%"))
}

fn train_ckpt(
    dir: &Path,
    cfg: &Path,
    manifest: &Path,
    region: Region,
    out: &str,
) -> Result<std::path::PathBuf, String> {
    let out = dir.join(out);
    let o = mre(&[
        "train",
        "--config",
        p(cfg),
        "--manifest",
        p(manifest),
        "--region",
        region.name(),
        "--out",
        p(&out),
    ]);
    ensure(o.status.success(), format!("train failed: {}", stderr(&o)))?;
    Ok(out)
}

fn protocol_equivalence() -> Outcome {
    // library level: ensembled scores averaged over singleton clips
    let mut rng = seeded(5);
    let mut scores = || {
        softmax(&Tensor::from_fn(&[30, 7], |_| {
            rng.random_range(-3.0f32..3.0)
        }))
        .unwrap()
    };
    let s = [scores(), scores(), scores()];
    let still = ensemble_predict([&s[0], &s[1], &s[2]], &EnsembleWeights::vgg())
        .map_err(|e| e.to_string())?;
    let clips: Vec<ClipFrames> = (0..30)
        .map(|i| ClipFrames {
            clip_id: format!("c{i}"),
            frames: vec![&still.data()[i * 7..(i + 1) * 7]],
        })
        .collect();
    let clip = clip_average(&clips).map_err(|e| e.to_string())?;
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(
        bits(&clip) == bits(&still),
        "clip scores differ from still scores",
    )?;
    let labels: Vec<usize> = (0..30).map(|i| i % 7).collect();
    let report = |t: &Tensor| {
        let cm = confusion(&predictions(t).unwrap(), &labels).unwrap();
        let mut out = Vec::new();
        write_report(&mut out, &cm).unwrap();
        out
    };
    ensure(report(&clip) == report(&still), "library reports differ")?;

    // through the binary on one-frame clips
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifests = write_pair_sets(&dir.path().join("data"), 3, 8, true, 21);
    let cfg = tiny_config(dir.path(), 0.05, "");
    let mut checkpoints = Vec::new();
    for (region, manifest) in Region::ALL.iter().zip(&manifests) {
        let out = train_ckpt(dir.path(), &cfg, manifest, *region, region.name())?;
        checkpoints.push(out.join("checkpoint.mre"));
    }
    let mut reports = Vec::new();
    for protocol in ["still", "clip"] {
        let out = dir.path().join(format!("eval_{protocol}"));
        let mut args = vec!["eval", "--protocol", protocol, "--out", p(&out)];
        for (c, m) in checkpoints.iter().zip(&manifests) {
            args.extend(["--checkpoint", p(c), "--manifest", p(m)]);
        }
        let o = mre(&args);
        ensure(o.status.success(), format!("eval failed: {}", stderr(&o)))?;
        reports.push(fs::read(out.join("report.csv")).map_err(|e| e.to_string())?);
    }
    ensure(
        reports[0] == reports[1],
        "CLI still and clip reports differ",
    )?;
    Ok("scores and reports identical bitwise, library and CLI".into())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifests = write_pair_sets(&dir.path().join("data"), 3, 8, false, 31);
    let cfg = tiny_config(
        dir.path(),
        0.05,
        r#", "augment": true, "crop_margin": 2, "seed": 99"#,
    );
    let a = train_ckpt(dir.path(), &cfg, &manifests[2], Region::Mouth, "a")?;
    let b = train_ckpt(dir.path(), &cfg, &manifests[2], Region::Mouth, "b")?;
    for file in ["checkpoint.mre", "loss.csv"] {
        let x = fs::read(a.join(file)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(file)).map_err(|e| e.to_string())?;
        ensure(
            !x.is_empty() && x == y,
            format!("{file} differs between runs"),
        )?;
    }
    Ok("checkpoint and loss trace byte-identical".into())
}

fn alignment_recovery() -> Outcome {
    let mut rng = seeded(2024);
    let src = template(64);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let truth = SimilarityTransform::new(
            rng.random_range(0.5..=2.0),
            rng.random_range(-PI..=PI),
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
        )
        .unwrap();
        let est =
            estimate_similarity(&src, &src.map(|q| truth.apply(q))).map_err(|e| e.to_string())?;
        let dtheta = (est.angle - truth.angle + PI).rem_euclid(2.0 * PI) - PI;
        for d in [
            est.scale - truth.scale,
            dtheta,
            est.tx - truth.tx,
            est.ty - truth.ty,
        ] {
            worst = worst.max(d.abs());
        }
    }
    ensure(worst < 1e-4, format!("worst parameter error {worst:e}"))?;
    Ok(format!(
        "100 similarities, worst parameter error {worst:.1e}"
    ))
}

fn augmentation_contract() -> Outcome {
    let mut rng = seeded(8);
    let img = ImageBuffer::from_fn(32, 24, 3, |_, _, _| rng.random()).map_err(|e| e.to_string())?;
    let variants = offline_augment(&img, 3).map_err(|e| e.to_string())?;
    ensure(variants.len() == 15, format!("{} variants", variants.len()))?;
    ensure(variants[0].hflip() == img, "flip is not an involution")?;
    let flat = ImageBuffer::filled(64, 64, 1, 128).map_err(|e| e.to_string())?;
    let noisy = gaussian_noise(&flat, 0.01, 4).map_err(|e| e.to_string())?;
    let mad = flat
        .pixels()
        .iter()
        .zip(noisy.pixels())
        .map(|(&a, &b)| (a as f64 - b as f64).abs() / 255.0)
        .sum::<f64>()
        / flat.pixels().len() as f64;
    let expected = (2.0 * 0.01 / PI).sqrt();
    ensure(
        (mad - expected).abs() < 0.2 * expected,
        format!("noise MAD {mad:.4}, expected {expected:.4}"),
    )?;
    Ok(format!(
        "15 variants, flip involution, noise MAD {mad:.4} vs {expected:.4}"
    ))
}

fn structural_audit() -> Outcome {
    let mut found = Vec::new();
    for (spec, want) in [
        (
            ArchSpec::vgg16(32, ChannelScale::new(1, 64).unwrap()),
            (13, 5),
        ),
        (
            ArchSpec::alexnet(32, ChannelScale::new(1, 8).unwrap()),
            (5, 3),
        ),
    ] {
        let net = build_subnetwork(&spec, Region::Nose, 0).map_err(|e| e.to_string())?;
        for side in [Side::Face, Side::Region] {
            let layers = net.branch_layers(side);
            let convs = layers.iter().filter(|(_, k)| *k == LayerKind::Conv).count();
            let pools = layers
                .iter()
                .filter(|(_, k)| *k == LayerKind::MaxPool)
                .count();
            ensure(
                (convs, pools) == want,
                format!(
                    "{} {side:?} branch has {convs} convs and {pools} pools",
                    spec.family
                ),
            )?;
        }
        found.push(format!("{} {}/{}", spec.family, want.0, want.1));
    }
    Ok(found.join(", "))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (2, "gradient suite", gradient_suite),
        (3, "convolution oracle", conv_oracle),
        (4, "toy overfit", toy_overfit),
        (5, "ensemble exactness", ensemble_exactness),
        (6, "metric exactness", metric_exactness),
        (7, "protocol equivalence", protocol_equivalence),
        (8, "determinism", determinism),
        (9, "alignment recovery", alignment_recovery),
        (10, "augmentation contract", augmentation_contract),
        (11, "structural audit", structural_audit),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
