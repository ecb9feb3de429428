use std::path::Path;

use anyhow::{anyhow, Context};
use mre_core::preprocess::ImageBuffer;
use mre_core::training::load_checkpoint;
use mre_core::Tensor;

use super::{create_dir, load_input};
use crate::config::RunConfig;
use crate::error::{usage, CliResult};

pub const GRID_FILE: &str = "grid.pgm";

/// Scale `values` to 0..=255 by their own min and max; a constant map becomes 0.
pub fn min_max_u8(values: &[f32]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi as f64 - lo as f64;
    if !(range > 0.0) {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|&v| ((v as f64 - lo as f64) / range * 255.0).round() as u8)
        .collect()
}

/// Channel tiles of one activation: `(channels, height, width)` plus the maps.
fn channel_maps(act: &Tensor) -> (usize, usize, usize, Vec<&[f32]>) {
    let (c, h, w) = match *act.shape() {
        [_, c, h, w] => (c, h, w),
        [_, d] => (1, 1, d),
        _ => (1, 1, act.len()),
    };
    let maps = act.data()[..c * h * w].chunks(h * w).collect();
    (c, h, w, maps)
}

/// Tiles laid out row-major with a one-pixel black gutter.
fn grid(tiles: &[ImageBuffer], h: usize, w: usize) -> mre_core::Result<ImageBuffer> {
    let cols = (tiles.len() as f64).sqrt().ceil() as usize;
    let rows = tiles.len().div_ceil(cols);
    let gw = cols * (w + 1) - 1;
    let gh = rows * (h + 1) - 1;
    let mut pixels = vec![0u8; gw * gh];
    for (i, tile) in tiles.iter().enumerate() {
        let (ox, oy) = ((i % cols) * (w + 1), (i / cols) * (h + 1));
        for y in 0..h {
            let dst = (oy + y) * gw + ox;
            pixels[dst..dst + w].copy_from_slice(&tile.pixels()[y * w..(y + 1) * w]);
        }
    }
    ImageBuffer::new(gw, gh, 1, pixels)
}

/// Write one PGM per channel of `layer` plus a combined grid; returns the tile count.
pub fn run(
    cfg: &RunConfig,
    checkpoint: &Path,
    face: &Path,
    region: &Path,
    layer: &str,
) -> CliResult<usize> {
    let out = cfg.out_dir()?;
    let (net, _) = load_checkpoint(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let names = net.activation_names();
    // A bare layer name refers to the whole-face branch.
    let resolved = if names.iter().any(|n| n == layer) {
        layer.to_string()
    } else {
        format!("face.{layer}")
    };
    if !names.contains(&resolved) {
        return Err(usage(anyhow!(
            "unknown layer '{layer}'; valid layers: {}",
            names.join(", ")
        )));
    }

    let size = net.spec().input_size;
    let face = load_input(face, size, cfg.dataset_mean)?;
    let region = load_input(region, size, cfg.dataset_mean)?;
    let act = net
        .activations(&face, &region)?
        .into_iter()
        .find(|(n, _)| *n == resolved)
        .map(|(_, t)| t)
        .expect("name was validated");

    create_dir(out)?;
    let (c, h, w, maps) = channel_maps(&act);
    let mut tiles = Vec::with_capacity(c);
    for (i, map) in maps.iter().enumerate() {
        let tile = ImageBuffer::new(w, h, 1, min_max_u8(map))?;
        tile.write(out.join(format!("tile_{i:03}.pgm")))?;
        tiles.push(tile);
    }
    grid(&tiles, h, w)?.write(out.join(GRID_FILE))?;
    log::info!("{resolved}: wrote {c} tiles of {w}x{h}");
    Ok(c)
}
