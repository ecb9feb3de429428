//! Binary checkpoint format.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! "MRE1"  u32 version
//! u32 family  u32 input_size  u32 in_channels  u32 scale_num  u32 scale_den
//! u32 fc_count  u32 fc_width × fc_count  u32 num_classes
//! u32 region
//! f64 base_lr  f64 momentum  f64 weight_decay
//! u32 schedule (0 linear, 1 constant)  u64 total_iterations  u64 iteration
//! u32 buffer_count
//! buffer_count × { u32 name_len, name, u32 rank, u32 extent × rank, f32 × len }
//! ```
//!
//! Parameters come first in network order, then one `velocity:<name>` buffer
//! per parameter.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{build_subnetwork, ArchSpec, ChannelScale, Family, Region, SubNetwork};
use crate::tensor::Tensor;
use crate::training::sgd::{LrSchedule, OptimizerState, SgdConfig};

pub const MAGIC: [u8; 4] = *b"MRE1";
pub const VERSION: u32 = 1;
const VELOCITY_PREFIX: &str = "velocity:";

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| {
            Error::InvalidArgument(format!("{v} does not fit the checkpoint's u32 field"))
        })?;
        self.u32(v);
        Ok(())
    }
    fn buffer(&mut self, name: &str, t: &Tensor) -> Result<()> {
        self.usize(name.len())?;
        self.0.extend_from_slice(name.as_bytes());
        self.usize(t.rank())?;
        for &e in t.shape() {
            self.usize(e)?;
        }
        for v in t.data() {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated(what))?;
        if end > self.bytes.len() {
            return Err(Error::Truncated(what));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn buffer(&mut self) -> Result<(String, Vec<usize>, Vec<f32>)> {
        let len = self.u32("buffer name length")? as usize;
        let name = String::from_utf8(self.take(len, "buffer name")?.to_vec())
            .map_err(|_| Error::Malformed("buffer name is not UTF-8".into()))?;
        let rank = self.u32("buffer rank")? as usize;
        if !(1..=4).contains(&rank) {
            return Err(Error::Malformed(format!("buffer '{name}' has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32("buffer extents")? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| Error::Malformed(format!("buffer '{name}' is too large")))?;
        let raw = self.take(
            count
                .checked_mul(4)
                .ok_or(Error::Truncated("buffer data"))?,
            "buffer data",
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((name, shape, data))
    }
}

/// Serialize a network and its optimizer state.
pub fn encode_checkpoint(net: &SubNetwork, opt: &OptimizerState) -> Result<Vec<u8>> {
    let spec = net.spec();
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&MAGIC);
    w.u32(VERSION);
    w.u32(spec.family.code());
    w.usize(spec.input_size)?;
    w.usize(spec.in_channels)?;
    w.u32(spec.channel_scale.num());
    w.u32(spec.channel_scale.den());
    w.usize(spec.fc_widths.len())?;
    for &width in &spec.fc_widths {
        w.usize(width)?;
    }
    w.usize(spec.num_classes)?;
    w.u32(net.region().code());

    let cfg = &opt.config;
    w.f64(cfg.base_lr);
    w.f64(cfg.momentum);
    w.f64(cfg.weight_decay);
    match cfg.schedule {
        LrSchedule::Linear { total_iterations } => {
            w.u32(0);
            w.u64(total_iterations);
        }
        LrSchedule::Constant => {
            w.u32(1);
            w.u64(0);
        }
    }
    w.u64(opt.iteration());

    let params = net.parameters();
    if params.len() != opt.velocities().len() {
        return Err(Error::InvalidArgument(
            "optimizer state does not belong to this network".into(),
        ));
    }
    w.usize(2 * params.len())?;
    for (name, p, _) in &params {
        w.buffer(name, p)?;
    }
    for ((name, _, _), v) in params.iter().zip(opt.velocities()) {
        w.buffer(&format!("{VELOCITY_PREFIX}{name}"), v)?;
    }
    Ok(w.0)
}

/// Parse a checkpoint produced by [`encode_checkpoint`].
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(SubNetwork, OptimizerState)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let family_code = r.u32("family")?;
    let family = Family::from_code(family_code)
        .ok_or_else(|| Error::Malformed(format!("unknown family code {family_code}")))?;
    let input_size = r.u32("input_size")? as usize;
    let in_channels = r.u32("in_channels")? as usize;
    let scale_num = r.u32("channel scale")?;
    let scale_den = r.u32("channel scale")?;
    let channel_scale =
        ChannelScale::new(scale_num, scale_den).map_err(|e| Error::Malformed(e.to_string()))?;
    let fc_count = r.u32("fc widths")? as usize;
    let mut fc_widths = Vec::with_capacity(fc_count.min(64));
    for _ in 0..fc_count {
        fc_widths.push(r.u32("fc widths")? as usize);
    }
    let num_classes = r.u32("num_classes")? as usize;
    let region_code = r.u32("region")?;
    let region = Region::from_code(region_code)
        .ok_or_else(|| Error::Malformed(format!("unknown region code {region_code}")))?;

    let base_lr = r.f64("optimizer")?;
    let momentum = r.f64("optimizer")?;
    let weight_decay = r.f64("optimizer")?;
    let schedule_kind = r.u32("schedule")?;
    let total_iterations = r.u64("schedule")?;
    let schedule = match schedule_kind {
        0 => LrSchedule::Linear { total_iterations },
        1 => LrSchedule::Constant,
        other => return Err(Error::Malformed(format!("unknown schedule code {other}"))),
    };
    let iteration = r.u64("iteration counter")?;

    let spec = ArchSpec {
        family,
        input_size,
        channel_scale,
        fc_widths,
        num_classes,
        in_channels,
    };
    spec.validate()
        .map_err(|e| Error::Malformed(e.to_string()))?;
    let mut net = build_subnetwork(&spec, region, 0)?;
    let names = net.param_names();

    let count = r.u32("buffer count")? as usize;
    if count != 2 * names.len() {
        return Err(Error::Malformed(format!(
            "expected {} buffers, header declares {count}",
            2 * names.len()
        )));
    }
    let mut velocities = Vec::with_capacity(names.len());
    for i in 0..count {
        let (name, shape, data) = r.buffer()?;
        let (expected_name, is_velocity) = if i < names.len() {
            (names[i].clone(), false)
        } else {
            (format!("{VELOCITY_PREFIX}{}", names[i - names.len()]), true)
        };
        if name != expected_name {
            return Err(Error::Malformed(format!(
                "buffer {i} is '{name}', expected '{expected_name}'"
            )));
        }
        let param_name = &names[i % names.len()];
        let expected_shape = net
            .param(param_name)
            .expect("name from network")
            .shape()
            .to_vec();
        if shape != expected_shape {
            return Err(Error::ShapeDisagreement {
                name,
                found: shape,
                expected: expected_shape,
            });
        }
        let tensor = Tensor::new(&shape, data)?;
        if is_velocity {
            velocities.push(tensor);
        } else {
            net.set_param(param_name, tensor)?;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after the last buffer",
            bytes.len() - r.pos
        )));
    }
    let config = SgdConfig {
        base_lr,
        momentum,
        weight_decay,
        schedule,
    };
    Ok((
        net,
        OptimizerState::from_parts(config, velocities, iteration),
    ))
}

pub fn save_checkpoint(
    net: &SubNetwork,
    opt: &OptimizerState,
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, encode_checkpoint(net, opt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(SubNetwork, OptimizerState)> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<u8> {
        let spec = ArchSpec::alexnet(8, ChannelScale::new(1, 16).unwrap())
            .with_fc_widths(vec![4])
            .with_classes(3);
        let net = build_subnetwork(&spec, Region::Nose, 3).unwrap();
        let opt = OptimizerState::new(SgdConfig::linear(0.01, 0.9, 1e-4, 20), &net).unwrap();
        encode_checkpoint(&net, &opt).unwrap()
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let bytes = sample();
        let (net, opt) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(encode_checkpoint(&net, &opt).unwrap(), bytes);
    }

    #[test]
    fn distinct_errors() {
        let bytes = sample();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::BadMagic(_))));

        let mut bad = bytes.clone();
        bad[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            decode_checkpoint(&bad),
            Err(Error::VersionMismatch { found: 7, .. })
        ));

        let bad = &bytes[..bytes.len() - 1];
        assert!(matches!(decode_checkpoint(bad), Err(Error::Truncated(_))));

        let mut bad = bytes.clone();
        bad.push(0);
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Malformed(_))));
    }

    #[test]
    fn shape_disagreement_detected() {
        let bytes = sample();
        // first buffer: name_len(4) name rank(4) extents...; bump the first extent
        let header_len = 4 + 4 + 4 * 5 + 4 + 4 + 4 + 4 + 8 * 3 + 4 + 8 + 8 + 4;
        let name_len =
            u32::from_le_bytes(bytes[header_len..header_len + 4].try_into().unwrap()) as usize;
        let extent_at = header_len + 4 + name_len + 4;
        let mut bad = bytes.clone();
        let e = u32::from_le_bytes(bad[extent_at..extent_at + 4].try_into().unwrap());
        bad[extent_at..extent_at + 4].copy_from_slice(&(e + 1).to_le_bytes());
        assert!(matches!(
            decode_checkpoint(&bad),
            Err(Error::ShapeDisagreement { .. })
        ));
    }
}
