//! 8-bit images and binary PGM/PPM I/O.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major, channel-interleaved 8-bit image with 1 or 3 channels.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ImageBuffer({}×{}×{})",
            self.width, self.height, self.channels
        )
    }
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ImageFormat(format!("empty image {width}×{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::ImageFormat(format!(
                "unsupported channel count {channels}"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::ImageFormat(format!(
                "{width}×{height}×{channels} image needs {} samples, got {}",
                width * height * channels,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Mirror left to right.
    pub fn hflip(&self) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        let row = self.width * self.channels;
        for line in self.pixels.chunks_exact(row) {
            for px in line.chunks_exact(self.channels).rev() {
                pixels.extend_from_slice(px);
            }
        }
        Self { pixels, ..*self }
    }

    /// Encode as binary PGM (`P5`) or PPM (`P6`) depending on channel count.
    pub fn to_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Decode a binary PGM/PPM with maxval ≤ 255. `#` comments are allowed in the header.
    pub fn from_pnm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut token = || -> Result<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::ImageFormat("truncated header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let channels = match token()?.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => {
                return Err(Error::ImageFormat(format!(
                    "unsupported magic '{other}' (binary P5/P6 only)"
                )))
            }
        };
        let mut number = |what: &str| -> Result<usize> {
            token()?
                .parse()
                .map_err(|_| Error::ImageFormat(format!("bad {what} in header")))
        };
        let width = number("width")?;
        let height = number("height")?;
        let maxval = number("maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::ImageFormat(format!(
                "maxval {maxval} unsupported (8-bit only)"
            )));
        }
        // exactly one whitespace byte separates the header from the raster
        let start = pos + 1;
        let len = width * height * channels;
        if start + len > bytes.len() {
            return Err(Error::ImageFormat(format!(
                "raster truncated: need {len} bytes, have {}",
                bytes.len().saturating_sub(start)
            )));
        }
        let mut pixels = bytes[start..start + len].to_vec();
        if maxval != 255 {
            for p in &mut pixels {
                *p = ((*p as u32 * 255 + maxval as u32 / 2) / maxval as u32).min(255) as u8;
            }
        }
        Self::new(width, height, channels, pixels)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        Self::from_pnm(&bytes).map_err(|e| Error::ImageFormat(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_pnm())?;
        Ok(())
    }

    /// File extension matching [`ImageBuffer::to_pnm`].
    pub fn extension(&self) -> &'static str {
        if self.channels == 1 {
            "pgm"
        } else {
            "ppm"
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnm_roundtrip() {
        let gray = ImageBuffer::from_fn(5, 3, 1, |x, y, _| (x * 40 + y) as u8).unwrap();
        assert_eq!(ImageBuffer::from_pnm(&gray.to_pnm()).unwrap(), gray);
        let rgb = ImageBuffer::from_fn(2, 4, 3, |x, y, c| (x + 10 * y + 100 * c) as u8).unwrap();
        assert_eq!(ImageBuffer::from_pnm(&rgb.to_pnm()).unwrap(), rgb);
    }

    #[test]
    fn header_comments_and_errors() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 9]);
        let img = ImageBuffer::from_pnm(&bytes).unwrap();
        assert_eq!(img.pixels(), &[7, 9]);

        assert!(ImageBuffer::from_pnm(b"P2\n1 1\n255\n0").is_err());
        assert!(ImageBuffer::from_pnm(b"P5\n4 4\n255\n\x00").is_err());
        assert!(ImageBuffer::from_pnm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn hflip_mirrors_rows() {
        let img = ImageBuffer::from_fn(3, 1, 3, |x, _, c| (x * 10 + c) as u8).unwrap();
        assert_eq!(img.hflip().pixels(), &[20, 21, 22, 10, 11, 12, 0, 1, 2]);
    }
}
