//! Binary PGM (`P5`) and PPM (`P6`) images.

use crate::error::{Result, SneError};
use crate::image::ImageBuffer;

fn fmt_err(m: impl Into<String>) -> SneError {
    SneError::Format(m.into())
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fmt_err("malformed PNM header"))
    }
}

/// Decodes a `P5` or `P6` file into `[0, 1]` samples.
pub fn read_pnm(bytes: &[u8]) -> Result<ImageBuffer> {
    if bytes.len() < 2 {
        return Err(fmt_err("file too short for a PNM header"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(fmt_err("only binary PGM (P5) and PPM (P6) are supported")),
    };
    let mut hd = Header { bytes, pos: 2 };
    let width = hd.number()?;
    let height = hd.number()?;
    let maxval = hd.number()?;
    if width == 0 || height == 0 {
        return Err(fmt_err("PNM image has zero size"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(fmt_err(format!("unsupported maxval {maxval}")));
    }
    match bytes.get(hd.pos) {
        Some(c) if c.is_ascii_whitespace() => hd.pos += 1,
        _ => return Err(fmt_err("malformed PNM header")),
    }
    let count = width * height * channels;
    let sample = if maxval < 256 { 1 } else { 2 };
    let raster = &bytes[hd.pos..];
    if raster.len() < count * sample {
        return Err(fmt_err(format!("raster truncated: need {} bytes, have {}", count * sample, raster.len())));
    }
    let scale = maxval as f64;
    let data = if sample == 1 {
        raster[..count].iter().map(|&v| v as f64 / scale).collect()
    } else {
        raster[..2 * count].chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / scale).collect()
    };
    ImageBuffer::from_vec(height, width, channels, data)
}

/// Encodes as 8-bit `P5` (one channel) or `P6` (three channels).
pub fn write_pnm(img: &ImageBuffer) -> Result<Vec<u8>> {
    let magic = match img.channels() {
        1 => "P5",
        3 => "P6",
        c => return Err(fmt_err(format!("cannot write a {c}-channel image as PNM"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}
