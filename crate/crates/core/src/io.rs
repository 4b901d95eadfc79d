//! Image file I/O: binary PGM/PPM (8- and 16-bit) and a raw float format.
//!
//! The raw format is an ASCII header line `F32 <width> <height> <channels>\n`
//! followed by little-endian `f32` samples, channel-major then row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Image, MultiChannelImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    F32,
    /// PGM for one channel, PPM for three, maxval 255.
    Pnm8,
    /// PGM for one channel, PPM for three, maxval 65535.
    Pnm16,
}

impl ImageFormat {
    /// Guess from the file extension; anything that is not a Netpbm
    /// extension is written as F32.
    pub fn from_path(path: &Path) -> ImageFormat {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("pgm" | "ppm" | "pnm") => ImageFormat::Pnm8,
            _ => ImageFormat::F32,
        }
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<MultiChannelImage> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}

pub fn write_image(path: impl AsRef<Path>, mc: &MultiChannelImage) -> Result<()> {
    let path = path.as_ref();
    write_image_as(path, mc, ImageFormat::from_path(path))
}

pub fn write_image_as(path: impl AsRef<Path>, mc: &MultiChannelImage, format: ImageFormat) -> Result<()> {
    let bytes = encode(mc, format)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Decode any supported format, dispatching on the magic bytes.
pub fn decode(bytes: &[u8]) -> Result<MultiChannelImage> {
    match bytes.get(..2) {
        Some(b"P5") | Some(b"P6") => decode_pnm(bytes),
        Some(b"F3") if bytes.starts_with(b"F32 ") => decode_f32(bytes),
        Some(m) => Err(Error::UnsupportedFormat(format!(
            "magic {:?}",
            String::from_utf8_lossy(m)
        ))),
        None => Err(Error::MalformedHeader("file shorter than magic number".into())),
    }
}

pub fn encode(mc: &MultiChannelImage, format: ImageFormat) -> Result<Vec<u8>> {
    match format {
        ImageFormat::F32 => Ok(encode_f32(mc)),
        ImageFormat::Pnm8 => encode_pnm(mc, 255),
        ImageFormat::Pnm16 => encode_pnm(mc, 65535),
    }
}

fn encode_f32(mc: &MultiChannelImage) -> Vec<u8> {
    let (w, h) = mc.dims();
    let c = mc.num_channels();
    let header = format!("F32 {w} {h} {c}\n");
    let mut out = Vec::with_capacity(header.len() + 4 * w * h * c);
    out.extend_from_slice(header.as_bytes());
    for ch in mc.channels() {
        for &v in ch.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

fn decode_f32(bytes: &[u8]) -> Result<MultiChannelImage> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("missing newline after F32 header".into()))?;
    let line = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::MalformedHeader("F32 header is not ASCII".into()))?;
    let fields: Vec<&str> = line.split_ascii_whitespace().collect();
    if fields.len() != 4 || fields[0] != "F32" {
        return Err(Error::MalformedHeader(format!("bad F32 header {line:?}")));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::MalformedHeader(format!("bad F32 dimension {s:?}")))
    };
    let (w, h, c) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if w == 0 || h == 0 || c == 0 {
        return Err(Error::MalformedHeader("zero dimension".into()));
    }
    let payload = &bytes[nl + 1..];
    let expected = w * h * c * 4;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let mut channels = Vec::with_capacity(c);
    for chunk in payload[..expected].chunks_exact(w * h * 4) {
        let data = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        channels.push(Image::from_vec(w, h, data)?);
    }
    MultiChannelImage::new(channels)
}

fn encode_pnm(mc: &MultiChannelImage, maxval: u32) -> Result<Vec<u8>> {
    let c = mc.num_channels();
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => {
            return Err(Error::UnsupportedFormat(format!(
                "PNM needs 1 or 3 channels, got {c}"
            )))
        }
    };
    let (w, h) = mc.dims();
    let header = format!("{magic}\n{w} {h}\n{maxval}\n");
    let bps = if maxval > 255 { 2 } else { 1 };
    let mut out = Vec::with_capacity(header.len() + w * h * c * bps);
    out.extend_from_slice(header.as_bytes());
    let scale = maxval as f64;
    for i in 0..w * h {
        for ch in mc.channels() {
            let q = (ch.data()[i].clamp(0.0, 1.0) * scale).round() as u32;
            if bps == 2 {
                out.extend_from_slice(&(q as u16).to_be_bytes());
            } else {
                out.push(q as u8);
            }
        }
    }
    Ok(out)
}

struct PnmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PnmCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&b) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader(format!("{what} out of range")))
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<MultiChannelImage> {
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut cur = PnmCursor { bytes, pos: 2 };
    let w = cur.number("width")? as usize;
    let h = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if w == 0 || h == 0 {
        return Err(Error::MalformedHeader("zero dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader(format!("maxval {maxval} outside 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::MalformedHeader("missing whitespace after maxval".into())),
    }
    let bps = if maxval > 255 { 2 } else { 1 };
    let payload = &bytes[cur.pos..];
    let expected = w * h * channels * bps;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let scale = maxval as f64;
    let mut planes = vec![Vec::with_capacity(w * h); channels];
    for (k, sample) in payload[..expected].chunks_exact(bps).enumerate() {
        let raw = if bps == 2 {
            u16::from_be_bytes([sample[0], sample[1]]) as u32
        } else {
            sample[0] as u32
        };
        planes[k % channels].push(raw as f64 / scale);
    }
    let imgs = planes
        .into_iter()
        .map(|p| Image::from_vec(w, h, p))
        .collect::<Result<Vec<_>>>()?;
    MultiChannelImage::new(imgs)
}
