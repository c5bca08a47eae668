//! PFM float rasters and PGM sidecar masks.
//!
//! PFM layout: an ASCII header of three lines — `"Pf"` (grayscale) or `"PF"`
//! (3-channel), `"<width> <height>"`, and a scale factor whose sign encodes
//! endianness (negative = little-endian) — followed by rows of raw float32
//! samples stored bottom-to-top, left-to-right, channels interleaved. Writes
//! always use scale `-1.0`; reads accept either endianness. Round trips are
//! bit-exact.
//!
//! Validity masks are not part of PFM, so a depth map that contains invalid
//! pixels gets a sidecar PGM (binary `P5`, maxval 255, 0 = invalid,
//! 255 = valid) next to it, named by swapping the `.pfm` extension for
//! `.valid.pgm`. A missing sidecar on read means every pixel is valid.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::raster::{DepthMap, DepthUnits, ImageMap};

/// Sidecar mask path for a raster path: `foo.pfm` -> `foo.valid.pgm`.
pub fn validity_path(path: &Path) -> PathBuf {
    path.with_extension("valid.pgm")
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::io(path.display().to_string(), e)
}

struct PfmPayload {
    width: usize,
    height: usize,
    channels: usize,
    /// Top-to-bottom raster order (header order already undone).
    values: Vec<f32>,
}

fn parse_pfm(path: &Path, bytes: &[u8]) -> Result<PfmPayload> {
    // Header tokens are whitespace-separated; the payload starts right after
    // the single whitespace byte that terminates the scale token.
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("{}: truncated header", path.display())));
        }
        // Consume exactly one whitespace byte after the token.
        if pos < bytes.len() {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos.min(bytes.len()) - 1]).into_owned())
    };

    let magic = token(bytes)?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => {
            return Err(Error::Format(format!(
                "{}: bad magic {other:?}, expected \"Pf\" or \"PF\"",
                path.display()
            )))
        }
    };
    let width: usize = token(bytes)?
        .parse()
        .map_err(|e| Error::Format(format!("{}: bad width: {e}", path.display())))?;
    let height: usize = token(bytes)?
        .parse()
        .map_err(|e| Error::Format(format!("{}: bad height: {e}", path.display())))?;
    let scale: f64 = token(bytes)?
        .parse()
        .map_err(|e| Error::Format(format!("{}: bad scale: {e}", path.display())))?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("{}: zero dimension", path.display())));
    }
    let little_endian = scale < 0.0;

    let n = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() < n * 4 {
        return Err(Error::Format(format!(
            "{}: truncated payload, expected {} bytes, got {}",
            path.display(),
            n * 4,
            payload.len()
        )));
    }

    // PFM stores the bottom row first; flip to top-to-bottom raster order.
    let row_len = width * channels;
    let mut values = vec![0f32; n];
    for file_row in 0..height {
        let raster_row = height - 1 - file_row;
        for i in 0..row_len {
            let off = (file_row * row_len + i) * 4;
            let raw: [u8; 4] = payload[off..off + 4].try_into().expect("bounds checked");
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            values[raster_row * row_len + i] = v;
        }
    }
    Ok(PfmPayload {
        width,
        height,
        channels,
        values,
    })
}

fn encode_pfm(width: usize, height: usize, channels: usize, values: &[f32]) -> Vec<u8> {
    let magic = if channels == 1 { "Pf" } else { "PF" };
    let mut out = Vec::with_capacity(32 + values.len() * 4);
    out.extend_from_slice(format!("{magic}\n{width} {height}\n-1.0\n").as_bytes());
    let row_len = width * channels;
    for file_row in 0..height {
        let raster_row = height - 1 - file_row;
        let row = &values[raster_row * row_len..(raster_row + 1) * row_len];
        for &v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Writes a grayscale PGM (P5, maxval 255).
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::Shape(format!(
            "pgm buffer length {} does not match {}x{}",
            pixels.len(),
            width,
            height
        )));
    }
    let mut out = Vec::with_capacity(20 + pixels.len());
    out.extend_from_slice(format!("P5\n{width} {height}\n255\n").as_bytes());
    out.extend_from_slice(pixels);
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&out).map_err(|e| io_err(path, e))
}

/// Reads a grayscale PGM (P5, maxval 255).
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("{}: truncated pgm header", path.display())));
        }
        if pos < bytes.len() {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos.min(bytes.len()) - 1]).into_owned())
    };
    let magic = token()?;
    if magic != "P5" {
        return Err(Error::Format(format!("{}: bad pgm magic {magic:?}", path.display())));
    }
    let width: usize = token()?
        .parse()
        .map_err(|e| Error::Format(format!("{}: bad pgm width: {e}", path.display())))?;
    let height: usize = token()?
        .parse()
        .map_err(|e| Error::Format(format!("{}: bad pgm height: {e}", path.display())))?;
    let maxval: usize = token()?
        .parse()
        .map_err(|e| Error::Format(format!("{}: bad pgm maxval: {e}", path.display())))?;
    if maxval != 255 {
        return Err(Error::Format(format!("{}: unsupported pgm maxval {maxval}", path.display())));
    }
    let n = width * height;
    let payload = &bytes[pos..];
    if payload.len() < n {
        return Err(Error::Format(format!("{}: truncated pgm payload", path.display())));
    }
    Ok((width, height, payload[..n].to_vec()))
}

/// Writes a depth map as PFM, plus a validity sidecar when any pixel is
/// invalid. Note the unit tag is not stored; readers choose it.
pub fn write_depth_pfm(path: &Path, d: &DepthMap) -> Result<()> {
    let bytes = encode_pfm(d.width(), d.height(), 1, d.values());
    fs::write(path, bytes).map_err(|e| io_err(path, e))?;
    if !d.all_valid() {
        let pixels: Vec<u8> = d.validity().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
        write_pgm(&validity_path(path), d.width(), d.height(), &pixels)?;
    }
    Ok(())
}

/// Reads a grayscale PFM as a depth map with the given unit tag, honoring a
/// validity sidecar when present.
pub fn read_depth_pfm(path: &Path, units: DepthUnits) -> Result<DepthMap> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let p = parse_pfm(path, &bytes)?;
    if p.channels != 1 {
        return Err(Error::Format(format!(
            "{}: expected grayscale PFM for depth, got {} channels",
            path.display(),
            p.channels
        )));
    }
    let vpath = validity_path(path);
    let validity = if vpath.exists() {
        let (w, h, pixels) = read_pgm(&vpath)?;
        if w != p.width || h != p.height {
            return Err(Error::Format(format!(
                "{}: sidecar size {w}x{h} does not match raster {}x{}",
                vpath.display(),
                p.width,
                p.height
            )));
        }
        pixels.iter().map(|&v| u8::from(v != 0)).collect()
    } else {
        vec![1u8; p.width * p.height]
    };
    DepthMap::new(p.height, p.width, p.values, validity, units)
}

/// Writes an image as PFM (grayscale or color by channel count).
pub fn write_image_pfm(path: &Path, img: &ImageMap) -> Result<()> {
    let bytes = encode_pfm(img.width(), img.height(), img.channels(), img.values());
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Reads a PFM as an image; values must already lie in `[0, 1]`.
pub fn read_image_pfm(path: &Path) -> Result<ImageMap> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let p = parse_pfm(path, &bytes)?;
    ImageMap::new(p.height, p.width, p.channels, p.values)
}

/// Renders any finite raster into 8-bit gray for PGM inspection dumps,
/// mapping min -> 0 and max -> 255 (mid-gray when the raster is constant).
pub fn quantize_for_pgm(values: &[f32]) -> Vec<u8> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return vec![128u8; values.len()];
    }
    values
        .iter()
        .map(|&v| (((v - lo) / (hi - lo)) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}
