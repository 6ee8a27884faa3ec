//! 8-bit PNG and binary PPM/PGM reading and writing.
//!
//! Samples map linearly between `0..=255` and `[0, 1]`. An optional pure 2.2
//! gamma is applied on load (decode) or save (encode); it is off by default.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{FlareError, Result};
use crate::image::{ImageBuffer, Mask};

pub const DISPLAY_GAMMA: f64 = 2.2;

#[inline]
fn to_unit(b: u8) -> f64 {
    b as f64 / 255.0
}

#[inline]
fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Reads a PNG or binary PPM/PGM file, optionally decoding a 2.2 gamma.
pub fn load_image(path: impl AsRef<Path>, gamma_decode: bool) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| FlareError::io(path, e))?;

    let (w, h, ch, samples) = if bytes.starts_with(b"\x89PNG") {
        decode_png(path, &bytes)?
    } else if bytes.starts_with(b"P6") || bytes.starts_with(b"P5") {
        decode_pnm(path, &bytes)?
    } else {
        return Err(FlareError::format(path, "not a PNG or binary PPM/PGM file"));
    };

    let data = samples
        .into_iter()
        .map(|b| {
            let v = to_unit(b);
            if gamma_decode {
                v.powf(DISPLAY_GAMMA)
            } else {
                v
            }
        })
        .collect();
    ImageBuffer::new(w, h, ch, data)
}

/// Writes `img` as PNG (`.png`), PPM (`.ppm`) or PGM (`.pgm`), chosen by extension.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    save_image_gamma(img, path, false)
}

pub fn save_image_gamma(img: &ImageBuffer, path: impl AsRef<Path>, gamma_encode: bool) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| {
            let v = v.clamp(0.0, 1.0);
            to_byte(if gamma_encode { v.powf(1.0 / DISPLAY_GAMMA) } else { v })
        })
        .collect();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let file = File::create(path).map_err(|e| FlareError::io(path, e))?;
    let mut out = BufWriter::new(file);
    match ext.as_str() {
        "png" => encode_png(path, &mut out, img, &bytes)?,
        "ppm" | "pgm" => {
            let magic = match (ext.as_str(), img.channels()) {
                ("ppm", 3) => "P6",
                ("pgm", 1) => "P5",
                _ => {
                    return Err(FlareError::format(
                        path,
                        format!("{} channel(s) cannot be written as .{ext}", img.channels()),
                    ))
                }
            };
            write!(out, "{magic}\n{} {}\n255\n", img.width(), img.height())
                .and_then(|_| out.write_all(&bytes))
                .map_err(|e| FlareError::io(path, e))?;
        }
        _ => return Err(FlareError::format(path, format!("unsupported extension `{ext}`"))),
    }
    out.flush().map_err(|e| FlareError::io(path, e))
}

/// Writes a mask as an 8-bit grayscale image (0 / 255 for binary masks).
pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    save_image(&mask.to_image(), path)
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| FlareError::format(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| FlareError::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| FlareError::format(path, e.to_string()))?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width as usize, info.height as usize);
    let src_ch = info.color_type.samples();
    // drop alpha; the pipeline works on opaque gray or RGB
    let (ch, samples) = match info.color_type {
        png::ColorType::Grayscale => (1, buf),
        png::ColorType::Rgb => (3, buf),
        png::ColorType::GrayscaleAlpha => (1, buf.chunks_exact(src_ch).map(|p| p[0]).collect()),
        png::ColorType::Rgba => {
            (3, buf.chunks_exact(src_ch).flat_map(|p| [p[0], p[1], p[2]]).collect())
        }
        png::ColorType::Indexed => {
            return Err(FlareError::format(path, "palette was not expanded"));
        }
    };
    Ok((w, h, ch, samples))
}

fn encode_png(path: &Path, out: &mut impl Write, img: &ImageBuffer, bytes: &[u8]) -> Result<()> {
    let mut enc = png::Encoder::new(out, img.width() as u32, img.height() as u32);
    enc.set_color(if img.channels() == 3 { png::ColorType::Rgb } else { png::ColorType::Grayscale });
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| FlareError::format(path, e.to_string()))?;
    writer
        .write_image_data(bytes)
        .map_err(|e| FlareError::format(path, e.to_string()))?;
    writer.finish().map_err(|e| FlareError::format(path, e.to_string()))
}

fn decode_pnm(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let ch = if bytes[1] == b'6' { 3 } else { 1 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and `#` comments may separate header tokens
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FlareError::format(path, "malformed PNM header"))?;
    }
    let [w, h, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(FlareError::format(path, format!("maxval {maxval} unsupported (8-bit only)")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = w * h * ch;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| FlareError::format(path, "truncated PNM raster"))?;
    let samples = if maxval == 255 {
        raster.to_vec()
    } else {
        raster
            .iter()
            .map(|&b| ((b as f64 / maxval as f64) * 255.0).round() as u8)
            .collect()
    };
    Ok((w, h, ch, samples))
}
