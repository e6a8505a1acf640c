//! PNG and binary PGM (P5) reading and writing.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};

use super::image::GrayImage;

/// `0.299 R + 0.587 G + 0.114 B`, rounded to nearest.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let v = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    v.round().clamp(0.0, 255.0) as u8
}

/// Loads a PNG or PGM file, converting color input to luma.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let bytes = fs::read(path.as_ref())?;
    decode_gray(&bytes)
}

pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"P5") {
        return decode_pgm(bytes);
    }
    let img = image::load_from_memory(bytes)?;
    Ok(dynamic_to_gray(img))
}

fn dynamic_to_gray(img: DynamicImage) -> GrayImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => {
            GrayImage::new(w, h, buf.into_raw()).expect("buffer matches dimensions")
        }
        other => {
            let rgb = other.to_rgb8();
            let data = rgb
                .as_raw()
                .chunks_exact(3)
                .map(|px| luma(px[0], px[1], px[2]))
                .collect();
            GrayImage::new(w, h, data).expect("buffer matches dimensions")
        }
    }
}

pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let buf = image::GrayImage::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.as_slice().to_vec(),
    )
    .expect("buffer matches dimensions");
    let mut out = Cursor::new(Vec::new());
    DynamicImage::ImageLuma8(buf).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn save_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_png(img)?)?;
    Ok(())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.as_slice());
    out
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

/// Saves as PGM when the extension is `pgm`, PNG otherwise.
pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pgm") => save_pgm(img, path),
        _ => save_png(img, path),
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let bad = |m: &str| Error::Codec(format!("pgm: {m}"));
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("malformed header"))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit maxval is supported"));
    }
    let data = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| bad("truncated raster"))?;
    let data = if maxval == 255 {
        data.to_vec()
    } else {
        data.iter()
            .map(|&v| ((v as u32 * 255 + maxval as u32 / 2) / maxval as u32) as u8)
            .collect()
    };
    GrayImage::new(w, h, data)
}
