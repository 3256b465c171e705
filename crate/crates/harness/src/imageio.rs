//! PNG and frame IO.
//!
//! Encoding goes through the `png` crate with fixed settings so identical
//! inputs always produce identical bytes.

use std::fs;
use std::io::Cursor;
use std::path::Path;
use std::sync::Arc;

use rvos_core::{BinaryMask, FrameRef, FrameSource, Image};

use crate::error::{HarnessError, Result};

fn encode_png(width: usize, height: usize, color: png::ColorType, palette: Option<&[u8]>, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Fast);
        if let Some(p) = palette {
            enc.set_palette(p.to_vec());
        }
        let mut writer = enc.write_header().expect("writing to a Vec cannot fail");
        writer
            .write_image_data(data)
            .expect("buffer length matches the header");
    }
    out
}

pub fn encode_rgb_png(img: &Image) -> Vec<u8> {
    encode_png(img.width(), img.height(), png::ColorType::Rgb, None, img.as_raw())
}

/// Single-channel PNG, 255 where the mask is set.
pub fn encode_mask_png(mask: &BinaryMask) -> Vec<u8> {
    let data: Vec<u8> = mask.iter().map(|b| if b { 255 } else { 0 }).collect();
    encode_png(mask.width(), mask.height(), png::ColorType::Grayscale, None, &data)
}

/// Palette-indexed PNG from one index byte per pixel. `palette` is RGB triples.
pub fn encode_indexed_png(width: usize, height: usize, indices: &[u8], palette: &[u8]) -> Vec<u8> {
    encode_png(width, height, png::ColorType::Indexed, Some(palette), indices)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| HarnessError::io(path, e))
}

/// Raw single-channel samples of an 8-bit-or-less grayscale or indexed PNG,
/// without palette expansion: `(width, height, one byte per pixel)`.
pub fn decode_single_channel_png(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| e.to_string())?;
    let size = reader.output_buffer_size().ok_or("image too large")?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let (w, h) = (info.width as usize, info.height as usize);
    match info.color_type {
        png::ColorType::Grayscale | png::ColorType::Indexed => {}
        other => return Err(format!("expected a grayscale or indexed PNG, got {other:?}")),
    }
    let bits = match info.bit_depth {
        png::BitDepth::One => 1,
        png::BitDepth::Two => 2,
        png::BitDepth::Four => 4,
        png::BitDepth::Eight => 8,
        png::BitDepth::Sixteen => return Err("16-bit PNGs are not supported here".into()),
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let line = &buf[y * info.line_size..(y + 1) * info.line_size];
        if bits == 8 {
            out.extend_from_slice(&line[..w]);
        } else {
            let per_byte = 8 / bits;
            let mask = (1u8 << bits) - 1;
            for x in 0..w {
                let byte = line[x / per_byte];
                let shift = 8 - bits * (x % per_byte + 1);
                out.push((byte >> shift) & mask);
            }
        }
    }
    Ok((w, h, out))
}

pub fn decode_mask_png(bytes: &[u8]) -> std::result::Result<BinaryMask, String> {
    let (w, h, samples) = decode_single_channel_png(bytes)?;
    let bits: Vec<bool> = samples.iter().map(|&v| v != 0).collect();
    BinaryMask::from_bools(w, h, &bits).map_err(|e| e.to_string())
}

pub fn read_mask_png(path: &Path) -> Result<BinaryMask> {
    decode_mask_png(&read_file(path)?).map_err(|e| HarnessError::image(path, e))
}

pub fn load_rgb(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| HarnessError::image(path, e))?.into_rgb8();
    let (w, h) = img.dimensions();
    Ok(Image::from_raw(w as usize, h as usize, img.into_raw())?)
}

pub fn image_dims(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(|e| HarnessError::image(path, e))?;
    Ok((w as usize, h as usize))
}

/// Decoded pixels for a frame.
pub fn load_frame(frame: &FrameRef) -> Result<Arc<Image>> {
    match &frame.source {
        FrameSource::Pixels(img) => Ok(Arc::clone(img)),
        FrameSource::Path(p) => Ok(Arc::new(load_rgb(Path::new(p))?)),
    }
}

/// Encoded image bytes for a frame: the file as stored, or a PNG of
/// in-memory pixels.
pub fn frame_bytes(frame: &FrameRef) -> Result<Vec<u8>> {
    match &frame.source {
        FrameSource::Pixels(img) => Ok(encode_rgb_png(img)),
        FrameSource::Path(p) => read_file(Path::new(p)),
    }
}

/// Tints `mask` pixels of `frame` red, for inspection.
pub fn overlay(frame: &Image, mask: &BinaryMask) -> Image {
    let mut out = frame.clone();
    for y in 0..frame.height().min(mask.height()) {
        for x in 0..frame.width().min(mask.width()) {
            if mask.get(x, y) {
                let [r, g, b] = frame.pixel(x, y);
                out.put_pixel(x, y, [((r as u16 + 255) / 2) as u8, g / 2, b / 2]);
            }
        }
    }
    out
}
