//! PNG reading and writing for RGB frames and indexed-palette label masks.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array2, Array3};
use png::{BitDepth, ColorType, Transformations};

use crate::error::{CoreError, Result};

/// Fixed 256-entry palette used for every mask we write. Index 0 is black.
pub fn label_palette() -> Vec<u8> {
    const BASE: [[u8; 3]; 10] = [
        [0, 0, 0],
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
        [210, 245, 60],
    ];
    let mut palette = Vec::with_capacity(768);
    for i in 0..256usize {
        let rgb = if i < BASE.len() {
            BASE[i]
        } else {
            let v = i as u8;
            [v.wrapping_mul(37), v.wrapping_mul(91), v.wrapping_mul(151)]
        };
        palette.extend_from_slice(&rgb);
    }
    palette
}

fn open_reader(path: &Path, transform: Transformations) -> Result<png::Reader<BufReader<File>>> {
    let file = File::open(path)?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(transform);
    decoder.read_info().map_err(|source| CoreError::PngDecode {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads any 8-bit PNG as RGB, expanding palettes and dropping alpha.
pub fn read_rgb(path: &Path) -> Result<Array3<u8>> {
    let mut reader = open_reader(path, Transformations::EXPAND | Transformations::STRIP_16)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| CoreError::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|source| CoreError::PngDecode {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => return Err(CoreError::format(path, "palette was not expanded")),
    };
    let data = &buf[..info.buffer_size()];
    let mut out = Array3::<u8>::zeros((h, w, 3));
    for y in 0..h {
        let row = &data[y * info.line_size..(y + 1) * info.line_size];
        for x in 0..w {
            let px = &row[x * channels..(x + 1) * channels];
            let rgb = if channels < 3 {
                [px[0]; 3]
            } else {
                [px[0], px[1], px[2]]
            };
            for c in 0..3 {
                out[[y, x, c]] = rgb[c];
            }
        }
    }
    Ok(out)
}

/// Reads a label mask. Indexed images yield raw palette indices; 8-bit
/// grayscale is accepted with the gray value taken as the label.
pub fn read_index_mask(path: &Path) -> Result<Array2<u8>> {
    let mut reader = open_reader(path, Transformations::IDENTITY)?;
    let (color, depth) = reader.output_color_type();
    if depth != BitDepth::Eight || !matches!(color, ColorType::Indexed | ColorType::Grayscale) {
        return Err(CoreError::format(
            path,
            format!("expected 8-bit indexed or grayscale mask, got {color:?}/{depth:?}"),
        ));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| CoreError::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|source| CoreError::PngDecode {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (info.width as usize, info.height as usize);
    let mut out = Array2::<u8>::zeros((h, w));
    for y in 0..h {
        let row = &buf[y * info.line_size..y * info.line_size + w];
        for x in 0..w {
            out[[y, x]] = row[x];
        }
    }
    Ok(out)
}

pub fn write_rgb(path: &Path, image: &Array3<u8>) -> Result<()> {
    let (h, w, c) = image.dim();
    if c != 3 {
        return Err(CoreError::ShapeMismatch(format!("expected 3 channels, got {c}")));
    }
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    encoder.set_color(ColorType::Rgb);
    encoder.set_depth(BitDepth::Eight);
    let data: Vec<u8> = image.iter().copied().collect();
    write_encoded(path, encoder, &data)
}

pub fn write_index_mask(path: &Path, mask: &Array2<u8>) -> Result<()> {
    let (h, w) = mask.dim();
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    encoder.set_color(ColorType::Indexed);
    encoder.set_depth(BitDepth::Eight);
    encoder.set_palette(label_palette());
    let data: Vec<u8> = mask.iter().copied().collect();
    write_encoded(path, encoder, &data)
}

fn write_encoded(path: &Path, encoder: png::Encoder<'_, BufWriter<File>>, data: &[u8]) -> Result<()> {
    let wrap = |source| CoreError::PngEncode {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = encoder.write_header().map_err(wrap)?;
    writer.write_image_data(data).map_err(wrap)?;
    writer.finish().map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_roundtrip_keeps_indices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = Array2::from_shape_fn((5, 7), |(y, x)| ((y * 7 + x) % 4) as u8);
        write_index_mask(&path, &mask).unwrap();
        assert_eq!(read_index_mask(&path).unwrap(), mask);
    }

    #[test]
    fn rgb_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.png");
        let img = Array3::from_shape_fn((4, 6, 3), |(y, x, c)| (y * 40 + x * 7 + c * 3) as u8);
        write_rgb(&path, &img).unwrap();
        assert_eq!(read_rgb(&path).unwrap(), img);
    }

    #[test]
    fn rgb_reader_rejects_mask_as_rgb_only_when_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        std::fs::write(&path, b"not a png").unwrap();
        assert!(matches!(read_rgb(&path), Err(CoreError::PngDecode { .. })));
    }
}
