//! Image loading and saving: grayscale PGM (ASCII or binary) and 8/16-bit
//! grayscale PNG. Intensities are scaled to `[0, 1]` on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use mpcnn_core::loss::LabelImage;
use mpcnn_core::map::Map;

use crate::error::{core_data_err, io_err, AppError, Result};
use crate::pgm;

enum Format {
    Pgm,
    Png,
}

fn sniff(path: &Path) -> Result<Format> {
    let mut f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut magic = [0u8; 2];
    f.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    match &magic {
        b"P2" | b"P5" => Ok(Format::Pgm),
        [0x89, b'P'] => Ok(Format::Png),
        _ => Err(AppError::data(format!(
            "{}: unsupported image format (need PGM or grayscale PNG)",
            path.display()
        ))),
    }
}

/// Raw integer pixels plus the scale they were stored at.
fn load_raw(path: &Path) -> Result<(usize, usize, u16, Vec<u16>)> {
    match sniff(path)? {
        Format::Pgm => {
            let file = File::open(path).map_err(|e| io_err(path, e))?;
            let img = pgm::read_pgm(BufReader::new(file))
                .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
            Ok((img.rows, img.cols, img.maxval, img.pixels))
        }
        Format::Png => {
            let file = File::open(path).map_err(|e| io_err(path, e))?;
            let decoder = png::Decoder::new(BufReader::new(file));
            let mut reader = decoder
                .read_info()
                .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
            let mut buf = vec![
                0u8;
                reader.output_buffer_size().ok_or_else(|| AppError::data(
                    format!("{}: PNG too large", path.display())
                ))?
            ];
            let info = reader
                .next_frame(&mut buf)
                .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
            let (color, depth) = reader.output_color_type();
            if color != png::ColorType::Grayscale {
                return Err(AppError::data(format!(
                    "{}: PNG color type {color:?} unsupported (need grayscale)",
                    path.display()
                )));
            }
            let (rows, cols) = (info.height as usize, info.width as usize);
            let n = rows * cols;
            match depth {
                png::BitDepth::Eight => {
                    Ok((rows, cols, 255, buf[..n].iter().map(|&b| b as u16).collect()))
                }
                png::BitDepth::Sixteen => {
                    let mut pixels = Vec::with_capacity(n);
                    for i in 0..n {
                        pixels.push(u16::from_be_bytes([buf[2 * i], buf[2 * i + 1]]));
                    }
                    Ok((rows, cols, 65535, pixels))
                }
                other => Err(AppError::data(format!(
                    "{}: PNG bit depth {other:?} unsupported",
                    path.display()
                ))),
            }
        }
    }
}

/// Load a grayscale image with intensities scaled to `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Map<f64>> {
    let (rows, cols, maxval, pixels) = load_raw(path)?;
    let scale = 1.0 / maxval as f64;
    Map::new(
        rows,
        cols,
        pixels.iter().map(|&p| p as f64 * scale).collect(),
    )
    .map_err(core_data_err)
}

/// Load a label image: each pixel value is a class index.
pub fn load_label_image(path: &Path) -> Result<LabelImage> {
    let (rows, cols, _, pixels) = load_raw(path)?;
    let class_count = pixels.iter().copied().max().unwrap_or(0) as usize + 1;
    LabelImage::new(rows, cols, pixels, class_count).map_err(core_data_err)
}

/// Save a `[0, 1]` map as 16-bit grayscale PNG: value = round(v * 65535).
pub fn save_map_png16(path: &Path, map: &Map<f64>) -> Result<()> {
    let bytes: Vec<u8> = map
        .values()
        .iter()
        .flat_map(|&v| {
            let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
            q.to_be_bytes()
        })
        .collect();
    write_png(path, map.cols() as u32, map.rows() as u32, png::BitDepth::Sixteen, &bytes)
}

/// Save a label image as 8-bit grayscale PNG, pixel value = class index.
pub fn save_labels_png8(path: &Path, labels: &LabelImage) -> Result<()> {
    if labels.class_count() > 256 {
        return Err(AppError::data("more than 256 classes cannot be saved as 8-bit PNG"));
    }
    let bytes: Vec<u8> = labels.labels().iter().map(|&l| l as u8).collect();
    write_png(
        path,
        labels.cols() as u32,
        labels.rows() as u32,
        png::BitDepth::Eight,
        &bytes,
    )
}

fn write_png(path: &Path, width: u32, height: u32, depth: png::BitDepth, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width, height);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(depth);
    let mut writer = encoder
        .write_header()
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
    writer
        .write_image_data(data)
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_values_scale_linearly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let img = pgm::PgmImage {
            rows: 2,
            cols: 2,
            maxval: 255,
            pixels: vec![0, 128, 255, 64],
        };
        pgm::write_pgm_binary(File::create(&path).unwrap(), &img).unwrap();
        let map = load_image(&path).unwrap();
        assert_eq!(map.at(0, 0), 0.0);
        assert!((map.at(0, 1) - 128.0 / 255.0).abs() < 1e-15);
        assert_eq!(map.at(1, 0), 1.0);
        assert!((map.at(1, 1) - 64.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn png16_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let map = Map::from_fn(5, 7, |r, c| ((r * 7 + c) as f64) / 34.0);
        save_map_png16(&path, &map).unwrap();
        let back = load_image(&path).unwrap();
        for (a, b) in map.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }

    #[test]
    fn label_png_roundtrip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.png");
        let labels =
            LabelImage::new(3, 3, vec![0, 1, 2, 1, 0, 1, 2, 2, 0], 3).unwrap();
        save_labels_png8(&path, &labels).unwrap();
        let back = load_label_image(&path).unwrap();
        assert_eq!(back.labels(), labels.labels());
        assert_eq!(back.class_count(), 3);
    }
}
