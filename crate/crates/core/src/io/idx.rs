use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::classifier::{ImageShape, LabeledDataset};
use crate::error::{Error, Result};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Reads a whole file, transparently inflating gzip content.
fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn header(bytes: &[u8], magic: u32, dims: usize, what: &str) -> Result<Vec<usize>> {
    let need = 4 * (1 + dims);
    if bytes.len() < need {
        return Err(Error::Format(format!("{what} file shorter than its {need}-byte header")));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let found = word(0);
    if found != magic {
        return Err(Error::Format(format!(
            "{what} file has magic {found} (0x{found:08x}), expected {magic} (0x{magic:08x})"
        )));
    }
    Ok((1..=dims).map(|i| word(i) as usize).collect())
}

/// Parses an IDX image file body into `[0, 1]` vectors (bytes / 255).
pub fn parse_idx_images(bytes: &[u8]) -> Result<(Vec<Vec<f64>>, ImageShape)> {
    let dims = header(bytes, IDX_IMAGE_MAGIC, 3, "image")?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() != n * size {
        return Err(Error::Format(format!(
            "image file holds {} pixel bytes, header promises {n}×{rows}×{cols}",
            body.len()
        )));
    }
    let images = body
        .chunks(size.max(1))
        .take(n)
        .map(|px| px.iter().map(|&b| b as f64 / 255.0).collect())
        .collect();
    Ok((images, ImageShape::grayscale(rows, cols)))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let n = header(bytes, IDX_LABEL_MAGIC, 1, "label")?[0];
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format(format!(
            "label file holds {} labels, header promises {n}",
            body.len()
        )));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Loads an IDX image/label pair (optionally gzip-compressed).
pub fn read_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (pixels, shape) = parse_idx_images(&read_bytes(images.as_ref())?)?;
    let labels = parse_idx_labels(&read_bytes(labels.as_ref())?)?;
    if pixels.len() != labels.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            pixels.len(),
            labels.len()
        )));
    }
    LabeledDataset::new(pixels, labels, shape)
}

/// Writes a single-channel dataset as an IDX pair. Pixels are stored as
/// `round(255 v)`; a `.gz` extension selects gzip output.
pub fn write_idx(data: &LabeledDataset, images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<()> {
    let shape = data.shape();
    if shape.channels != 1 {
        return Err(Error::InvalidDataset("IDX output supports single-channel images only".into()));
    }
    if let Some(bad) = data.labels().iter().find(|&&y| y > 255) {
        return Err(Error::InvalidDataset(format!("label {bad} does not fit in a byte")));
    }
    let n = data.len() as u32;
    let mut img = Vec::with_capacity(16 + data.len() * shape.len());
    for word in [IDX_IMAGE_MAGIC, n, shape.height as u32, shape.width as u32] {
        img.extend_from_slice(&word.to_be_bytes());
    }
    for image in data.images() {
        img.extend(image.iter().map(|v| (v * 255.0).round() as u8));
    }
    let mut lab = Vec::with_capacity(8 + data.len());
    lab.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&n.to_be_bytes());
    lab.extend(data.labels().iter().map(|&y| y as u8));
    write_bytes(images.as_ref(), &img)?;
    write_bytes(labels.as_ref(), &lab)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?;
    } else {
        let mut file = file;
        file.write_all(bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_bytes(magic: u32, dims: &[u32], body: &[u8]) -> Vec<u8> {
        let mut out = magic.to_be_bytes().to_vec();
        for d in dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(body);
        out
    }

    #[test]
    fn parses_header_and_scales_pixels() {
        let bytes = [0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 128, 64];
        let (images, shape) = parse_idx_images(&bytes).unwrap();
        assert_eq!(shape, ImageShape::grayscale(2, 2));
        assert_eq!(images.len(), 1);
        let expected = [0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0];
        assert_eq!(images[0], expected);
        assert!((images[0][2] - 0.50196).abs() < 1e-5 && (images[0][3] - 0.25098).abs() < 1e-5);
    }

    #[test]
    fn wrong_magic_names_expected_constant() {
        let labels = image_bytes(IDX_IMAGE_MAGIC, &[1], &[3]);
        let err = parse_idx_labels(&labels).unwrap_err().to_string();
        assert!(err.contains("2049"), "{err}");
        let images = image_bytes(IDX_LABEL_MAGIC, &[1, 1, 1], &[0]);
        let err = parse_idx_images(&images).unwrap_err().to_string();
        assert!(err.contains("2051"), "{err}");
    }

    #[test]
    fn truncated_bodies_rejected() {
        assert!(parse_idx_images(&image_bytes(IDX_IMAGE_MAGIC, &[2, 2, 2], &[0; 7])).is_err());
        assert!(parse_idx_labels(&image_bytes(IDX_LABEL_MAGIC, &[3], &[0; 2])).is_err());
        assert!(parse_idx_labels(&[0, 0, 8]).is_err());
    }

    #[test]
    fn count_mismatch_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.gz");
        let lab = dir.path().join("lab");
        std::fs::write(&img, image_bytes(IDX_IMAGE_MAGIC, &[2, 1, 2], &[0, 10, 20, 255])).unwrap();
        std::fs::write(&lab, image_bytes(IDX_LABEL_MAGIC, &[1], &[4])).unwrap();
        assert!(read_idx(&img, &lab).is_err());

        std::fs::write(&lab, image_bytes(IDX_LABEL_MAGIC, &[2], &[4, 7])).unwrap();
        let data = read_idx(&img, &lab).unwrap();
        assert_eq!(data.labels(), &[4, 7]);

        let img2 = dir.path().join("out-images.gz");
        let lab2 = dir.path().join("out-labels");
        write_idx(&data, &img2, &lab2).unwrap();
        assert_eq!(read_idx(&img2, &lab2).unwrap(), data);
    }
}
