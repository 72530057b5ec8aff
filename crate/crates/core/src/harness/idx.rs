//! Reader for the IDX binary format used by the MNIST distribution:
//! big-endian magic, dimension sizes, then an unsigned-byte payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::Dataset;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4-byte slice")))
        .ok_or_else(|| {
            Error::Format(format!("{}: truncated header at byte {offset}", path.display()))
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let magic = read_be_u32(bytes, 0, path)?;
    if magic != expected {
        return Err(Error::Format(format!(
            "{}: bad magic 0x{magic:08x} at byte 0, expected 0x{expected:08x}",
            path.display()
        )));
    }
    Ok(())
}

/// Loads an MNIST-style image/label file pair, keeping only the two chosen
/// digits: `positive_digit` maps to label +1, `negative_digit` to -1. Pixels
/// are scaled to [0, 1].
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    positive_digit: u8,
    negative_digit: u8,
) -> Result<Dataset> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;

    check_magic(&images, IMAGES_MAGIC, images_path)?;
    check_magic(&labels, LABELS_MAGIC, labels_path)?;

    let image_count = read_be_u32(&images, 4, images_path)? as usize;
    let rows = read_be_u32(&images, 8, images_path)? as usize;
    let cols = read_be_u32(&images, 12, images_path)? as usize;
    let label_count = read_be_u32(&labels, 4, labels_path)? as usize;

    if image_count != label_count {
        return Err(Error::Format(format!(
            "{} holds {image_count} images but {} holds {label_count} labels",
            images_path.display(),
            labels_path.display()
        )));
    }

    let pixels = rows * cols;
    let image_payload = &images[16..];
    if image_payload.len() != image_count * pixels {
        return Err(Error::Format(format!(
            "{}: truncated payload from byte 16: expected {} bytes, found {}",
            images_path.display(),
            image_count * pixels,
            image_payload.len()
        )));
    }
    let label_payload = &labels[8..];
    if label_payload.len() != label_count {
        return Err(Error::Format(format!(
            "{}: truncated payload from byte 8: expected {label_count} bytes, found {}",
            labels_path.display(),
            label_payload.len()
        )));
    }

    let mut features = Vec::new();
    let mut kept_labels = Vec::new();
    for i in 0..image_count {
        let digit = label_payload[i];
        let y = if digit == positive_digit {
            1.0
        } else if digit == negative_digit {
            -1.0
        } else {
            continue;
        };
        let raw = &image_payload[i * pixels..(i + 1) * pixels];
        features.push(raw.iter().map(|&b| b as f64 / 255.0).collect());
        kept_labels.push(y);
    }
    Dataset::with_dim(pixels, features, kept_labels)
}
