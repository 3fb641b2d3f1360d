use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::{DatasetError, LabeledDataset, Result};
use crate::numerics::RealMatrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// File contents, transparently gunzipped when the gzip magic is present.
pub fn read_idx_file(path: &Path) -> Result<Vec<u8>> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let raw = fs::read(path).map_err(io_err)?;
    if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(io_err)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let word = bytes.get(at..at + 4).ok_or(DatasetError::Truncated {
        needed: at + 4,
        available: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(word.try_into().expect("4-byte slice")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(DatasetError::BadMagic { expected, found });
    }
    Ok(())
}

fn body(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8]> {
    bytes.get(offset..offset + len).ok_or(DatasetError::Truncated {
        needed: offset + len,
        available: bytes.len(),
    })
}

/// Decode an IDX3 image file into one flattened row per image, scaled to
/// `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<RealMatrix> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let dim = rows * cols;
    let pixels = body(bytes, 16, count * dim)?;
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Ok(RealMatrix::from_vec(count, dim, data)?)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    Ok(body(bytes, 8, count)?.iter().map(|&l| usize::from(l)).collect())
}

/// Load a labeled image set. The class count is the largest label plus one.
pub fn load_idx(name: &str, images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let features = parse_idx_images(&read_idx_file(images_path)?)?;
    let labels = parse_idx_labels(&read_idx_file(labels_path)?)?;
    if features.rows() != labels.len() {
        return Err(DatasetError::CountMismatch {
            images: features.rows(),
            labels: labels.len(),
        });
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    LabeledDataset::new(name, features, labels, classes)
}
