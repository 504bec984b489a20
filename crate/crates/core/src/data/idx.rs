//! IDX reader and writer (unsigned-byte images and labels, big-endian header).

use std::fs;
use std::path::Path;

use super::{Domain, DomainDataset};
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxLabels {
    pub labels: Vec<u8>,
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn u32_at(&self, offset: usize, header_len: usize) -> Result<u32> {
        let chunk = self.bytes.get(offset..offset + 4).ok_or_else(|| Error::Truncated {
            path: self.path.to_path_buf(),
            expected: header_len,
            found: self.bytes.len(),
        })?;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4-byte slice")))
    }

    fn check_magic(&self, expected: u32, header_len: usize) -> Result<()> {
        let found = self.u32_at(0, header_len)?;
        if found != expected {
            return Err(Error::BadMagic {
                path: self.path.to_path_buf(),
                expected,
                found,
            });
        }
        Ok(())
    }

    fn payload(&self, header_len: usize, len: usize) -> Result<&[u8]> {
        let expected = header_len + len;
        if self.bytes.len() < expected {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                expected,
                found: self.bytes.len(),
            });
        }
        Ok(&self.bytes[header_len..expected])
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<IdxImages> {
    const HEADER: usize = 16;
    let r = Reader { path, bytes };
    r.check_magic(IMAGES_MAGIC, HEADER)?;
    let count = r.u32_at(4, HEADER)? as usize;
    let rows = r.u32_at(8, HEADER)? as usize;
    let cols = r.u32_at(12, HEADER)? as usize;
    let pixels = r.payload(HEADER, count * rows * cols)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<IdxLabels> {
    const HEADER: usize = 8;
    let r = Reader { path, bytes };
    r.check_magic(LABELS_MAGIC, HEADER)?;
    let count = r.u32_at(4, HEADER)? as usize;
    Ok(IdxLabels {
        labels: r.payload(HEADER, count)?.to_vec(),
    })
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    parse_idx_images(path, &read_file(path)?)
}

pub fn read_idx_labels(path: &Path) -> Result<IdxLabels> {
    parse_idx_labels(path, &read_file(path)?)
}

impl IdxImages {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for v in [IMAGES_MAGIC, self.count as u32, self.rows as u32, self.cols as u32] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Rebuilds raw pixels from `[0, 1]`-scaled features.
    pub fn from_features(features: &Matrix, rows: usize, cols: usize) -> Result<Self> {
        if features.cols() != rows * cols {
            return Err(Error::dims("image feature width", rows * cols, features.cols()));
        }
        Ok(IdxImages {
            count: features.rows(),
            rows,
            cols,
            pixels: features
                .as_slice()
                .iter()
                .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect(),
        })
    }
}

impl IdxLabels {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.labels.len());
        out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        out.extend_from_slice(&(self.labels.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.labels);
        out
    }
}

pub fn write_idx_images(path: &Path, images: &IdxImages) -> Result<()> {
    fs::write(path, images.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &IdxLabels) -> Result<()> {
    fs::write(path, labels.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads an image/label file pair as a flattened dataset with pixels scaled
/// to `[0, 1]`. The class count is `max(10, largest label + 1)`.
pub fn load_idx(images_path: &Path, labels_path: &Path, domain: Domain) -> Result<DomainDataset> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if images.count != labels.labels.len() {
        return Err(Error::CountMismatch {
            images: images.count,
            labels: labels.labels.len(),
        });
    }
    let width = images.rows * images.cols;
    let features = Matrix::from_vec(
        images.count,
        width,
        images.pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
    )?;
    let labels: Vec<usize> = labels.labels.iter().map(|&l| usize::from(l)).collect();
    let num_classes = labels.iter().max().map_or(10, |&m| (m + 1).max(10));
    DomainDataset::new(
        features,
        labels,
        num_classes,
        domain,
        format!(
            "idx images={} labels={} ({}x{} pixels scaled by 1/255, flattened row-major)",
            images_path.display(),
            labels_path.display(),
            images.rows,
            images.cols
        ),
    )
}
