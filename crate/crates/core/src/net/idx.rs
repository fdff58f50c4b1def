//! IDX image and label files (the MNIST format).

use std::fs;
use std::path::Path;

use super::NetError;

const IMAGES: u32 = 0x0000_0803;
const LABELS: u32 = 0x0000_0801;

/// Images as row-major pixel vectors scaled to [0,1], with their labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

fn read(path: &Path) -> Result<Vec<u8>, NetError> {
    fs::read(path).map_err(|source| NetError::Io { path: path.display().to_string(), source })
}

fn be32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, NetError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| NetError::Format { path: path.display().to_string(), offset: offset as u64, msg: "truncated header".into() })
}

fn check_magic(bytes: &[u8], want: u32, path: &Path) -> Result<(), NetError> {
    let got = be32(bytes, 0, path)?;
    if got != want {
        return Err(NetError::Format {
            path: path.display().to_string(),
            offset: 0,
            msg: format!("bad magic {got:#010x}, expected {want:#010x}"),
        });
    }
    Ok(())
}

pub fn load_idx_images(path: &Path) -> Result<(Vec<Vec<f64>>, usize, usize), NetError> {
    let bytes = read(path)?;
    check_magic(&bytes, IMAGES, path)?;
    let n = be32(&bytes, 4, path)? as usize;
    let rows = be32(&bytes, 8, path)? as usize;
    let cols = be32(&bytes, 12, path)? as usize;
    let size = rows * cols;
    let need = 16 + n * size;
    if bytes.len() < need {
        return Err(NetError::Format {
            path: path.display().to_string(),
            offset: bytes.len() as u64,
            msg: format!("truncated: {n} images of {rows}x{cols} need {need} bytes"),
        });
    }
    let images = bytes[16..need].chunks(size.max(1)).take(n).map(|c| c.iter().map(|&b| f64::from(b) / 255.0).collect()).collect();
    Ok((images, rows, cols))
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>, NetError> {
    let bytes = read(path)?;
    check_magic(&bytes, LABELS, path)?;
    let n = be32(&bytes, 4, path)? as usize;
    if bytes.len() < 8 + n {
        return Err(NetError::Format {
            path: path.display().to_string(),
            offset: bytes.len() as u64,
            msg: format!("truncated: {n} labels need {} bytes", 8 + n),
        });
    }
    Ok(bytes[8..8 + n].to_vec())
}

/// Reads an image file and its label file.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset, NetError> {
    let (imgs, rows, cols) = load_idx_images(images)?;
    let labs = load_idx_labels(labels)?;
    if imgs.len() != labs.len() {
        return Err(NetError::Format {
            path: labels.display().to_string(),
            offset: 4,
            msg: format!("{} labels for {} images", labs.len(), imgs.len()),
        });
    }
    Ok(Dataset { images: imgs, labels: labs, rows, cols })
}

pub fn write_idx_images(path: &Path, images: &[Vec<u8>], rows: usize, cols: usize) -> Result<(), NetError> {
    let mut buf = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGES, images.len() as u32, rows as u32, cols as u32] {
        buf.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        assert_eq!(img.len(), rows * cols, "image size");
        buf.extend_from_slice(img);
    }
    fs::write(path, buf).map_err(|source| NetError::Io { path: path.display().to_string(), source })
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<(), NetError> {
    let mut buf = Vec::with_capacity(8 + labels.len());
    buf.extend_from_slice(&LABELS.to_be_bytes());
    buf.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    buf.extend_from_slice(labels);
    fs::write(path, buf).map_err(|source| NetError::Io { path: path.display().to_string(), source })
}
