//! Big-endian IDX files: `u8` images (magic `0x00000803`) and labels
//! (magic `0x00000801`).

use std::fs;
use std::path::Path;

use hmrsel_core::{ImageTensor, LabeledDataset};

use crate::error::{HarnessError, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| HarnessError::io(path, e))
}

fn header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let need = 4 + 4 * dims;
    if bytes.len() < need {
        return Err(HarnessError::malformed(path, "truncated header"));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    if word(0) != magic {
        return Err(HarnessError::malformed(
            path,
            format!("magic {:#010x}, expected {magic:#010x}", word(0)),
        ));
    }
    let sizes: Vec<usize> = (1..=dims).map(|i| word(i) as usize).collect();
    let body: usize = sizes.iter().product();
    if bytes.len() != need + body {
        return Err(HarnessError::malformed(
            path,
            format!("{} payload bytes, header promises {body}", bytes.len() - need),
        ));
    }
    Ok(sizes)
}

/// Loads images scaled to `[0, 1]` and their labels; the class count is
/// one more than the largest label unless `num_classes` is given.
pub fn load_idx(images_path: &Path, labels_path: &Path, num_classes: Option<usize>) -> Result<LabeledDataset> {
    let ib = read(images_path)?;
    let lb = read(labels_path)?;
    let dims = header(&ib, images_path, IMAGES_MAGIC, 3)?;
    let labels_dims = header(&lb, labels_path, LABELS_MAGIC, 1)?;
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    if n != labels_dims[0] {
        return Err(HarnessError::CountMismatch {
            images: n,
            labels: labels_dims[0],
        });
    }
    if n == 0 || h == 0 || w == 0 {
        return Err(HarnessError::malformed(images_path, "empty image set"));
    }
    let labels: Vec<usize> = lb[8..].iter().map(|&l| usize::from(l)).collect();
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    let images = ib[16..]
        .chunks_exact(h * w)
        .map(|px| ImageTensor::new(h, w, 1, px.iter().map(|&p| f64::from(p) / 255.0).collect()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LabeledDataset::new(images, labels, classes)?)
}

/// Quantises pixels to `u8` and writes both files. Only single-channel
/// datasets with labels below 256 fit the format.
pub fn write_idx(data: &LabeledDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (h, w, c) = data
        .dims()
        .ok_or_else(|| HarnessError::Config("cannot write an empty dataset".into()))?;
    if c != 1 {
        return Err(HarnessError::Config(format!("IDX holds one channel, dataset has {c}")));
    }
    if data.num_classes() > 256 {
        return Err(HarnessError::Config("IDX labels are single bytes".into()));
    }
    let mut ib = Vec::with_capacity(16 + data.len() * h * w);
    for word in [IMAGES_MAGIC, data.len() as u32, h as u32, w as u32] {
        ib.extend_from_slice(&word.to_be_bytes());
    }
    for im in data.images() {
        ib.extend(im.data().iter().map(|&v| quantize(v)));
    }
    let mut lb = Vec::with_capacity(8 + data.len());
    for word in [LABELS_MAGIC, data.len() as u32] {
        lb.extend_from_slice(&word.to_be_bytes());
    }
    lb.extend(data.labels().iter().map(|&l| l as u8));
    fs::write(images_path, ib).map_err(|e| HarnessError::io(images_path, e))?;
    fs::write(labels_path, lb).map_err(|e| HarnessError::io(labels_path, e))
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
