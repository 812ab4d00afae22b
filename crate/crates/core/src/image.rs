use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// An H×W×C image stored row-major with channels innermost, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidImage(format!(
                "zero-sized image {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: data.len(),
            });
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::from_clamped(height, width, channels, alloc::vec![0.0; height * width * channels])
    }

    /// Builds an image from a pixel function; values are clamped to [0, 1].
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::from_clamped(height, width, channels, data)
    }

    /// Wraps raw data, clamping every value into [0, 1]. NaN maps to 0.
    pub(crate) fn from_clamped(
        height: usize,
        width: usize,
        channels: usize,
        mut data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Images with integer class labels. All images share one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: Vec<ImageTensor>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(images: Vec<ImageTensor>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::InvalidDataset("zero classes".into()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidDataset(format!(
                "label {l} not below class count {num_classes}"
            )));
        }
        if let Some(first) = images.first() {
            if images.iter().any(|im| im.dims() != first.dims()) {
                return Err(Error::InvalidDataset("images differ in shape".into()));
            }
        }
        Ok(Self {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn images(&self) -> &[ImageTensor] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &ImageTensor {
        &self.images[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Shape of the images, `None` when empty.
    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(ImageTensor::dims)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Splits into `[0, at)` and `[at, len)`.
    pub fn split_at(&self, at: usize) -> (Self, Self) {
        let at = at.min(self.len());
        let head: Vec<usize> = (0..at).collect();
        let tail: Vec<usize> = (at..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_bad_images() {
        assert!(matches!(
            ImageTensor::new(2, 2, 1, vec![0.0; 3]),
            Err(Error::DimensionMismatch { expected: 4, found: 3 })
        ));
        assert!(ImageTensor::new(1, 2, 1, vec![0.0, 1.5]).is_err());
        assert!(ImageTensor::new(1, 2, 1, vec![0.0, f64::NAN]).is_err());
        assert!(ImageTensor::new(1, 2, 1, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn from_fn_clamps() {
        let im = ImageTensor::from_fn(1, 3, 1, |_, x, _| x as f64 - 1.0);
        assert_eq!(im.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn dataset_invariants() {
        let a = ImageTensor::zeros(2, 2, 1);
        let b = ImageTensor::zeros(3, 2, 1);
        assert!(LabeledDataset::new(vec![a.clone()], vec![], 2).is_err());
        assert!(LabeledDataset::new(vec![a.clone()], vec![2], 2).is_err());
        assert!(LabeledDataset::new(vec![a.clone(), b], vec![0, 1], 2).is_err());
        let ds = LabeledDataset::new(vec![a.clone(), a], vec![0, 1], 2).unwrap();
        let (h, t) = ds.split_at(1);
        assert_eq!((h.len(), t.len()), (1, 1));
        assert_eq!(t.label(0), 1);
    }
}
