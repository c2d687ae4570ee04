use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::error::{Error, Result};

/// Image geometry. Pixel values are stored channel-major (all of channel 0,
/// then channel 1, …), each channel row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn grayscale(height: usize, width: usize) -> Self {
        Self::new(height, width, 1)
    }

    /// A flat vector of length `n` viewed as a `1 × n` single-channel image.
    pub fn flat(n: usize) -> Self {
        Self::new(1, n, 1)
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        channel * self.pixels() + row * self.width + col
    }
}

/// Images in `[0, 1]` with class labels and stable per-sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: Vec<Vec<f64>>,
    labels: Vec<usize>,
    ids: Vec<usize>,
    shape: ImageShape,
}

impl LabeledDataset {
    /// Ids default to positions `0..n`.
    pub fn new(images: Vec<Vec<f64>>, labels: Vec<usize>, shape: ImageShape) -> Result<Self> {
        let ids = (0..images.len()).collect();
        Self::with_ids(images, labels, ids, shape)
    }

    pub fn with_ids(
        images: Vec<Vec<f64>>,
        labels: Vec<usize>,
        ids: Vec<usize>,
        shape: ImageShape,
    ) -> Result<Self> {
        if images.len() != labels.len() || ids.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} images, {} labels and {} ids",
                images.len(),
                labels.len(),
                ids.len()
            )));
        }
        for (i, image) in images.iter().enumerate() {
            if image.len() != shape.len() {
                return Err(Error::InvalidDataset(format!(
                    "image {i} has {} values, shape needs {}",
                    image.len(),
                    shape.len()
                )));
            }
            if image.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidDataset(format!(
                    "image {i} has values outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            images,
            labels,
            ids,
            shape,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i]
    }

    pub fn images(&self) -> &[Vec<f64>] {
        &self.images
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn id(&self, i: usize) -> usize {
        self.ids[i]
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Number of classes implied by the labels (largest label plus one).
    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// The first `n` samples (or all, if fewer).
    pub fn head(&self, n: usize) -> Self {
        self.select(&(0..n.min(self.len())).collect::<Vec<_>>())
    }

    /// Samples at the given positions, keeping their ids.
    pub fn select(&self, positions: &[usize]) -> Self {
        Self {
            images: positions.iter().map(|&i| self.images[i].clone()).collect(),
            labels: positions.iter().map(|&i| self.labels[i]).collect(),
            ids: positions.iter().map(|&i| self.ids[i]).collect(),
            shape: self.shape,
        }
    }

    /// Appends `other`, renumbering its ids to follow this set's largest id.
    pub fn concat(&self, other: &LabeledDataset) -> Result<Self> {
        if other.shape != self.shape {
            return Err(Error::InvalidDataset("cannot join datasets of different shapes".into()));
        }
        let next = self.ids.iter().max().map_or(0, |m| m + 1);
        let mut out = self.clone();
        out.images.extend(other.images.iter().cloned());
        out.labels.extend_from_slice(&other.labels);
        out.ids.extend((0..other.len()).map(|i| next + i));
        Ok(out)
    }

    /// Checks input width and labels against a model.
    pub fn validate_for(&self, model: &ClassifierModel) -> Result<()> {
        if self.shape.len() != model.input_dim() {
            return Err(Error::Dimension(format!(
                "images have {} values, model expects {}",
                self.shape.len(),
                model.input_dim()
            )));
        }
        if let Some(bad) = self.labels.iter().find(|&&y| y >= model.class_count()) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} out of range for {} classes",
                model.class_count()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_lengths_and_range() {
        let shape = ImageShape::grayscale(1, 2);
        assert!(LabeledDataset::new(vec![vec![0.0, 1.0]], vec![], shape).is_err());
        assert!(LabeledDataset::new(vec![vec![0.0]], vec![0], shape).is_err());
        assert!(LabeledDataset::new(vec![vec![0.0, 1.5]], vec![0], shape).is_err());
        let ds = LabeledDataset::new(vec![vec![0.0, 1.0], vec![0.5, 0.5]], vec![1, 3], shape).unwrap();
        assert_eq!(ds.class_count(), 4);
        assert_eq!(ds.ids(), &[0, 1]);
    }

    #[test]
    fn concat_renumbers_ids() {
        let shape = ImageShape::flat(1);
        let a = LabeledDataset::new(vec![vec![0.0], vec![1.0]], vec![0, 1], shape).unwrap();
        let b = LabeledDataset::new(vec![vec![0.5]], vec![1], shape).unwrap();
        let joined = a.concat(&b).unwrap();
        assert_eq!(joined.ids(), &[0, 1, 2]);
        assert_eq!(joined.select(&[2]).ids(), &[2]);
    }

    #[test]
    fn channel_major_indexing() {
        let shape = ImageShape::new(2, 3, 3);
        assert_eq!(shape.index(0, 1, 2), 5);
        assert_eq!(shape.index(2, 0, 0), 12);
    }
}
