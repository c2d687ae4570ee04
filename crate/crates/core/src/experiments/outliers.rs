use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{ImageShape, LabeledDataset};
use crate::error::{Error, Result};

/// Synthetic outliers: the pixel-wise maximum of two training images of
/// different classes, the second shifted by up to `max_shift` pixels along
/// each axis, labelled with either source class at random.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlierSpec {
    pub count: usize,
    pub max_shift: usize,
    pub seed: u64,
}

impl OutlierSpec {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            max_shift: 4,
            seed,
        }
    }
}

/// Where a synthetic outlier came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlierOrigin {
    pub base_id: usize,
    pub shifted_id: usize,
    pub dx: i64,
    pub dy: i64,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct SimulatedOutliers {
    pub dataset: LabeledDataset,
    pub origins: Vec<OutlierOrigin>,
}

/// Translates a single-channel image by `(dx, dy)` pixels, filling with zeros.
pub fn shift_image(image: &[f64], shape: ImageShape, dx: i64, dy: i64) -> Vec<f64> {
    let (h, w) = (shape.height as i64, shape.width as i64);
    let mut out = vec![0.0; image.len()];
    for r in 0..h {
        for c in 0..w {
            let (sr, sc) = (r - dy, c - dx);
            if (0..h).contains(&sr) && (0..w).contains(&sc) {
                out[(r * w + c) as usize] = image[(sr * w + sc) as usize];
            }
        }
    }
    out
}

pub fn overlay_max(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x.max(*y)).collect()
}

pub fn simulate_outliers(train: &LabeledDataset, spec: &OutlierSpec) -> Result<SimulatedOutliers> {
    let shape = train.shape();
    if shape.channels != 1 {
        return Err(Error::InvalidDataset("outlier simulation needs single-channel images".into()));
    }
    let n = train.len();
    let mut per_class = vec![0usize; train.class_count()];
    for &y in train.labels() {
        per_class[y] += 1;
    }
    if per_class.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InvalidDataset("outlier simulation needs at least two classes".into()));
    }
    // ordered (base, shifted) pairs with different labels
    let available = n * n - per_class.iter().map(|c| c * c).sum::<usize>();
    if spec.count > available {
        return Err(Error::InvalidArgument(format!(
            "requested {} outliers but only {available} cross-class pairs exist",
            spec.count
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shift = spec.max_shift as i64;
    let mut used = HashSet::with_capacity(spec.count);
    let mut images = Vec::with_capacity(spec.count);
    let mut labels = Vec::with_capacity(spec.count);
    let mut origins = Vec::with_capacity(spec.count);
    while images.len() < spec.count {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if train.label(a) == train.label(b) || !used.insert((a, b)) {
            continue;
        }
        let dx = rng.gen_range(-shift..=shift);
        let dy = rng.gen_range(-shift..=shift);
        let label = if rng.gen_bool(0.5) { train.label(a) } else { train.label(b) };
        let shifted = shift_image(train.image(b), shape, dx, dy);
        images.push(overlay_max(train.image(a), &shifted));
        labels.push(label);
        origins.push(OutlierOrigin {
            base_id: train.id(a),
            shifted_id: train.id(b),
            dx,
            dy,
            label,
        });
    }
    Ok(SimulatedOutliers {
        dataset: LabeledDataset::new(images, labels, shape)?,
        origins,
    })
}
