use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::classifier::{argmax, ClassifierModel, ImageShape};
use crate::error::{Error, Result};
use crate::experiments::pixels::{pixel_fi_map, ChannelMode};
use crate::influence::Objective;

/// A new value for the attacked pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum ValueCandidate {
    /// Overwrite with a fixed value.
    Set(f64),
    /// Add to the current value, clipped to `[0, 1]`.
    Offset(f64),
}

impl ValueCandidate {
    pub fn apply(self, current: f64) -> f64 {
        match self {
            ValueCandidate::Set(v) => v,
            ValueCandidate::Offset(d) => current + d,
        }
        .clamp(0.0, 1.0)
    }
}

pub const DEFAULT_VALUE_GRID: [ValueCandidate; 4] = [
    ValueCandidate::Set(0.0),
    ValueCandidate::Set(1.0),
    ValueCandidate::Offset(-0.5),
    ValueCandidate::Offset(0.5),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackOutcome {
    pub row: usize,
    pub col: usize,
    /// Class predicted for the original image.
    pub y_pred: usize,
    pub p_before: f64,
    /// Probability of the original prediction after the attack.
    pub p_after: f64,
    /// Prediction for the attacked image.
    pub y_after: usize,
    pub candidate: ValueCandidate,
    #[serde(skip)]
    pub image: Vec<f64>,
}

impl AttackOutcome {
    pub fn drop(&self) -> f64 {
        self.p_before - self.p_after
    }
}

fn check_inputs(model: &ClassifierModel, image: &[f64], shape: ImageShape, grid: &[ValueCandidate]) -> Result<()> {
    if image.len() != shape.len() || shape.len() != model.input_dim() {
        return Err(Error::Dimension(format!(
            "image of {} values, shape holds {}, model expects {}",
            image.len(),
            shape.len(),
            model.input_dim()
        )));
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty value grid".into()));
    }
    for c in grid {
        let ok = match *c {
            ValueCandidate::Set(v) => (0.0..=1.0).contains(&v),
            ValueCandidate::Offset(d) => d.is_finite(),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid value candidate {c:?}")));
        }
    }
    Ok(())
}

/// Tries every candidate at one pixel (all channels) and keeps the one that
/// lowers the original prediction's probability the most. Candidates that
/// leave the pixel unchanged are skipped; ties go to the earlier candidate.
pub fn attack_pixel(
    model: &ClassifierModel,
    image: &[f64],
    shape: ImageShape,
    row: usize,
    col: usize,
    grid: &[ValueCandidate],
) -> Result<AttackOutcome> {
    check_inputs(model, image, shape, grid)?;
    if row >= shape.height || col >= shape.width {
        return Err(Error::InvalidArgument(format!(
            "pixel ({row}, {col}) outside a {}x{} image",
            shape.height, shape.width
        )));
    }
    let probs = model.forward(image)?;
    let y_pred = argmax(&probs);
    let positions: Vec<usize> = (0..shape.channels).map(|c| shape.index(c, row, col)).collect();

    let mut best: Option<AttackOutcome> = None;
    for &candidate in grid {
        let mut attacked = image.to_vec();
        for &i in &positions {
            attacked[i] = candidate.apply(image[i]);
        }
        if positions.iter().all(|&i| attacked[i] == image[i]) {
            continue;
        }
        let after = model.forward(&attacked)?;
        if best.as_ref().map_or(true, |b| after[y_pred] < b.p_after) {
            best = Some(AttackOutcome {
                row,
                col,
                y_pred,
                p_before: probs[y_pred],
                p_after: after[y_pred],
                y_after: argmax(&after),
                candidate,
                image: attacked,
            });
        }
    }
    best.ok_or_else(|| {
        Error::InvalidArgument(format!("no candidate changes pixel ({row}, {col})"))
    })
}

/// Attacks the pixel with the largest scale-1 (channel-averaged) FI under the
/// predicted-label objective. Ties go to the first pixel in row-major order.
pub fn one_pixel_attack(
    model: &ClassifierModel,
    image: &[f64],
    shape: ImageShape,
    grid: &[ValueCandidate],
) -> Result<AttackOutcome> {
    check_inputs(model, image, shape, grid)?;
    let map = pixel_fi_map(model, image, shape, Objective::CrossEntropyPred, &[1], ChannelMode::Averaged)?;
    let q = argmax(map.get(1).expect("scale 1 requested"));
    attack_pixel(model, image, shape, q / shape.width, q % shape.width, grid)
}

/// Baseline: attacks `trials` pixels drawn uniformly (with replacement).
pub fn random_pixel_attacks(
    model: &ClassifierModel,
    image: &[f64],
    shape: ImageShape,
    grid: &[ValueCandidate],
    trials: usize,
    seed: u64,
) -> Result<Vec<AttackOutcome>> {
    check_inputs(model, image, shape, grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| {
            let q = rng.gen_range(0..shape.pixels());
            attack_pixel(model, image, shape, q / shape.width, q % shape.width, grid)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{Activation, Layer};
    use crate::numerics::DenseMatrix;

    fn linear_model(seed: u64) -> ClassifierModel {
        let base = ClassifierModel::random(&[16, 3], Activation::Identity, seed).unwrap();
        let l = &base.layers()[0];
        // stretch the weights so pixel sensitivities differ clearly
        let w = DenseMatrix::from_fn(3, 16, |r, c| l.weights()[(r, c)] * (1.0 + c as f64));
        ClassifierModel::new(vec![Layer::new(w, l.bias().to_vec(), Activation::Identity).unwrap()]).unwrap()
    }

    fn image() -> Vec<f64> {
        (0..16).map(|i| ((i * 5) % 9) as f64 / 8.0).collect()
    }

    /// Single-pixel FI by hand: the metric is the scalar `Σ_y P(y) s_y²`
    /// with `s_y = ∂ log P(y)/∂x_q = W[y, q] − Σ_c P(c) W[c, q]`.
    fn dense_pixel_fi(model: &ClassifierModel, x: &[f64], q: usize) -> f64 {
        let w = model.layers()[0].weights();
        let p = model.forward(x).unwrap();
        let y = argmax(&p);
        let mean: f64 = (0..3).map(|c| p[c] * w[(c, q)]).sum();
        let s: Vec<f64> = (0..3).map(|c| w[(c, q)] - mean).collect();
        let metric: f64 = (0..3).map(|c| p[c] * s[c] * s[c]).sum();
        if metric <= 0.0 {
            0.0
        } else {
            s[y] * s[y] / metric
        }
    }

    #[test]
    fn changes_exactly_one_pixel_and_stays_in_range() {
        let shape = ImageShape::grayscale(4, 4);
        let model = ClassifierModel::random(&[16, 5, 3], Activation::Sigmoid, 12).unwrap();
        let x = image();
        let out = one_pixel_attack(&model, &x, shape, &DEFAULT_VALUE_GRID).unwrap();
        let changed: Vec<usize> = (0..16).filter(|&i| out.image[i] != x[i]).collect();
        assert_eq!(changed, vec![out.row * 4 + out.col]);
        assert_eq!(out.image.len(), x.len());
        assert!(out.image.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn selects_argmax_of_scale_one_map() {
        let shape = ImageShape::grayscale(4, 4);
        let model = ClassifierModel::random(&[16, 5, 3], Activation::Sigmoid, 3).unwrap();
        let x = image();
        let map = pixel_fi_map(&model, &x, shape, Objective::CrossEntropyPred, &[1], ChannelMode::Averaged).unwrap();
        let q = argmax(map.get(1).unwrap());
        let out = one_pixel_attack(&model, &x, shape, &DEFAULT_VALUE_GRID).unwrap();
        assert_eq!((out.row, out.col), (q / 4, q % 4));
    }

    #[test]
    fn linear_model_matches_dense_oracle() {
        let shape = ImageShape::grayscale(4, 4);
        for seed in 0..5 {
            let model = linear_model(seed);
            let x = image();
            let oracle: Vec<f64> = (0..16).map(|q| dense_pixel_fi(&model, &x, q)).collect();
            let out = one_pixel_attack(&model, &x, shape, &DEFAULT_VALUE_GRID).unwrap();
            assert_eq!(out.row * 4 + out.col, argmax(&oracle), "seed {seed}");
        }
    }

    #[test]
    fn keeps_the_most_damaging_candidate() {
        let shape = ImageShape::grayscale(4, 4);
        let model = linear_model(1);
        let x = image();
        let out = attack_pixel(&model, &x, shape, 2, 1, &DEFAULT_VALUE_GRID).unwrap();
        let q = 2 * 4 + 1;
        for c in DEFAULT_VALUE_GRID {
            let mut alt = x.clone();
            alt[q] = c.apply(x[q]);
            if alt[q] != x[q] {
                assert!(out.p_after <= model.forward(&alt).unwrap()[out.y_pred]);
            }
        }
    }

    #[test]
    fn multichannel_pixels_change_together() {
        let shape = ImageShape::new(2, 2, 3);
        let model = ClassifierModel::random(&[12, 4, 3], Activation::Sigmoid, 5).unwrap();
        let x: Vec<f64> = (0..12).map(|i| (i % 5) as f64 / 4.0).collect();
        let out = one_pixel_attack(&model, &x, shape, &[ValueCandidate::Set(0.5)]).unwrap();
        for c in 0..3 {
            for q in 0..4 {
                let i = c * 4 + q;
                if q == out.row * 2 + out.col {
                    assert_eq!(out.image[i], 0.5);
                } else {
                    assert_eq!(out.image[i], x[i]);
                }
            }
        }
    }

    #[test]
    fn random_trials_are_reproducible() {
        let shape = ImageShape::grayscale(4, 4);
        let model = linear_model(2);
        let x = image();
        let a = random_pixel_attacks(&model, &x, shape, &DEFAULT_VALUE_GRID, 20, 7).unwrap();
        let b = random_pixel_attacks(&model, &x, shape, &DEFAULT_VALUE_GRID, 20, 7).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_grids() {
        let shape = ImageShape::grayscale(4, 4);
        let model = linear_model(0);
        let x = image();
        assert!(one_pixel_attack(&model, &x, shape, &[]).is_err());
        assert!(one_pixel_attack(&model, &x, shape, &[ValueCandidate::Set(1.5)]).is_err());
        // a pixel already at 0 cannot be changed by Set(0) alone
        assert!(attack_pixel(&model, &x, shape, 0, 0, &[ValueCandidate::Set(0.0)]).is_err());
    }
}
