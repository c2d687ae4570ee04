use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{ClassifierModel, ImageShape};
use crate::error::{Error, Result};
use crate::influence::{fi_from_scores, Objective};
use crate::manifold::{restrict_scores, InputPatch, PatchChannels, PATCH_SCALES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    /// One map per channel; each patch perturbs a single channel.
    PerChannel,
    /// Per-channel maps averaged into one value per pixel.
    Averaged,
}

/// Pixel-wise FI at several patch scales.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PixelFiMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub channel_mode: ChannelMode,
    /// Scale → values. `PerChannel` maps hold `channels × height × width`
    /// values (channel-major); `Averaged` maps hold `height × width`.
    pub maps: BTreeMap<usize, Vec<f64>>,
}

impl PixelFiMap {
    pub fn get(&self, scale: usize) -> Option<&[f64]> {
        self.maps.get(&scale).map(Vec::as_slice)
    }

    /// Channel-averaged values at `scale` (the map itself when averaged already).
    pub fn averaged(&self, scale: usize) -> Option<Vec<f64>> {
        let map = self.maps.get(&scale)?;
        Some(match self.channel_mode {
            ChannelMode::Averaged => map.clone(),
            ChannelMode::PerChannel => average_channels(map, self.channels, self.height * self.width),
        })
    }
}

fn average_channels(values: &[f64], channels: usize, pixels: usize) -> Vec<f64> {
    (0..pixels)
        .map(|q| (0..channels).map(|c| values[c * pixels + q]).sum::<f64>() / channels as f64)
        .collect()
}

/// FI of every pixel's `k × k` patch, for each requested scale.
///
/// Score gradients with respect to the whole image are computed once and
/// restricted per patch; the objective's label is fixed at the unperturbed
/// image. Patches at the border are clipped.
pub fn pixel_fi_map(
    model: &ClassifierModel,
    image: &[f64],
    shape: ImageShape,
    objective: Objective,
    scales: &[usize],
    channel_mode: ChannelMode,
) -> Result<PixelFiMap> {
    if shape.len() != model.input_dim() || image.len() != shape.len() {
        return Err(Error::Dimension(format!(
            "image of {} values with shape {}x{}x{} for a model taking {}",
            image.len(),
            shape.height,
            shape.width,
            shape.channels,
            model.input_dim()
        )));
    }
    if scales.is_empty() {
        return Err(Error::InvalidArgument("no patch scales requested".into()));
    }
    if let Some(bad) = scales.iter().find(|k| !PATCH_SCALES.contains(k)) {
        return Err(Error::InvalidArgument(format!(
            "patch scale must be one of {PATCH_SCALES:?}, got {bad}"
        )));
    }

    let scores = model.input_score_gradients(image)?;
    let label = objective.label(&scores.probs)?;
    let pixels = shape.pixels();
    let mut maps = BTreeMap::new();
    for &scale in scales {
        let values = (0..shape.channels * pixels)
            .into_par_iter()
            .map(|flat| {
                let (channel, q) = (flat / pixels, flat % pixels);
                let patch = InputPatch::new(q / shape.width, q % shape.width, scale, shape)
                    .with_channels(PatchChannels::Single(channel));
                Ok(fi_from_scores(&restrict_scores(&scores, &patch.indices()), label)?.fi)
            })
            .collect::<Result<Vec<f64>>>()?;
        let values = match channel_mode {
            ChannelMode::PerChannel => values,
            ChannelMode::Averaged => average_channels(&values, shape.channels, pixels),
        };
        maps.insert(scale, values);
    }
    Ok(PixelFiMap {
        height: shape.height,
        width: shape.width,
        channels: shape.channels,
        channel_mode,
        maps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Activation;
    use crate::influence::fi;
    use crate::manifold::PerturbationTarget;
    use crate::numerics::relative_error;

    fn image(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 7) % 11) as f64 / 10.0).collect()
    }

    #[test]
    fn scale_one_matches_single_pixel_fi() {
        let shape = ImageShape::grayscale(4, 4);
        let model = ClassifierModel::random(&[16, 6, 3], Activation::Sigmoid, 9).unwrap();
        let x = image(16);
        let map = pixel_fi_map(&model, &x, shape, Objective::CrossEntropyPred, &[1, 3], ChannelMode::Averaged).unwrap();
        for q in 0..16 {
            let target = PerturbationTarget::InputPatch(InputPatch::new(q / 4, q % 4, 1, shape));
            let direct = fi(&model, &x, &target, Objective::CrossEntropyPred).unwrap();
            assert!(relative_error(map.get(1).unwrap()[q], direct) < 1e-12);
            let target = PerturbationTarget::InputPatch(InputPatch::new(q / 4, q % 4, 3, shape));
            let direct = fi(&model, &x, &target, Objective::CrossEntropyPred).unwrap();
            assert!(relative_error(map.get(3).unwrap()[q], direct) < 1e-12);
        }
    }

    #[test]
    fn covering_patch_equals_full_input() {
        let shape = ImageShape::grayscale(3, 3);
        let model = ClassifierModel::random(&[9, 5, 4], Activation::Sigmoid, 2).unwrap();
        let x = image(9);
        let map = pixel_fi_map(&model, &x, shape, Objective::CrossEntropyPred, &[3], ChannelMode::Averaged).unwrap();
        let full = fi(&model, &x, &PerturbationTarget::Input, Objective::CrossEntropyPred).unwrap();
        assert!(relative_error(map.get(3).unwrap()[4], full) < 1e-9);
    }

    #[test]
    fn input_blind_model_gives_zero_map() {
        let shape = ImageShape::grayscale(3, 3);
        let base = ClassifierModel::random(&[9, 4, 3], Activation::Sigmoid, 4).unwrap();
        let mut params = base.flatten();
        for v in &mut params[..9 * 4] {
            *v = 0.0;
        }
        let model = base.with_params(&params).unwrap();
        let map = pixel_fi_map(&model, &image(9), shape, Objective::CrossEntropyPred, &PATCH_SCALES, ChannelMode::Averaged)
            .unwrap();
        assert_eq!(map.maps.len(), 4);
        assert!(map.maps.values().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_modes_agree() {
        let shape = ImageShape::new(3, 3, 3);
        let model = ClassifierModel::random(&[27, 5, 3], Activation::Sigmoid, 6).unwrap();
        let x = image(27);
        let per = pixel_fi_map(&model, &x, shape, Objective::CrossEntropyPred, &[1], ChannelMode::PerChannel).unwrap();
        let avg = pixel_fi_map(&model, &x, shape, Objective::CrossEntropyPred, &[1], ChannelMode::Averaged).unwrap();
        assert_eq!(per.get(1).unwrap().len(), 27);
        assert_eq!(avg.get(1).unwrap().len(), 9);
        assert_eq!(per.averaged(1).unwrap(), avg.get(1).unwrap());
    }

    #[test]
    fn independent_of_thread_count() {
        let shape = ImageShape::grayscale(5, 5);
        let model = ClassifierModel::random(&[25, 6, 3], Activation::Relu, 8).unwrap();
        let x = image(25);
        let run = || pixel_fi_map(&model, &x, shape, Objective::CrossEntropyPred, &PATCH_SCALES, ChannelMode::Averaged).unwrap();
        let a = run();
        let b = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_scales_and_shapes() {
        let shape = ImageShape::grayscale(2, 2);
        let model = ClassifierModel::random(&[4, 2], Activation::Identity, 0).unwrap();
        let x = image(4);
        assert!(pixel_fi_map(&model, &x, shape, Objective::CrossEntropyPred, &[2], ChannelMode::Averaged).is_err());
        assert!(pixel_fi_map(&model, &x, shape, Objective::CrossEntropyPred, &[], ChannelMode::Averaged).is_err());
        let wrong = ImageShape::grayscale(3, 3);
        assert!(pixel_fi_map(&model, &x, wrong, Objective::CrossEntropyPred, &[1], ChannelMode::Averaged).is_err());
    }
}
