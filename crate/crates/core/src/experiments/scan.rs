use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{ClassifierModel, LabeledDataset};
use crate::error::Result;
use crate::influence::{fi_from_scores, score_sample, FiValue, InfluenceRecord, Measure, Objective, ObjectiveKind};
use crate::manifold::{class_scores, restrict_scores, PerturbationTarget};

/// Scores every sample of `data`; rows come back ordered by sample id.
pub fn score_dataset(
    model: &ClassifierModel,
    data: &LabeledDataset,
    target: &PerturbationTarget,
    objective: ObjectiveKind,
    measures: &[Measure],
) -> Result<Vec<InfluenceRecord>> {
    data.validate_for(model)?;
    let mut records = (0..data.len())
        .into_par_iter()
        .map(|i| score_sample(model, data.image(i), data.id(i), Some(data.label(i)), target, objective, measures))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.sample_id);
    Ok(records)
}

/// FI of each trainable layer alongside the FI over all parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSensitivity {
    pub per_layer: Vec<FiValue>,
    pub all_params: FiValue,
}

/// Layer-wise FI for one sample. Each layer's score gradients are the
/// corresponding columns of the all-parameter gradients.
pub fn layer_sensitivity(model: &ClassifierModel, x: &[f64], objective: Objective) -> Result<LayerSensitivity> {
    let scores = class_scores(model, x, &PerturbationTarget::AllParams)?;
    let label = objective.label(&scores.probs)?;
    let per_layer = (0..model.layer_count())
        .map(|l| {
            let range: Vec<usize> = model.layer_param_range(l)?.collect();
            fi_from_scores(&restrict_scores(&scores, &range), label)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LayerSensitivity {
        per_layer,
        all_params: fi_from_scores(&scores, label)?,
    })
}
