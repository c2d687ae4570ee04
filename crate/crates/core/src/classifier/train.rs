use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierModel, LabeledDataset};
use crate::error::{Error, Result};

/// Samples per gradient work unit. Work units are reduced in a fixed order,
/// so the trained parameters do not depend on the thread count.
const WORK_UNIT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds the per-epoch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ClassifierModel,
    /// Mean cross-entropy over each epoch, measured before each batch update.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch SGD on the mean cross-entropy. The input model is left untouched.
pub fn train_sgd(model: &ClassifierModel, data: &LabeledDataset, config: &TrainConfig) -> Result<Trained> {
    if data.is_empty() {
        return Err(Error::InvalidDataset("cannot train on an empty dataset".into()));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            config.learning_rate
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    data.validate_for(model)?;

    let mut current = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let p = model.param_count();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            let units: Vec<(Vec<f64>, f64)> = batch
                .par_chunks(WORK_UNIT)
                .map(|unit| {
                    let mut grad = vec![0.0; p];
                    let mut loss = 0.0;
                    for &i in unit {
                        loss += current.accumulate_loss_gradient(data.image(i), data.label(i), &mut grad)?;
                    }
                    Ok((grad, loss))
                })
                .collect::<Result<_>>()?;

            let mut grad = vec![0.0; p];
            let mut loss = 0.0;
            for (g, l) in units {
                loss += l;
                for (acc, v) in grad.iter_mut().zip(&g) {
                    *acc += v;
                }
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                });
            }
            total += loss;
            current.add_to_params(-config.learning_rate / batch.len() as f64, &grad)?;
        }
        let mean = total / data.len() as f64;
        log::debug!("epoch {epoch}: mean cross-entropy {mean:.6}");
        epoch_losses.push(mean);
    }

    Ok(Trained {
        model: current,
        epoch_losses,
    })
}

/// Fraction of samples whose predicted class equals the label.
pub fn accuracy(model: &ClassifierModel, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let correct = (0..data.len())
        .into_par_iter()
        .map(|i| Ok(usize::from(model.predict(data.image(i))? == data.label(i))))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / data.len() as f64)
}
