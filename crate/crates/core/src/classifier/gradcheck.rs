use crate::classifier::{ClassifierModel, ParamSelection};
use crate::error::{Error, Result};
use crate::numerics::relative_error;

pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Largest relative error between the analytic gradients of `log P(y|x, θ)`
/// (every class, every input and parameter entry) and central differences
/// with the given step. Relative errors use a `1e-12` absolute floor.
pub fn finite_diff_check(model: &ClassifierModel, x: &[f64], step: f64) -> Result<f64> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let input = model.logprob_grad_input(x)?;
    let params = model.logprob_grad_params(x, ParamSelection::All)?;
    let k = model.class_count();
    let mut worst = 0.0_f64;

    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + step;
        let plus = model.log_probs(&xp)?;
        xp[i] = x[i] - step;
        let minus = model.log_probs(&xp)?;
        xp[i] = x[i];
        for y in 0..k {
            let fd = (plus[y] - minus[y]) / (2.0 * step);
            worst = worst.max(relative_error(input[(y, i)], fd));
        }
    }

    let flat = model.flatten();
    let mut shifted = model.clone();
    let mut unit = vec![0.0; flat.len()];
    for j in 0..flat.len() {
        unit[j] = 1.0;
        shifted.add_to_params(step, &unit)?;
        let plus = shifted.log_probs(x)?;
        shifted.add_to_params(-2.0 * step, &unit)?;
        let minus = shifted.log_probs(x)?;
        shifted = model.clone();
        unit[j] = 0.0;
        for y in 0..k {
            let fd = (plus[y] - minus[y]) / (2.0 * step);
            worst = worst.max(relative_error(params[(y, j)], fd));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_sigmoid_model_passes() {
        let model = ClassifierModel::random(&[5, 8, 8, 3], Activation::Sigmoid, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
        let err = finite_diff_check(&model, &x, DEFAULT_FD_STEP).unwrap();
        assert!(err < 1e-5, "max relative error {err}");
    }

    #[test]
    fn zero_weights_are_exact() {
        let base = ClassifierModel::random(&[3, 4, 2], Activation::Sigmoid, 0).unwrap();
        let model = base.with_params(&vec![0.0; base.param_count()]).unwrap();
        // the output-layer gradients are nonzero (hidden units sit at 0.5),
        // but everything below the zero weights vanishes on both sides
        let err = finite_diff_check(&model, &[0.2, 0.4, 0.6], DEFAULT_FD_STEP).unwrap();
        assert!(err < 1e-8);
    }

    #[test]
    fn smaller_step_is_more_accurate() {
        let model = ClassifierModel::random(&[4, 6, 3], Activation::Sigmoid, 5).unwrap();
        let x = [0.9, 0.1, 0.5, 0.3];
        let coarse = finite_diff_check(&model, &x, 1e-3).unwrap();
        let fine = finite_diff_check(&model, &x, 1e-4).unwrap();
        assert!(fine < coarse, "{fine} !< {coarse}");
    }

    #[test]
    fn rejects_non_positive_step() {
        let model = ClassifierModel::random(&[2, 2], Activation::Identity, 0).unwrap();
        assert!(finite_diff_check(&model, &[0.0, 0.0], 0.0).is_err());
    }
}
